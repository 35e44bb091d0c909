"""Independent oracles: linearized junction problem, frame-ODE integrator, classical constants.

Nothing here calls the cross-section FEM or the optimizer; only the network
data model and elementary linear algebra are shared.
"""
from dataclasses import dataclass
import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import expm

from .model import cumulative_load


class ReferenceError(RuntimeError):
    pass


def _hat(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


# ------------------------------------------------------------- linearization


@dataclass
class LinearSolution:
    x: list  # per rod node abscissae
    u: list  # displacement from the straight state, (N+1, 3)
    omega: list  # infinitesimal rotation, (N+1, 3)
    q: list  # contact couple, (N+1, 3)
    y_ref: list  # straight reference centerline, anchored

    @property
    def y(self):
        return [a + b for a, b in zip(self.y_ref, self.u)]


def solve_linearized(network, N=400):
    """Small-load response about the straight state ``R_i = Q_i``.

    Unknowns per rod and node are the couple ``q``, rotation ``omega`` and
    displacement ``u``, discretized by the trapezoid rule:

        q' = -t x p,  q(L) = 0
        omega' = Q H^-1 Q^T q
        u' = omega x t

    with common ``omega(0)`` and ``u(0)``, the anchor ``u_1(L_1) = 0``, and the
    junction rotation fixed by the second-order torque balance
    ``sum_i int (omega_i x t_i) x p_i = 0`` (the first-order one,
    ``sum_i int t_i x p_i = 0``, must already hold for the loads).
    """
    n = len(network)
    rods = network.rods
    xs = [np.linspace(0.0, r.length, N + 1) for r in rods]
    ps = [cumulative_load(r, x) for r, x in zip(rods, xs)]
    ts = [r.tangent for r in rods]
    w = [np.full(N + 1, r.length / N) for r in rods]
    for wi in w:
        wi[0] *= 0.5
        wi[-1] *= 0.5
    L1 = rods[0].length
    y_ref = [x[:, None] * t[None, :] - L1 * ts[0] for x, t in zip(xs, ts)]
    if network.is_unloaded():
        # the torque rows vanish identically; the straight state is the answer
        zero = [np.zeros((N + 1, 3)) for _ in rods]
        return LinearSolution(xs, zero, [z.copy() for z in zero], [z.copy() for z in zero], y_ref)
    moment = sum(np.einsum("k,kj->j", wi, np.cross(t, p)) for wi, t, p in zip(w, ts, ps))
    scale = max(1e-300, max(float(np.abs(p).max()) * r.length for p, r in zip(ps, rods)))
    if np.linalg.norm(moment) > 1e-9 * scale:
        raise ReferenceError("loads have a net moment about the junction in the straight state; no small-load branch")

    nv = 9 * (N + 1)  # per rod: q, omega, u at each node

    def Iq(i, k):
        return i * nv + 9 * k

    def Iw(i, k):
        return i * nv + 9 * k + 3

    def Iu(i, k):
        return i * nv + 9 * k + 6

    rows, cols, vals = [], [], []
    rhs = []
    r = 0

    def put(row, col, block):
        block = np.atleast_2d(block)
        for a in range(3):
            for b in range(3):
                if block[a, b] != 0.0:
                    rows.append(row + a)
                    cols.append(col + b)
                    vals.append(block[a, b])

    I3 = np.eye(3)
    for i, rod in enumerate(rods):
        h = rod.length / N
        t = ts[i]
        C = rod.frame @ np.linalg.inv(rod.stiffness) @ rod.frame.T
        T = _hat(t)
        tp = np.cross(t, ps[i])
        for k in range(N):
            put(r, Iq(i, k + 1), I3)
            put(r, Iq(i, k), -I3)
            rhs.append(-0.5 * h * (tp[k] + tp[k + 1]))
            r += 3
            put(r, Iw(i, k + 1), I3)
            put(r, Iw(i, k), -I3)
            put(r, Iq(i, k + 1), -0.5 * h * C)
            put(r, Iq(i, k), -0.5 * h * C)
            rhs.append(np.zeros(3))
            r += 3
            # omega x t = -T omega
            put(r, Iu(i, k + 1), I3)
            put(r, Iu(i, k), -I3)
            put(r, Iw(i, k + 1), 0.5 * h * T)
            put(r, Iw(i, k), 0.5 * h * T)
            rhs.append(np.zeros(3))
            r += 3
        put(r, Iq(i, N), I3)
        rhs.append(np.zeros(3))
        r += 3
    for i in range(1, n):
        put(r, Iw(i, 0), I3)
        put(r, Iw(0, 0), -I3)
        rhs.append(np.zeros(3))
        r += 3
        put(r, Iu(i, 0), I3)
        put(r, Iu(0, 0), -I3)
        rhs.append(np.zeros(3))
        r += 3
    put(r, Iu(0, N), I3)
    rhs.append(np.zeros(3))
    r += 3
    for i in range(n):
        T = _hat(ts[i])
        for k in range(N + 1):
            put(r, Iw(i, k), w[i][k] * _hat(ps[i][k]) @ T)
    rhs.append(np.zeros(3))
    r += 3

    A = sp.csc_matrix((vals, (rows, cols)), shape=(r, n * nv))
    b = np.concatenate(rhs)
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise ReferenceError(f"singular linearized system: {exc}") from exc
    z = lu.solve(b)
    if not np.all(np.isfinite(z)) or np.linalg.norm(A @ z - b) > 1e-8 * (1.0 + np.linalg.norm(b)):
        raise ReferenceError("singular linearized system (degenerate geometry or loads)")
    Z = z.reshape(n, N + 1, 9)
    return LinearSolution(xs, [Z[i, :, 6:9] for i in range(n)], [Z[i, :, 3:6] for i in range(n)], [Z[i, :, 0:3] for i in range(n)], y_ref)


# ------------------------------------------------------------ frame ODE


def integrate_single_rod(R0, s_profile, L, N):
    """Integrate ``R' = hat(s(x)) R``, ``y' = R e1`` from ``R(0) = R0``, ``y(0) = 0``.

    ``s_profile`` maps an array of abscissae to spatial strains ``(m, 3)``.
    The frame uses the fourth-order Magnus step on half-steps; the centerline
    uses Simpson's rule over each full step.  Returns node rotations
    ``(N+1, 3, 3)`` and positions ``(N+1, 3)``.
    """
    M = 2 * N
    h = L / M
    g = 0.5 - math.sqrt(3.0) / 6.0
    x0 = np.arange(M) * h
    a1 = np.asarray(s_profile(x0 + g * h), dtype=float).reshape(M, 3)
    a2 = np.asarray(s_profile(x0 + (1.0 - g) * h), dtype=float).reshape(M, 3)
    omega = 0.5 * h * (a1 + a2) + (math.sqrt(3.0) / 12.0) * h * h * np.cross(a2, a1)
    R = np.empty((M + 1, 3, 3))
    R[0] = np.asarray(R0, dtype=float)
    for k in range(M):
        R[k + 1] = expm(_hat(omega[k])) @ R[k]
    d = R[:, :, 0]
    y = np.zeros((N + 1, 3))
    H = 2.0 * h
    y[1:] = np.cumsum(H / 6.0 * (d[0:-1:2] + 4.0 * d[1::2] + d[2::2]), axis=0)
    return R[::2].copy(), y


# ------------------------------------------------------- classical formulas


def _torsion_constant_rectangle(a, b, terms=10):
    """Saint-Venant torsion constant of an ``a x b`` rectangle (series, odd n)."""
    long_, short = max(a, b), min(a, b)
    n = 2 * np.arange(terms) + 1
    series = np.sum(np.tanh(n * math.pi * long_ / (2.0 * short)) / n**5)
    return long_ * short**3 * (1.0 / 3.0 - 64.0 / math.pi**5 * (short / long_) * series)


def classical_constants(tag, lam, mu, **dims):
    """Torsional rigidity ``mu K`` and bending stiffnesses for named sections.

    ``bending2 = E int x3^2`` and ``bending3 = E int x2^2`` with
    ``E = mu (3 lam + 2 mu) / (lam + mu)``.  Circle takes ``radius``;
    rectangle takes ``a`` (extent along x2) and ``b`` (along x3).
    """
    E = mu * (3.0 * lam + 2.0 * mu) / (lam + mu)
    if tag == "circle":
        r = float(dims["radius"])
        J = math.pi * r**4 / 2.0
        I = math.pi * r**4 / 4.0
        return {"torsion": mu * J, "bending2": E * I, "bending3": E * I, "young": E}
    if tag == "rectangle":
        a, b = float(dims["a"]), float(dims["b"])
        K = _torsion_constant_rectangle(a, b)
        return {"torsion": mu * K, "bending2": E * a * b**3 / 12.0, "bending3": E * b * a**3 / 12.0, "young": E}
    raise ValueError(f"unsupported section tag {tag!r}")
