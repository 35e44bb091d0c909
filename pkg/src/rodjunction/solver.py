"""Discrete reduced energy over junction rotation fields and its minimization.

Each rod ``i`` is split into ``N_i`` equal segments.  Node rotations are stored
as unit quaternions; the first node of every rod is not stored but defined as
``R_J Q_i`` from one shared junction rotation ``R_J``, so the junction rotation
condition holds by construction.  The discrete energy is

    sum_i sum_k  h/2 H s_k . s_k  -  h p(x_{k+1/2}) . R_{k+1/2} e1

with ``s_k = log(R_k^T R_{k+1}) / h`` and ``R_{k+1/2}`` the geodesic midpoint.
Tangent vectors are spatial rotation vectors: a perturbation ``v`` moves a
node ``R -> exp(v) R``.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import logging
import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import so3
from .model import cumulative_load

log = logging.getLogger(__name__)

_E1 = np.array([1.0, 0.0, 0.0])


class SolverError(RuntimeError):
    pass


@dataclass
class RotationField:
    junction: np.ndarray  # (4,) quaternion of R_J
    nodes: list  # per rod (N_i, 4): nodes 1..N_i

    @property
    def segments(self):
        return tuple(len(q) for q in self.nodes)

    def copy(self):
        return RotationField(self.junction.copy(), [q.copy() for q in self.nodes])

    def junction_matrix(self):
        return so3.quat_to_matrix(self.junction)

    def matrices(self, network):
        """Per rod ``(N_i + 1, 3, 3)`` node rotations, node 0 being ``R_J Q_i``."""
        out = []
        for q, q0 in zip(self.nodes, self.node_quaternions(network)):
            # node 0 goes through the same quaternion path as stored nodes so
            # a straight field has exactly zero strain
            out.append(so3.quat_to_matrix(np.vstack([q0[:1], q])))
        return out

    def node_quaternions(self, network):
        """Per rod ``(N_i + 1, 4)`` quaternions including the derived first node."""
        out = []
        for q, rod in zip(self.nodes, network.rods):
            q0 = so3.quat_multiply(self.junction, rod.frame_quat)
            out.append(np.vstack([q0, q]))
        return out

    def rotated(self, G):
        qG = so3.matrix_to_quat(np.asarray(G, dtype=float))
        return RotationField(
            so3.quat_normalize(so3.quat_multiply(qG, self.junction)),
            [so3.quat_normalize(so3.quat_multiply(qG, q)) for q in self.nodes],
        )


@dataclass
class SolverOptions:
    segments: object = 32  # int or one int per rod
    g_tol: float = 1e-8  # relative: stop when |grad| <= g_tol * (1 + |energy|)
    max_iter: int = 20000
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    optimizer: str = "lbfgs"  # or "gd"
    memory: int = 20
    init: str = "straight"  # straight | perturbed | provided
    seed: int = 0
    amplitude: float = 0.0
    initial_field: RotationField = None
    pin_junction: bool = False  # gauge: hold R_J at its initial value
    threads: int = 1
    stall_iter: int = 200  # stop when the gradient norm has not improved for this many steps
    precondition: bool = True  # elastic block-Laplacian as initial inverse Hessian

    def __post_init__(self):
        if not (0.0 < self.armijo_c1 < 0.5):
            raise ValueError("armijo_c1 must lie in (0, 1/2)")
        if not (0.0 < self.backtrack < 1.0):
            raise ValueError("backtrack factor must lie in (0, 1)")
        if not self.g_tol > 0:
            raise ValueError("g_tol must be > 0")
        if self.optimizer not in ("lbfgs", "gd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.init not in ("straight", "perturbed", "provided"):
            raise ValueError(f"unknown init {self.init!r}")

    def segments_for(self, network):
        n = self.segments
        N = [int(n)] * len(network) if np.isscalar(n) else [int(k) for k in n]
        if len(N) != len(network):
            raise ValueError("one segment count per rod required")
        if min(N) < 2:
            raise ValueError("at least 2 segments per rod")
        return N


@dataclass
class SolveTrace:
    iterations: list = field(default_factory=list)  # (iteration, energy, grad_norm, step)
    reason: str = ""
    converged: bool = False

    def to_csv(self):
        lines = ["iteration,energy,grad_norm,step"]
        lines += [f"{i},{e:.17g},{g:.17g},{s:.17g}" for i, e, g, s in self.iterations]
        return "\n".join(lines) + "\n"

    @property
    def energies(self):
        return np.array([row[1] for row in self.iterations])


# ------------------------------------------------------------ per-rod kernel


def _rod_terms(R, H, h, p_mid, want_grad):
    """Energy parts and node gradients (N+1, 3) of one rod."""
    Rk, Rk1 = R[:-1], R[1:]
    Phi = so3.log(np.swapaxes(Rk, -1, -2) @ Rk1)
    s = Phi / h
    Hs = s @ H
    e_el = 0.5 * h * np.einsum("ki,ki->k", Hs, s)
    Rm = Rk @ so3.exp(0.5 * Phi)
    d = Rm[:, :, 0]
    e_ld = -h * np.einsum("ki,ki->k", p_mid, d)
    E = float(np.sum(e_el) + np.sum(e_ld))
    mag = float(np.sum(np.abs(e_el)) + np.sum(np.abs(e_ld)))
    if not want_grad:
        return E, mag, None
    Jri = so3.right_jacobian_inv(Phi)
    Jli = np.swapaxes(Jri, -1, -2)
    Jlh = so3.left_jacobian(0.5 * Phi)
    w = np.cross(_E1, np.einsum("kji,kj->ki", Rm, p_mid))
    dxp = np.cross(d, p_mid)
    G = np.zeros((len(R), 3))
    # elastic part
    G[1:] += np.einsum("kij,kj->ki", Rk1, np.einsum("kij,kj->ki", Jli, Hs))
    G[:-1] -= np.einsum("kij,kj->ki", Rk, np.einsum("kij,kj->ki", Jri, Hs))
    # load part through the geodesic midpoint
    Jw = np.einsum("kij,kj->ki", Jlh, w)
    G[:-1] += -h * dxp + 0.5 * h * np.einsum("kij,kj->ki", Rk, np.einsum("kij,kj->ki", Jri, Jw))
    G[1:] += -0.5 * h * np.einsum("kij,kj->ki", Rk1, np.einsum("kij,kj->ki", Jli, Jw))
    return E, mag, G


class Discretization:
    """Fixed network + segment counts; evaluates energy and gradient of fields."""

    def __init__(self, network, segments, threads=1, pin_junction=False):
        self.network = network
        self.N = list(segments)
        self.h = [rod.length / n for rod, n in zip(network.rods, self.N)]
        self.x_mid = [(np.arange(n) + 0.5) * h for n, h in zip(self.N, self.h)]
        self.p_mid = [cumulative_load(rod, x) for rod, x in zip(network.rods, self.x_mid)]
        self.threads = max(1, int(threads))
        self.pin_junction = pin_junction
        self._pool = ThreadPoolExecutor(self.threads) if self.threads > 1 else None
        self.size = 3 * (1 + sum(self.N))

    def _map(self, fn, items):
        if self._pool is None:
            return [fn(*it) for it in items]
        return list(self._pool.map(lambda it: fn(*it), items))

    def check(self, fld):
        if list(fld.segments) != self.N:
            raise ValueError(f"field has segments {fld.segments}, network expects {tuple(self.N)}")

    def evaluate(self, fld, want_grad=True):
        """(energy, flat gradient or None, magnitude); terms reduced in rod order."""
        self.check(fld)
        Rs = fld.matrices(self.network)
        items = [(R, rod.stiffness, h, p, want_grad) for R, rod, h, p in zip(Rs, self.network.rods, self.h, self.p_mid)]
        parts = self._map(_rod_terms, items)
        E = 0.0
        mag = 0.0
        for e, m, _ in parts:
            E += e
            mag += m
        if not want_grad:
            return E, None, mag
        g = np.empty(self.size)
        gJ = np.zeros(3)
        off = 3
        for (_, _, G), n in zip(parts, self.N):
            gJ = gJ + G[0]
            g[off:off + 3 * n] = G[1:].ravel()
            off += 3 * n
        g[:3] = 0.0 if self.pin_junction else gJ
        return E, g, mag

    def energy(self, fld):
        return self.evaluate(fld, want_grad=False)[0]

    def gradient(self, fld):
        return self.evaluate(fld)[1]

    def retract(self, fld, v):
        v = np.asarray(v, dtype=float)
        qJ = fld.junction
        if not self.pin_junction:
            qJ = so3.quat_normalize(so3.quat_multiply(so3.quat_from_rotvec(v[:3]), qJ))
        nodes = []
        off = 3
        for q, n in zip(fld.nodes, self.N):
            dq = so3.quat_from_rotvec(v[off:off + 3 * n].reshape(n, 3))
            nodes.append(so3.quat_normalize(so3.quat_multiply(dq, q)))
            off += 3 * n
        return RotationField(qJ, nodes)

    def preconditioner(self, fld):
        """Sparse SPD approximation of the Hessian at ``fld``; returns its solve.

        Each segment contributes ``R_m H R_m^T / h`` in graph-Laplacian form and
        each node gets the diagonal ``h |p|`` so that rigid rotations, which
        only the loads resist, stay well scaled.
        """
        Rs = fld.matrices(self.network)
        rows, cols, vals = [], [], []
        diag = np.zeros(self.size // 3)
        blk = np.arange(3)
        off = 1
        for R, rod, n, h, p in zip(Rs, self.network.rods, self.N, self.h, self.p_mid):
            Rm = R[:-1] @ so3.exp(0.5 * so3.log(np.swapaxes(R[:-1], -1, -2) @ R[1:]))
            C = Rm @ rod.stiffness @ np.swapaxes(Rm, -1, -2) / h
            idx = np.concatenate([[0], off + np.arange(n)])
            a, b = idx[:-1], idx[1:]
            for (u, v, sgn) in ((a, a, 1.0), (b, b, 1.0), (a, b, -1.0), (b, a, -1.0)):
                rows.append((3 * u[:, None, None] + blk[None, :, None]).repeat(3, 2).ravel())
                cols.append((3 * v[:, None, None] + blk[None, None, :]).repeat(3, 1).ravel())
                vals.append((sgn * C).ravel())
            pn = h * np.linalg.norm(p, axis=1)
            np.add.at(diag, a, 0.5 * pn)
            np.add.at(diag, b, 0.5 * pn)
            off += n
        K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(self.size, self.size)).tocsr()
        scale = K.diagonal().max()
        d = np.repeat(diag, 3) + 1e-10 * scale
        if self.pin_junction:
            K = K.tolil()
            K[:3, :] = 0.0
            K[:, :3] = 0.0
            K = K.tocsr()
            d[:3] = scale
        lu = spla.splu((K + sp.diags(d)).tocsc())

        def apply(v):
            out = lu.solve(v)
            if self.pin_junction:
                out[:3] = 0.0
            return out

        return apply

    def rigid_directions(self):
        """Orthonormal basis (3, size) of global left rotations of the whole field."""
        B = np.zeros((3, self.size))
        for a in range(3):
            B[a, a::3] = 1.0
        if self.pin_junction:
            B[:, :3] = 0.0
        return B / np.linalg.norm(B, axis=1, keepdims=True)

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()


# ------------------------------------------------------------ public surface


def init_field(network, options):
    """Straight field R = Q_i, optionally right-multiplied by seeded random rotations."""
    N = options.segments_for(network)
    if options.init == "provided":
        if options.initial_field is None:
            raise ValueError("init 'provided' needs options.initial_field")
        return options.initial_field.copy()
    nodes = []
    rng = np.random.default_rng(options.seed)
    for rod, n in zip(network.rods, N):
        q = np.tile(so3.matrix_to_quat(rod.frame), (n, 1))
        if options.init == "perturbed":
            dq = so3.quat_from_rotvec(options.amplitude * rng.standard_normal((n, 3)))
            q = so3.quat_normalize(so3.quat_multiply(q, dq))
        nodes.append(q)
    return RotationField(np.array([1.0, 0.0, 0.0, 0.0]), nodes)


def energy(fld, network):
    return Discretization(network, fld.segments).energy(fld)


def gradient(fld, network, pin_junction=False):
    """Flat gradient ``[junction(3), rod0 nodes 1..N0 (3 N0), rod1 ...]``."""
    return Discretization(network, fld.segments, pin_junction=pin_junction).gradient(fld)


def rod_energies(fld, network):
    """Energy contribution of each rod (same discretization as :func:`energy`)."""
    disc = Discretization(network, fld.segments)
    disc.check(fld)
    return [
        _rod_terms(R, rod.stiffness, h, p, False)[0]
        for R, rod, h, p in zip(fld.matrices(network), network.rods, disc.h, disc.p_mid)
    ]


def strains(fld, network):
    """Material strain at segment midpoints, per rod ``(N_i, 3)``."""
    out = []
    for R, n, rod in zip(fld.matrices(network), fld.segments, network.rods):
        h = rod.length / n
        out.append(so3.log(np.swapaxes(R[:-1], -1, -2) @ R[1:]) / h)
    return out


def _lbfgs_direction(g, S, Y, precond=None):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((rho, a))
    if precond is not None:
        q = precond(q)
    elif S:
        q *= (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
    for (s, y), (rho, a) in zip(zip(S, Y), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def solve(network, options=None, callback=None):
    """Local minimizer of the discrete energy; returns ``(field, trace)``.

    Riemannian L-BFGS (or gradient descent) with Armijo backtracking.  Once the
    energy change drops to rounding level, a step is still accepted when it
    does not raise the energy beyond that level and it lowers the gradient
    norm; this lets the iteration reach tight gradient tolerances.
    """
    options = options or SolverOptions()
    N = options.segments_for(network)
    disc = Discretization(network, N, options.threads, options.pin_junction)
    try:
        return _minimize(disc, init_field(network, options), options, callback)
    finally:
        disc.close()


def _minimize(disc, x, options, callback):
    trace = SolveTrace()
    E, g, mag = disc.evaluate(x)
    if not math.isfinite(E):
        raise SolverError("non-finite initial energy")
    gnorm = float(np.linalg.norm(g))
    trace.iterations.append((0, E, gnorm, 0.0))
    S, Y = [], []
    step0 = 1.0
    best, best_it = gnorm, 0
    for it in range(1, options.max_iter + 1):
        if gnorm <= options.g_tol * (1.0 + abs(E)):
            trace.reason, trace.converged = "converged", True
            return x, trace
        if gnorm < (1.0 - 1e-3) * best:
            best, best_it = gnorm, it
        elif it - best_it > options.stall_iter:
            # gradient stuck at its rounding floor above g_tol
            trace.reason = "stalled"
            return x, trace
        precond = disc.preconditioner(x) if options.optimizer == "lbfgs" and options.precondition else None
        if options.optimizer == "lbfgs" and (S or precond is not None):
            d = _lbfgs_direction(g, S, Y, precond)
            alpha = 1.0
        else:
            d = -g
            alpha = step0 / max(gnorm, 1e-300) if it == 1 else step0
        slope = float(g @ d)
        if slope >= 0.0:
            S.clear()
            Y.clear()
            d = -g
            slope = -gnorm * gnorm
            alpha = min(1.0, 1.0 / gnorm)
        noise = 64.0 * np.finfo(float).eps * max(mag, abs(E))
        accepted = False
        for _ in range(60):
            xn = disc.retract(x, alpha * d)
            En, gn, magn = disc.evaluate(xn)
            if not math.isfinite(En):
                alpha *= options.backtrack
                continue
            if En <= E + options.armijo_c1 * alpha * slope:
                accepted = True
                break
            if abs(En - E) <= noise and En <= E + noise and np.linalg.norm(gn) < gnorm:
                accepted = True
                break
            alpha *= options.backtrack
        if not accepted:
            trace.reason = "line_search_failure"
            return x, trace
        if not math.isfinite(En):
            raise SolverError("non-finite energy")
        s = alpha * d
        y = gn - g
        sy = float(s @ y)
        if options.optimizer == "lbfgs" and sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
            if len(S) > options.memory:
                S.pop(0)
                Y.pop(0)
        if options.optimizer == "gd":
            step0 = alpha * 2.0 if sy <= 0 else min(alpha * 4.0, float(s @ s) / sy)
        x, E, g, mag = xn, En, gn, magn
        gnorm = float(np.linalg.norm(g))
        trace.iterations.append((it, E, gnorm, float(np.linalg.norm(s))))
        if callback is not None:
            callback(it, E, gnorm, float(np.linalg.norm(s)))
    trace.reason = "max_iterations" if gnorm > options.g_tol * (1.0 + abs(E)) else "converged"
    trace.converged = trace.reason == "converged"
    return x, trace


def hessian_min_eig(fld, network, probes=40, pin_junction=False, deflate=None, fd_step=1e-6, tol=1e-10):
    """Smallest eigenvalue of the discrete Riemannian Hessian at a stationary field.

    Hessian-vector products are central differences of the gradient along the
    retraction; the eigenvalue comes from Lanczos (ARPACK) with ``probes``
    Lanczos vectors.  Global rigid rotations are deflated when the loads are
    identically zero (they are then an exact nullspace); ``deflate`` overrides.
    Returns ``(estimate, converged)``.
    """
    disc = Discretization(network, fld.segments, pin_junction=pin_junction)
    n = disc.size
    active = np.ones(n, dtype=bool)
    if pin_junction:
        active[:3] = False
    m = int(active.sum())
    if deflate is None:
        deflate = network.is_unloaded() and not pin_junction
    B = disc.rigid_directions()[:, active] if deflate else np.zeros((0, m))
    if deflate:
        B, _ = np.linalg.qr(B.T)
        B = B.T

    def full(v):
        out = np.zeros(n)
        out[active] = v
        return out

    def hv(v):
        v = np.asarray(v, dtype=float).ravel()
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return np.zeros(m)
        u = full(v / nv)
        gp = disc.gradient(disc.retract(fld, fd_step * u))
        gm = disc.gradient(disc.retract(fld, -fd_step * u))
        return (gp - gm)[active] / (2.0 * fd_step) * nv

    def project(v):
        return v - B.T @ (B @ v) if len(B) else v

    if deflate:
        # park the deflated directions above the spectrum
        shift = abs(_power_norm(hv, m)) + 1.0

        def op(v):
            v = np.asarray(v, dtype=float).ravel()
            pv = project(v)
            hp = project(hv(pv))
            return hp + shift * (v - pv)
    else:
        op = hv

    A = spla.LinearOperator((m, m), matvec=op, dtype=float)
    ncv = min(m, max(probes, 20))
    v0 = np.ones(m) / math.sqrt(m)
    try:
        vals = spla.eigsh(A, k=1, which="SA", ncv=ncv, tol=tol, v0=v0, maxiter=50 * m, return_eigenvectors=False)
        return float(vals[0]), True
    except spla.ArpackNoConvergence as exc:
        log.warning("Lanczos did not converge; returning best estimate")
        vals = exc.eigenvalues
        return (float(np.min(vals)) if len(vals) else float("nan")), False


def _power_norm(hv, m, iters=30):
    v = np.random.default_rng(0).standard_normal(m)
    lam = 0.0
    for _ in range(iters):
        w = hv(v)
        lam = np.linalg.norm(w) / np.linalg.norm(v)
        v = w / max(np.linalg.norm(w), 1e-300)
    return lam


def field_distance(f1, f2, network):
    """Largest node-wise geodesic distance between two fields on the same network."""
    d = 0.0
    for A, B in zip(f1.matrices(network), f2.matrices(network)):
        d = max(d, float(so3.geodesic_distance(A, B).max()))
    return d


def with_options(options, **kw):
    return replace(options, **kw)
