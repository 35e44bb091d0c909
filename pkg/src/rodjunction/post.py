"""Centerline recovery, contact fields and equilibrium residuals of a rotation field.

Spatial quantities follow the rod equations

    y' = R e1,   p' + f = 0,   q' + R e1 x p = 0,   q = R H s,

with junction conditions sum p(0) = sum q(0) = 0, common R(0) Q^T and y(0).
"""
from dataclasses import dataclass, field
import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from . import so3
from .model import cumulative_load
from .solver import Discretization, RotationField, _rod_terms

_E1 = np.array([1.0, 0.0, 0.0])
CSV_HEADER = ["x1", "y1", "y2", "y3", "qw", "qx", "qy", "qz", "s1", "s2", "s3", "p1", "p2", "p3", "m1", "m2", "m3"]


def _segment_logs(R):
    return so3.log(np.swapaxes(R[:-1], -1, -2) @ R[1:])


def recover_centerline(fld, network):
    """Node positions per rod, ``(N_i + 1, 3)``, anchored at ``y_1(L_1) = 0``.

    Along a geodesic segment ``R(t) = R_k exp(t Phi)`` the tangent integrates in
    closed form: ``int_0^1 exp(t Phi) dt = J_l(Phi)``.
    """
    ys = []
    for R, rod, n in zip(fld.matrices(network), network.rods, fld.segments):
        h = rod.length / n
        Phi = _segment_logs(R)
        steps = h * np.einsum("kij,kjl,l->ki", R[:-1], so3.left_jacobian(Phi), _E1)
        y = np.zeros((n + 1, 3))
        y[1:] = np.cumsum(steps, axis=0)
        ys.append(y)
    shift = ys[0][-1].copy()
    return [y - shift for y in ys]


@dataclass
class ContactFields:
    s_mid: np.ndarray  # spatial strain at segment midpoints
    q_mid: np.ndarray  # contact couple at segment midpoints
    s: np.ndarray  # node values
    q: np.ndarray


def _to_nodes(mid):
    """Interior nodes average their two segments; end nodes extrapolate linearly."""
    n = len(mid)
    out = np.empty((n + 1, 3))
    out[1:-1] = 0.5 * (mid[:-1] + mid[1:])
    if n == 1:
        out[0] = out[-1] = mid[0]
    else:
        out[0] = 1.5 * mid[0] - 0.5 * mid[1]
        out[-1] = 1.5 * mid[-1] - 0.5 * mid[-2]
    return out


def contact_fields(fld, network):
    out = []
    for R, rod, n in zip(fld.matrices(network), network.rods, fld.segments):
        h = rod.length / n
        Phi = _segment_logs(R)
        Rm = R[:-1] @ so3.exp(0.5 * Phi)
        s = Phi / h
        s_mid = np.einsum("kij,kj->ki", Rm, s)
        q_mid = np.einsum("kij,kj->ki", Rm, s @ rod.stiffness)
        out.append(ContactFields(s_mid, q_mid, _to_nodes(s_mid), _to_nodes(q_mid)))
    return out


def discrete_end_couples(fld, network):
    """Couples at ``x1 = 0`` and ``x1 = L`` from the end-node balance of the discrete energy.

    At a stationary point the end-node gradient vanishes; it equals the
    discrete couple at a free end, so ``q(L)`` checks the natural boundary
    condition and ``-G_0`` is the couple each rod exerts at the junction.
    """
    disc = Discretization(network, fld.segments)
    q0, qL = [], []
    for R, rod, h, p in zip(fld.matrices(network), network.rods, disc.h, disc.p_mid):
        G = _rod_terms(R, rod.stiffness, h, p, True)[2]
        q0.append(-G[0])
        qL.append(G[-1])
    return np.array(q0), np.array(qL)


@dataclass
class RodReport:
    x: np.ndarray
    y: np.ndarray
    quat: np.ndarray
    s: np.ndarray
    p: np.ndarray
    q: np.ndarray


@dataclass
class EquilibriumReport:
    energy: float
    junction: np.ndarray
    rods: list
    residuals: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def summary(self):
        return {
            "energy": self.energy,
            "junction_quaternion": [float(v) for v in self.junction],
            "segments": [len(r.x) - 1 for r in self.rods],
            "residuals": self.residuals,
            **self.meta,
        }

    def to_json(self):
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"

    def rod_csv(self, i):
        r = self.rods[i]
        buf = io.StringIO()
        buf.write(",".join(CSV_HEADER) + "\n")
        rows = np.column_stack([r.x, r.y, r.quat, r.s, r.p, r.q])
        for row in rows:
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()

    def plot_csv(self):
        """Long format ``rod,x1,quantity,value``."""
        buf = io.StringIO()
        buf.write("rod,x1,quantity,value\n")
        for i, r in enumerate(self.rods):
            rows = np.column_stack([r.y, r.quat, r.s, r.p, r.q])
            for x, row in zip(r.x, rows):
                for name, v in zip(CSV_HEADER[1:], row):
                    buf.write(f"{i},{x:.17g},{name},{v:.17g}\n")
        return buf.getvalue()


def _max_pairwise(points, dist):
    best = 0.0
    for a in range(len(points)):
        for b in range(a + 1, len(points)):
            best = max(best, float(dist(points[a], points[b])))
    return best


def residuals(fld, network):
    """Full equilibrium report for ``fld``; see module docstring for the equations."""
    disc = Discretization(network, fld.segments)
    E = disc.energy(fld)
    Rs = fld.matrices(network)
    ys = recover_centerline(fld, network)
    cf = contact_fields(fld, network)
    quats = fld.node_quaternions(network)
    q0_disc, qL_disc = discrete_end_couples(fld, network)

    rods, ode_res, inext = [], [], 0.0
    p0_sum = np.zeros(3)
    q0_sum = np.zeros(3)
    for R, rod, n, y, c, qt, pm in zip(Rs, network.rods, fld.segments, ys, cf, quats, disc.p_mid):
        h = rod.length / n
        x = np.linspace(0.0, rod.length, n + 1)
        p = cumulative_load(rod, x)
        rods.append(RodReport(x, y, qt, c.s, p, c.q))
        p0_sum += p[0]
        q0_sum += c.q[0]
        # discrete (q1) on segments whose two nodes are both interior
        Phi = _segment_logs(R)
        d = (R[:-1] @ so3.exp(0.5 * Phi))[:, :, 0]
        if n >= 3:
            r = (c.q[2:-1] - c.q[1:-2]) / h + np.cross(d[1:-1], pm[1:-1])
            ode_res.append(float(np.linalg.norm(r, axis=1).max()))
        else:
            ode_res.append(0.0)
        chord = np.linalg.norm(np.diff(y, axis=0), axis=1)
        inext = max(inext, float(np.max(chord - h, initial=0.0)))
        inext = max(inext, float(np.abs(np.linalg.norm(R[:, :, 0], axis=1) - 1.0).max()))

    RJs = [R[0] @ rod.frame.T for R, rod in zip(Rs, network.rods)]
    res = {
        "ode_couple_residual": ode_res,
        "end_couple_norms": [float(np.linalg.norm(v)) for v in qL_disc],
        "end_couple_extrapolated": [float(np.linalg.norm(r.q[-1])) for r in rods],
        "junction_force_residual": float(np.linalg.norm(p0_sum)),
        "junction_couple_residual": float(np.linalg.norm(q0_sum)),
        "junction_couple_discrete": float(np.linalg.norm(q0_disc.sum(axis=0))),
        "junction_rotation_spread": _max_pairwise(RJs, so3.geodesic_distance),
        "junction_position_spread": _max_pairwise([y[0] for y in ys], lambda a, b: np.linalg.norm(a - b)),
        "inextensibility_error": inext,
        "anchor_error": float(np.linalg.norm(ys[0][-1])),
    }
    return EquilibriumReport(float(E), fld.junction.copy(), rods, res)


# ------------------------------------------------------------ file round trip


def write_report(report, out_dir, plot_data=False, extra=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = report.summary()
    if extra:
        summary.update(extra)
    (out / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for i in range(len(report.rods)):
        (out / f"rod_{i}.csv").write_text(report.rod_csv(i))
    if plot_data:
        (out / "plot_data.csv").write_text(report.plot_csv())


def read_solution(out_dir, n_rods):
    """Rebuild the :class:`RotationField` written by :func:`write_report`."""
    out = Path(out_dir)
    summary = json.loads((out / "report.json").read_text())
    qJ = np.array(summary["junction_quaternion"], dtype=float)
    nodes = []
    for i in range(n_rods):
        with open(out / f"rod_{i}.csv", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != CSV_HEADER:
                raise ValueError(f"rod_{i}.csv: unexpected header")
            rows = np.array([[float(v) for v in row] for row in reader])
        nodes.append(rows[1:, 4:8].copy())
    if any(not math.isfinite(v) for v in qJ):
        raise ValueError("report.json: junction quaternion not finite")
    return RotationField(qJ, nodes)
