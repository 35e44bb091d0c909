"""Small networks shared by tests, acceptance checks and scripts."""
import math

import numpy as np

from .model import LoadProfile, Network, RodSpec, cumulative_load

_Z = np.array([0.0, 0.0, 1.0])


def frame_from_tangent(t, axis2):
    t = np.asarray(t, dtype=float)
    t = t / np.linalg.norm(t)
    a = np.asarray(axis2, dtype=float)
    a = a - (a @ t) * t
    a = a / np.linalg.norm(a)
    return np.column_stack([t, a, np.cross(t, a)])


def planar_frame(angle):
    """Frame whose tangent lies in the x-y plane at ``angle``; third axis = z."""
    c, s = math.cos(angle), math.sin(angle)
    return frame_from_tangent([c, s, 0.0], [-s, c, 0.0])


def symmetric_star(n=3, length=1.0, pull=1.0, lift=1.0, stiffness=(1.0, 2.0, 3.0)):
    """``n`` rods at equal angles in the x-y plane.

    Each rod carries an outward end pull ``pull * t_i`` plus a downward
    distributed load ``-lift * z`` balanced by an upward end force, so every
    rod is self-balanced in z and the in-plane pulls cancel by symmetry.
    """
    H = np.diag(stiffness) if np.ndim(stiffness) == 1 else np.asarray(stiffness, dtype=float)
    rods = []
    for i in range(n):
        Q = planar_frame(2.0 * math.pi * i / n)
        F = pull * Q[:, 0] + lift * length * _Z
        rods.append(RodSpec(length, Q, H, LoadProfile("constant", -lift * _Z), F))
    return Network(tuple(rods))


def tee_star(scale=1.0):
    """Three rods along +x, -x and +y with transverse and axial loads; balanced."""
    H0 = np.diag([1.0, 2.0, 3.0])
    H1 = np.diag([0.8, 1.5, 2.5])
    H2 = np.array([[1.2, 0.1, 0.0], [0.1, 2.0, 0.2], [0.0, 0.2, 1.8]])
    rods = [
        RodSpec(1.0, planar_frame(0.0), H0, LoadProfile("constant", [0.0, 0.0, -0.5 * scale]), scale * np.array([1.0, -0.5, 0.0])),
        RodSpec(0.8, planar_frame(math.pi), H1, LoadProfile("polynomial", [[0.0, 0.0, 0.0], [0.0, 0.0, -0.8 * scale]]), scale * np.array([-1.0, -0.5, 0.0])),
    ]
    residual = sum(cumulative_load(r, 0.0) for r in rods)
    rods.append(RodSpec(1.2, planar_frame(0.5 * math.pi), H2, LoadProfile.zero(), -residual))
    return Network(tuple(rods))


def euler_strut(P, length=1.0, stiffness=(1.0, 1.0, 1.0)):
    """Free-free strut under a compressive dead end pair ``P``.

    Modeled as two half rods meeting at the midpoint junction, tangents
    ``+x`` and ``-x``, each loaded at its far end by ``-P t``.
    """
    H = np.diag(stiffness)
    half = 0.5 * length
    rods = tuple(RodSpec(half, planar_frame(a), H, LoadProfile.zero(), -P * planar_frame(a)[:, 0]) for a in (0.0, math.pi))
    return Network(rods)


def euler_critical_load(H22, length):
    return math.pi**2 * H22 / length**2


def single_rod(length=1.0, stiffness=(1.0, 1.0, 1.0), end_force=(0.0, 0.0, 0.0), load=None, frame=None):
    H = np.diag(stiffness) if np.ndim(stiffness) == 1 else np.asarray(stiffness, dtype=float)
    Q = np.eye(3) if frame is None else np.asarray(frame, dtype=float)
    return Network((RodSpec(length, Q, H, load or LoadProfile.zero(), np.asarray(end_force, dtype=float)),))
