"""Rod network data model: frames, stiffnesses, dead loads and the contact force.

The contact force of rod ``i`` is the load carried through its cross-section,

    p(x1) = int_{x1}^{L} f(z) dz + F,

so ``p' = -f`` and ``p(L) = F``.  Force balance of the whole junction is
``sum_i p_i(0) = 0``.
"""
from dataclasses import dataclass, field
from functools import cached_property
import logging
import math

import numpy as np

from . import so3
from .xsection import Material, SectionError, SectionGeometry, StiffnessForm, compute_H

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


# --------------------------------------------------------------------- loads


@dataclass(frozen=True)
class LoadProfile:
    """Distributed load f(x1) in force/length.

    ``kind`` is ``constant`` (``data`` is a 3-vector), ``polynomial``
    (``data[j]`` multiplies ``x1**j``) or ``samples`` (``x`` abscissae with
    ``data`` values, linearly interpolated).
    """

    kind: str = "constant"
    data: np.ndarray = field(default_factory=lambda: np.zeros(3))
    x: np.ndarray = None

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.data, dtype=float))
        if self.kind == "constant":
            d = d.reshape(3)
        elif self.kind == "polynomial":
            if d.shape[-1] != 3:
                raise ValueError("polynomial coefficients must be 3-vectors")
        elif self.kind == "samples":
            x = np.asarray(self.x, dtype=float)
            if d.shape != (len(x), 3) or len(x) < 2:
                raise ValueError("samples need >= 2 abscissae and one 3-vector per abscissa")
            if np.any(np.diff(x) <= 0):
                raise ValueError("sample abscissae must be strictly increasing")
            object.__setattr__(self, "x", x)
        else:
            raise ValueError(f"unknown load kind {self.kind!r}")
        if not np.all(np.isfinite(d)):
            raise ValueError("load values must be finite")
        object.__setattr__(self, "data", d)

    @classmethod
    def zero(cls):
        return cls("constant", np.zeros(3))

    def is_zero(self):
        return not np.any(self.data)

    def validate(self, length):
        if self.kind == "samples":
            if abs(self.x[0]) > 1e-12 * length or abs(self.x[-1] - length) > 1e-12 * length:
                raise ValueError("sample abscissae must span exactly [0, L]")

    def __call__(self, x1):
        x1 = np.asarray(x1, dtype=float)
        if self.kind == "constant":
            return np.broadcast_to(self.data, x1.shape + (3,)).copy()
        if self.kind == "polynomial":
            powers = x1[..., None] ** np.arange(len(self.data))
            return powers @ self.data
        return np.stack([np.interp(x1, self.x, self.data[:, j]) for j in range(3)], axis=-1)

    def integral_to_end(self, x1, length):
        """int_{x1}^{length} f(z) dz, exact for every representation."""
        x1 = np.asarray(x1, dtype=float)
        if self.kind == "constant":
            return (length - x1)[..., None] * self.data
        if self.kind == "polynomial":
            j = np.arange(len(self.data))
            w = (length ** (j + 1) - x1[..., None] ** (j + 1)) / (j + 1)
            return w @ self.data
        # samples: exact integral of the piecewise-linear interpolant
        xs, fs = self.x, self.data
        seg = 0.5 * (xs[1:] - xs[:-1])[:, None] * (fs[1:] + fs[:-1])
        tail = np.concatenate([np.cumsum(seg[::-1], axis=0)[::-1], np.zeros((1, 3))])  # int_{x_k}^{end}
        k = np.clip(np.searchsorted(xs, x1, side="right") - 1, 0, len(xs) - 2)
        fx = self(x1)
        partial = 0.5 * (xs[k + 1] - x1)[..., None] * (fx + fs[k + 1])
        return partial + tail[k + 1]

    def to_json(self):
        if self.kind == "constant":
            return {"kind": "constant", "value": self.data.tolist()}
        if self.kind == "polynomial":
            return {"kind": "polynomial", "coefficients": self.data.tolist()}
        return {"kind": "samples", "x": self.x.tolist(), "values": self.data.tolist()}

    def rotated(self, G):
        return LoadProfile(self.kind, self.data @ np.asarray(G).T, self.x)

    def scaled(self, c):
        return LoadProfile(self.kind, self.data * c, self.x)


# ---------------------------------------------------------------------- rods


@dataclass(frozen=True)
class RodSpec:
    length: float
    frame: np.ndarray  # Q, columns: tangent t = Q e1 and section axes
    stiffness: np.ndarray  # H
    load: LoadProfile = field(default_factory=LoadProfile.zero)
    end_force: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError(f"rod length must be > 0, got {self.length}")
        Q = np.asarray(self.frame, dtype=float)
        if Q.shape != (3, 3):
            raise ValueError("frame must be 3x3")
        if np.abs(Q.T @ Q - np.eye(3)).max() > 1e-12 or np.linalg.det(Q) < 0:
            raise ValueError("frame must be a rotation (orthonormal, det +1)")
        H = StiffnessForm(self.stiffness).H
        F = np.asarray(self.end_force, dtype=float).reshape(3)
        self.load.validate(self.length)
        object.__setattr__(self, "frame", Q)
        object.__setattr__(self, "stiffness", H)
        object.__setattr__(self, "end_force", F)

    @property
    def tangent(self):
        return self.frame[:, 0]

    @cached_property
    def frame_quat(self):
        return so3.matrix_to_quat(self.frame)

    def cumulative_load(self, x1):
        return cumulative_load(self, x1)

    def rotated(self, G):
        """Same rod with loads (not the reference frame) premultiplied by ``G``."""
        return RodSpec(self.length, self.frame, self.stiffness, self.load.rotated(G), np.asarray(G) @ self.end_force)


def cumulative_load(rod, x1):
    """Contact force p(x1) = int_{x1}^{L} f + F; vectorized over ``x1``."""
    x = np.asarray(x1, dtype=float)
    L = rod.length
    if np.any(x < -1e-12 * L) or np.any(x > L * (1 + 1e-12)):
        raise ValueError(f"arclength outside [0, {L}]")
    x = np.clip(x, 0.0, L)
    return rod.load.integral_to_end(x, L) + rod.end_force


@dataclass(frozen=True)
class Network:
    """Rods joined at a single junction; rod 0 carries the anchor y(L) = 0."""

    rods: tuple

    def __post_init__(self):
        rods = tuple(self.rods)
        if len(rods) < 1:
            raise ValueError("a network needs at least one rod")
        object.__setattr__(self, "rods", rods)
        for i in range(len(rods)):
            for j in range(i + 1, len(rods)):
                if np.allclose(rods[i].frame, rods[j].frame, atol=1e-12):
                    log.warning("rods %d and %d share the same reference frame", i, j)

    def __len__(self):
        return len(self.rods)

    def __iter__(self):
        return iter(self.rods)

    def is_unloaded(self):
        return all(r.load.is_zero() and not np.any(r.end_force) for r in self.rods)

    def rotated(self, G):
        return Network(tuple(r.rotated(G) for r in self.rods))

    def scaled_loads(self, c):
        return Network(tuple(RodSpec(r.length, r.frame, r.stiffness, r.load.scaled(c), r.end_force * c) for r in self.rods))

    def load_scale(self):
        return max(_sup_norm(r) for r in self.rods)


def _sup_norm(rod, samples=64):
    x = np.linspace(0.0, rod.length, samples + 1)
    if rod.load.kind == "samples":
        x = np.union1d(x, rod.load.x)
    return float(np.linalg.norm(cumulative_load(rod, x), axis=1).max())


@dataclass
class BalanceReport:
    residual: np.ndarray
    per_rod: list
    scale: float
    tol: float
    passed: bool


def check_balance(network, tol=1e-10):
    """Junction force balance sum_i p_i(0) = 0, relative to the largest contact force."""
    per_rod = [cumulative_load(r, 0.0) for r in network.rods]
    r = np.sum(per_rod, axis=0)
    scale = max(_sup_norm(rod) + _EPS for rod in network.rods)
    return BalanceReport(r, per_rod, scale, tol, bool(np.linalg.norm(r) <= tol * scale))


# -------------------------------------------------------------------- config


def _vec3(value, where):
    try:
        v = np.asarray(value, dtype=float).reshape(3)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a 3-vector") from None
    if not np.all(np.isfinite(v)):
        raise ConfigError(f"{where}: values must be finite")
    return v


def parse_frame(spec, where):
    """Frame from a unit quaternion (w, x, y, z), a 3x3 matrix, or tangent + axis2."""
    if not isinstance(spec, dict):
        raise ConfigError(f"{where}: expected an object")
    if "quaternion" in spec:
        q = np.asarray(spec["quaternion"], dtype=float)
        if q.shape != (4,):
            raise ConfigError(f"{where}.quaternion: expected 4 numbers (w, x, y, z)")
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ConfigError(f"{where}.quaternion: not a unit quaternion (norm {np.linalg.norm(q):.12g})")
        return so3.quat_to_matrix(q / np.linalg.norm(q))
    if "matrix" in spec:
        M = np.asarray(spec["matrix"], dtype=float)
        if M.shape != (3, 3):
            raise ConfigError(f"{where}.matrix: expected 3x3")
        if np.linalg.det(M) <= 0:
            raise ConfigError(f"{where}.matrix: determinant is not positive (reflection)")
        drift = np.abs(M.T @ M - np.eye(3)).max()
        if drift > 1e-6:
            raise ConfigError(f"{where}.matrix: not a rotation (orthogonality drift {drift:.3g})")
        # tiny drift is kept verbatim so re-emitted configs reproduce bit-for-bit
        return so3.polar_rotation(M) if drift > 1e-12 else M
    if "tangent" in spec:
        t = _vec3(spec["tangent"], f"{where}.tangent")
        a = _vec3(spec.get("axis2", _any_normal(t)), f"{where}.axis2")
        t = t / np.linalg.norm(t)
        a = a - (a @ t) * t
        if np.linalg.norm(a) < 1e-9:
            raise ConfigError(f"{where}.axis2: parallel to the tangent")
        a = a / np.linalg.norm(a)
        return np.column_stack([t, a, np.cross(t, a)])
    raise ConfigError(f"{where}: needs 'quaternion', 'matrix' or 'tangent'")


def _any_normal(t):
    t = np.asarray(t, dtype=float)
    e = np.eye(3)[np.argmin(np.abs(t))]
    return e - (e @ t) / (t @ t) * t


def parse_load(spec, where):
    if spec is None:
        return LoadProfile.zero()
    try:
        kind = spec.get("kind", "constant")
        if kind == "constant":
            return LoadProfile("constant", _vec3(spec.get("value", [0, 0, 0]), f"{where}.value"))
        if kind == "polynomial":
            return LoadProfile("polynomial", spec["coefficients"])
        if kind == "samples":
            return LoadProfile("samples", spec["values"], spec["x"])
    except (KeyError, ValueError, TypeError, AttributeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}.kind: unknown load kind {kind!r}")


def parse_section(spec, where):
    kind = spec.get("kind")
    try:
        if kind == "circle":
            return SectionGeometry.circle(spec["radius"], spec.get("center", (0.0, 0.0)))
        if kind == "rectangle":
            return SectionGeometry.rectangle(spec["a"], spec["b"], spec.get("center", (0.0, 0.0)))
        if kind == "polygon":
            return SectionGeometry.polygon(spec["vertices"])
    except (KeyError, SectionError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}.kind: unknown section kind {kind!r}")


def parse_stiffness(spec, where, cache=None):
    """Explicit ``H`` or ``{section, material, mesh_size}``; returns (H, section report or None)."""
    if not isinstance(spec, dict):
        raise ConfigError(f"{where}: expected an object")
    if "H" in spec:
        H = np.asarray(spec["H"], dtype=float)
        if H.shape != (3, 3):
            raise ConfigError(f"{where}.H: expected 3x3")
        try:
            return StiffnessForm(H).H, None
        except SectionError as exc:
            raise ConfigError(f"{where}.H: {exc}") from None
    if "section" not in spec or "material" not in spec:
        raise ConfigError(f"{where}: needs 'H' or 'section' + 'material'")
    geom = parse_section(spec["section"], f"{where}.section")
    m = spec["material"]
    try:
        mat = Material(float(m["lambda"]), float(m["mu"]))
    except (KeyError, TypeError, SectionError) as exc:
        raise ConfigError(f"{where}.material: {exc}") from None
    size = float(spec.get("mesh_size", 0.05 * geom.diameter()))
    key = repr((spec["section"], m, size))
    if cache is not None and key in cache:
        return cache[key]
    try:
        form = compute_H(geom, mat, size)
    except SectionError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    out = (form.H, form.to_json())
    if cache is not None:
        cache[key] = out
    return out


def build_network(config, section_reports=None):
    """Network from a parsed configuration dictionary (see the CLI for the schema).

    If ``section_reports`` is a list, per-rod section reports are appended to it.
    """
    rods_cfg = config.get("rods")
    if not isinstance(rods_cfg, list) or not rods_cfg:
        raise ConfigError("rods: expected a non-empty list")
    rods = []
    cache = {}
    for i, rc in enumerate(rods_cfg):
        where = f"rods[{i}]"
        if not isinstance(rc, dict):
            raise ConfigError(f"{where}: expected an object")
        try:
            length = float(rc["length"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"{where}.length: required positive number") from None
        if not (length > 0 and math.isfinite(length)):
            raise ConfigError(f"{where}.length: must be positive")
        Q = parse_frame(rc.get("frame", {"quaternion": [1, 0, 0, 0]}), f"{where}.frame")
        H, report = parse_stiffness(rc.get("stiffness"), f"{where}.stiffness", cache)
        loads = rc.get("loads", {}) or {}
        load = parse_load(loads.get("distributed"), f"{where}.loads.distributed")
        F = _vec3(loads.get("end_force", [0, 0, 0]), f"{where}.loads.end_force")
        try:
            rods.append(RodSpec(length, Q, H, load, F))
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        if section_reports is not None:
            section_reports.append(report)
    return Network(tuple(rods))
