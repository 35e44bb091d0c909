"""Cross-section stiffness: warping minimization on a P1 triangle mesh.

For an axial strain vector ``s`` (twist, two curvatures) the reduced energy is

    q2(s) = min_alpha  int_S q3( [ s x (0, x2, x3) | d2 alpha | d3 alpha ] ) dx2 dx3

and ``q2(s) = H s . s``.  ``compute_H`` recovers the 3x3 matrix ``H`` by
polarization over the canonical strain basis.
"""
from dataclasses import dataclass, field
import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import triangle as tr


class SectionError(ValueError):
    pass


class MeshingError(SectionError):
    pass


@dataclass(frozen=True)
class Material:
    lam: float
    mu: float

    def __post_init__(self):
        if not (np.isfinite(self.lam) and np.isfinite(self.mu)):
            raise SectionError("material parameters must be finite")
        if self.mu <= 0.0:
            raise SectionError(f"shear modulus mu must be > 0, got {self.mu}")
        if self.lam < 0.0:
            raise SectionError(f"Lame parameter lambda must be >= 0, got {self.lam}")

    @property
    def young(self):
        return self.mu * (3.0 * self.lam + 2.0 * self.mu) / (self.lam + self.mu)

    def scaled(self, t):
        return Material(self.lam * t, self.mu * t)


# ------------------------------------------------------------------ geometry


def polygon_moments(vertices):
    """Exact area, first and second moments of a simple polygon (Green's theorem).

    Returns ``(A, Sx2, Sx3, Ix2x2, Ix3x3, Ix2x3)`` where e.g. ``Ix2x2 = int x2^2``.
    Vertices may be in either orientation; the area returned is signed.
    """
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    A = 0.5 * cr.sum()
    Sx = ((x + xn) * cr).sum() / 6.0
    Sy = ((y + yn) * cr).sum() / 6.0
    Ixx = ((x * x + x * xn + xn * xn) * cr).sum() / 12.0
    Iyy = ((y * y + y * yn + yn * yn) * cr).sum() / 12.0
    Ixy = ((x * yn + 2 * x * y + 2 * xn * yn + xn * y) * cr).sum() / 24.0
    return A, Sx, Sy, Ixx, Iyy, Ixy


def _segments_intersect(p, q, r, s):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(r, s, p), orient(r, s, q)
    d3, d4 = orient(p, q, r), orient(p, q, s)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def _check_simple(v):
    n = len(v)
    if n < 3:
        raise SectionError("polygon needs at least 3 vertices")
    edges = np.roll(v, -1, axis=0) - v
    lengths = np.linalg.norm(edges, axis=1)
    scale = max(np.ptp(v[:, 0]), np.ptp(v[:, 1]))
    bad = np.nonzero(lengths <= 1e-12 * max(scale, 1e-300))[0]
    if bad.size:
        raise MeshingError(f"degenerate edge at vertex index {int(bad[0])}")
    if n > 64:
        # named curved sections are convex by construction; skip the quadratic scan
        return
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                raise SectionError(f"polygon edges {i} and {j} intersect")


@dataclass(frozen=True)
class SectionGeometry:
    """Planar section.  ``kind`` is ``circle``, ``rectangle`` or ``polygon``.

    Circles keep their exact description (radius, center) and are only turned
    into a polygon when meshed, so the boundary resolution follows the mesh size.
    """

    kind: str
    vertices: np.ndarray = None
    radius: float = None
    center: tuple = (0.0, 0.0)

    @classmethod
    def circle(cls, radius, center=(0.0, 0.0)):
        if not radius > 0:
            raise SectionError(f"circle radius must be > 0, got {radius}")
        return cls("circle", radius=float(radius), center=(float(center[0]), float(center[1])))

    @classmethod
    def rectangle(cls, a, b, center=(0.0, 0.0)):
        if not (a > 0 and b > 0):
            raise SectionError(f"rectangle sides must be > 0, got {a}, {b}")
        cx, cy = center
        v = np.array([[-a / 2, -b / 2], [a / 2, -b / 2], [a / 2, b / 2], [-a / 2, b / 2]])
        return cls("rectangle", vertices=v + [cx, cy])

    @classmethod
    def polygon(cls, vertices):
        v = np.array(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise SectionError("polygon vertices must be a list of (x2, x3) pairs")
        _check_simple(v)
        A = polygon_moments(v)[0]
        if abs(A) <= 1e-14 * max(np.ptp(v[:, 0]), np.ptp(v[:, 1])) ** 2:
            raise SectionError("polygon has zero area")
        if A < 0:
            v = v[::-1].copy()
        return cls("polygon", vertices=v)

    def boundary(self, target_edge=None):
        """Counter-clockwise boundary polygon; circles are discretized here."""
        if self.kind != "circle":
            return np.asarray(self.vertices, dtype=float)
        r = self.radius
        # chord <= target_edge keeps the sagitta below target_edge^2 / (8 r);
        # the area floor keeps the inscribed-polygon defect below 5e-4
        n = 64 if target_edge is None else max(16, math.ceil(2 * math.pi * r / target_edge))
        while 1.0 - math.sin(2 * math.pi / n) / (2 * math.pi / n) > 5e-4:
            n += 1
        t = 2 * math.pi * np.arange(n) / n
        return np.column_stack([self.center[0] + r * np.cos(t), self.center[1] + r * np.sin(t)])

    def moments(self, target_edge=None):
        return polygon_moments(self.boundary(target_edge))

    def diameter(self):
        if self.kind == "circle":
            return 2 * self.radius
        v = np.asarray(self.vertices)
        return float(np.max(np.linalg.norm(v[:, None] - v[None], axis=-1)))

    def transformed(self, shift, angle):
        """Translate by ``shift`` then rotate coordinates by ``angle`` (x' = R(-angle) x)."""
        c, s = math.cos(angle), math.sin(angle)
        Rt = np.array([[c, s], [-s, c]])
        if self.kind == "circle":
            cx, cy = Rt @ (np.asarray(self.center) + shift)
            return SectionGeometry("circle", radius=self.radius, center=(float(cx), float(cy)))
        v = (np.asarray(self.vertices) + shift) @ Rt.T
        return SectionGeometry(self.kind, vertices=v)

    def scaled(self, c):
        if self.kind == "circle":
            return SectionGeometry.circle(self.radius * c, (self.center[0] * c, self.center[1] * c))
        return SectionGeometry(self.kind, vertices=np.asarray(self.vertices) * c)


@dataclass(frozen=True)
class Normalization:
    centroid: tuple
    rotation_angle: float


def normalize_section(geometry):
    """Move the centroid to the origin and rotate onto principal axes.

    Returns ``(normalized_geometry, Normalization)``.  After the transform
    ``int x2 = int x3 = int x2 x3 = 0`` over the section.
    """
    if geometry.kind == "circle":
        out = geometry.transformed(-np.asarray(geometry.center), 0.0)
        return out, Normalization(tuple(geometry.center), 0.0)
    A, Sx, Sy, Ixx, Iyy, Ixy = polygon_moments(geometry.vertices)
    if abs(A) <= 1e-14 * geometry.diameter() ** 2:
        raise SectionError("section has zero area")
    cx, cy = Sx / A, Sy / A
    # central second moments
    Jxx = Ixx - A * cx * cx
    Jyy = Iyy - A * cy * cy
    Jxy = Ixy - A * cx * cy
    if abs(Jxy) <= 1e-13 * (abs(Jxx) + abs(Jyy)):
        angle = 0.0
    else:
        angle = 0.5 * math.atan2(2.0 * Jxy, Jxx - Jyy)
    out = geometry.transformed(-np.array([cx, cy]), angle)
    return out, Normalization((cx, cy), angle)


# ---------------------------------------------------------------------- mesh


@dataclass(frozen=True)
class TriMesh:
    nodes: np.ndarray
    triangles: np.ndarray
    areas: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.areas is None:
            object.__setattr__(self, "areas", triangle_areas(self.nodes, self.triangles))

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def edge_lengths(self):
        p = self.nodes[self.triangles]
        return np.linalg.norm(p - np.roll(p, -1, axis=1), axis=-1)

    def scaled(self, c):
        return TriMesh(self.nodes * c, self.triangles.copy())


def triangle_areas(nodes, triangles):
    p = nodes[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _subdivide_boundary(v, target_edge):
    pts = []
    n = len(v)
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        k = max(1, math.ceil(np.linalg.norm(b - a) / target_edge - 1e-12))
        for j in range(k):
            pts.append(a + (b - a) * (j / k))
    return np.array(pts)


def triangulate(geometry, target_edge):
    """Conforming quality triangulation with every edge at most 1.5 * target_edge."""
    if not target_edge > 0:
        raise SectionError(f"target_edge must be > 0, got {target_edge}")
    v = geometry.boundary(target_edge)
    _check_simple(v)
    pts = _subdivide_boundary(v, target_edge)
    n = len(pts)
    segs = np.column_stack([np.arange(n), (np.arange(n) + 1) % n])
    max_area = math.sqrt(3) / 4 * target_edge**2
    for _ in range(12):
        try:
            out = tr.triangulate({"vertices": pts, "segments": segs}, f"pq30a{max_area:.17g}Q")
        except Exception as exc:  # pragma: no cover - triangle raises bare RuntimeError
            raise MeshingError(f"triangulation failed near vertex index 0: {exc}") from exc
        if "triangles" not in out or len(out["triangles"]) == 0:
            raise MeshingError("triangulation produced no triangles (sliver polygon?)")
        mesh = _clean_mesh(out["vertices"], out["triangles"])
        if mesh.edge_lengths().max() <= 1.5 * target_edge:
            return mesh
        max_area *= 0.7
    raise MeshingError("could not satisfy the edge-length bound")


def _clean_mesh(nodes, triangles):
    nodes = np.asarray(nodes, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    used = np.unique(triangles)
    remap = -np.ones(len(nodes), dtype=np.int64)
    remap[used] = np.arange(len(used))
    nodes = nodes[used]
    triangles = remap[triangles]
    a = triangle_areas(nodes, triangles)
    flip = a < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    mesh = TriMesh(nodes, triangles)
    bad = np.nonzero(mesh.areas <= 0)[0]
    if bad.size:
        raise MeshingError(f"degenerate triangle {int(bad[0])} at vertex index {int(triangles[bad[0], 0])}")
    return mesh


def refine_uniform(mesh):
    """Split every triangle into four through its edge midpoints (nested spaces)."""
    t = mesh.triangles
    edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    key = np.sort(edges, axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    mids = 0.5 * (mesh.nodes[uniq[:, 0]] + mesh.nodes[uniq[:, 1]])
    nodes = np.vstack([mesh.nodes, mids])
    m = len(t)
    n0 = len(mesh.nodes)
    m01, m12, m20 = (inv[:m] + n0, inv[m:2 * m] + n0, inv[2 * m:] + n0)
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    new = np.concatenate(
        [
            np.column_stack([a, m01, m20]),
            np.column_stack([m01, b, m12]),
            np.column_stack([m20, m12, c]),
            np.column_stack([m01, m12, m20]),
        ]
    )
    return TriMesh(nodes, new)


# -------------------------------------------------------------------- energy


def q3_isotropic(G, material):
    """Isotropic elastic energy density 2 mu |sym G|^2 + lambda (tr G)^2."""
    G = np.asarray(G, dtype=float)
    S = 0.5 * (G + np.swapaxes(G, -1, -2))
    return 2.0 * material.mu * np.sum(S * S, axis=(-2, -1)) + material.lam * np.trace(G, axis1=-2, axis2=-1) ** 2


def _q3_matrix(material):
    """9x9 symmetric C with q3(G) = vec(G) . C vec(G), vec row-major."""
    E = np.eye(9).reshape(9, 3, 3)
    d = q3_isotropic(E, material)
    C = np.empty((9, 9))
    for i in range(9):
        C[i] = 0.5 * (q3_isotropic(E[i] + E, material) - d[i] - d)
    return C


def _first_column_map(x):
    """3x3 matrix mapping s to s x (0, x2, x3); ``x`` has shape (..., 2)."""
    x2, x3 = x[..., 0], x[..., 1]
    z = np.zeros_like(x2)
    return np.stack(
        [np.stack([z, x3, -x2], -1), np.stack([-x3, z, z], -1), np.stack([x2, z, z], -1)], -2
    )


@dataclass
class WarpingField:
    values: np.ndarray  # (n_nodes, 3)
    minimum: float


class WarpingProblem:
    """Assembled and factorized constrained warping problem on a fixed mesh.

    Energy in the nodal warping vector ``a`` (3 dofs per node) for strain ``s``:
    ``a.K a + 2 a.F s + s.M s``.  Four Lagrange multipliers remove the energy
    nullspace (constant shifts and in-plane infinitesimal rotation).
    """

    def __init__(self, mesh, material):
        self.mesh = mesh
        self.material = material
        C = _q3_matrix(material)
        p = mesh.nodes[mesh.triangles]  # (m, 3, 2)
        area = mesh.areas
        # P1 basis gradients: rows a = local node, cols (d2, d3)
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        J = np.stack([d1, d2], axis=-1)  # columns are edge vectors
        Jinv = np.linalg.inv(J)
        ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        grads = ref @ Jinv  # (m, 3, 2)
        m = len(area)

        # B maps local dofs (3a + j) to vec(G) rows (3j + 1, 3j + 2)
        B = np.zeros((m, 9, 9))
        for a in range(3):
            for j in range(3):
                B[:, 3 * j + 1, 3 * a + j] = grads[:, a, 0]
                B[:, 3 * j + 2, 3 * a + j] = grads[:, a, 1]

        def S_of(x):
            Sx = np.zeros(x.shape[:-1] + (9, 3))
            Cx = _first_column_map(x)
            for j in range(3):
                Sx[..., 3 * j, :] = Cx[..., j, :]
            return Sx

        centroid = p.mean(axis=1)
        Ke = area[:, None, None] * np.einsum("eki,kl,elj->eij", B, C, B)
        Fe = area[:, None, None] * np.einsum("eki,kl,elj->eij", B, C, S_of(centroid))
        # edge-midpoint rule is exact for the quadratic integrand
        mids = 0.5 * (p + np.roll(p, -1, axis=1))
        Sm = S_of(mids)  # (m, 3, 9, 3)
        Me = np.einsum("eqki,kl,eqlj->eij", Sm, C, Sm) * (area / 3.0)[:, None, None]
        self.M = Me.sum(axis=0)

        dofs = (3 * mesh.triangles[:, :, None] + np.arange(3)).reshape(m, 9)
        n = 3 * mesh.n_nodes
        rows = np.repeat(dofs, 9, axis=1).ravel()
        cols = np.tile(dofs, (1, 9)).ravel()
        self.K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
        F = np.zeros((n, 3))
        np.add.at(F, dofs.ravel(), Fe.reshape(-1, 3))
        self.F = F

        # constraints: componentwise mean, mean in-plane rotation d2 a3 - d3 a2
        Cm = np.zeros((4, n))
        for j in range(3):
            np.add.at(Cm[j], (3 * mesh.triangles + j).ravel(), np.repeat(area / 3.0, 3))
        np.add.at(Cm[3], (3 * mesh.triangles + 2).ravel(), (area[:, None] * grads[:, :, 0]).ravel())
        np.add.at(Cm[3], (3 * mesh.triangles + 1).ravel(), (-area[:, None] * grads[:, :, 1]).ravel())
        self.constraints = Cm
        Cs = sp.csr_matrix(Cm)
        kkt = sp.bmat([[self.K, Cs.T], [Cs, None]], format="csc")
        try:
            self._lu = spla.splu(kkt)
        except RuntimeError as exc:
            raise SectionError(f"internal error: singular constrained warping system ({exc})") from exc
        self._n = n

    def energy(self, a, s):
        a = np.asarray(a).ravel()
        s = np.asarray(s, dtype=float)
        return float(a @ (self.K @ a) + 2.0 * a @ (self.F @ s) + s @ self.M @ s)

    def solve(self, s):
        s = np.asarray(s, dtype=float)
        rhs = np.concatenate([-self.F @ s, np.zeros(4)])
        sol = self._lu.solve(rhs)
        if not np.all(np.isfinite(sol)):
            raise SectionError("internal error: singular constrained warping system")
        a = sol[: self._n]
        return WarpingField(a.reshape(-1, 3), self.energy(a, s))


def solve_warping(mesh, material, strain):
    return WarpingProblem(mesh, material).solve(strain)


@dataclass(frozen=True)
class StiffnessForm:
    """Symmetric positive definite 3x3 stiffness acting on material strains."""

    H: np.ndarray
    mesh_nodes: int = None
    mesh_triangles: int = None
    normalization: Normalization = None

    def __post_init__(self):
        H = np.array(self.H, dtype=float)
        if H.shape != (3, 3) or not np.all(np.isfinite(H)):
            raise SectionError("stiffness must be a finite 3x3 matrix")
        scale = max(np.abs(H).max(), 1e-300)
        if np.abs(H - H.T).max() > 1e-12 * scale:
            raise SectionError("stiffness matrix is not symmetric")
        H = 0.5 * (H + H.T)
        eig = np.linalg.eigvalsh(H)
        if eig[0] <= 1e-10 * max(np.trace(H), 0.0) / 3.0 or eig[0] <= 0.0:
            raise SectionError(f"stiffness matrix is not positive definite (smallest eigenvalue {eig[0]:.3g})")
        object.__setattr__(self, "H", H)

    def to_json(self):
        out = {"H": self.H.tolist()}
        if self.mesh_nodes is not None:
            out["mesh"] = {"nodes": int(self.mesh_nodes), "triangles": int(self.mesh_triangles)}
        if self.normalization is not None:
            out["normalization"] = {
                "centroid": [float(c) for c in self.normalization.centroid],
                "rotation_angle": float(self.normalization.rotation_angle),
            }
        return out


def stiffness_from_problem(problem):
    """Polarize the discrete minimum over e_j and e_j + e_k."""
    E = np.eye(3)
    H = np.empty((3, 3))
    diag = [problem.solve(E[j]).minimum for j in range(3)]
    for j in range(3):
        H[j, j] = diag[j]
        for k in range(j + 1, 3):
            H[j, k] = H[k, j] = 0.5 * (problem.solve(E[j] + E[k]).minimum - diag[j] - diag[k])
    return 0.5 * (H + H.T)


def compute_H(geometry, material, target_edge):
    normalized, norm = normalize_section(geometry)
    mesh = triangulate(normalized, target_edge)
    H = stiffness_from_problem(WarpingProblem(mesh, material))
    return StiffnessForm(H, mesh.n_nodes, mesh.n_triangles, norm)
