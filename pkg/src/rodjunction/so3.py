"""Rotation-group helpers: hat/vee, exponential and logarithm, Jacobians, quaternions.

All functions broadcast over leading axes.  Rotation vectors are ``(..., 3)``,
matrices ``(..., 3, 3)`` and quaternions ``(..., 4)`` in ``(w, x, y, z)`` order.
"""
import numpy as np

_SMALL = 1e-4


def hat(v):
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def vee(A):
    A = np.asarray(A, dtype=float)
    return 0.5 * np.stack(
        [A[..., 2, 1] - A[..., 1, 2], A[..., 0, 2] - A[..., 2, 0], A[..., 1, 0] - A[..., 0, 1]],
        axis=-1,
    )


def _coeffs(theta):
    """(sin t / t, (1 - cos t) / t^2, (t - sin t) / t^3) with series near zero."""
    t2 = theta * theta
    small = theta < _SMALL
    ts = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, np.sin(ts) / ts)
    b = np.where(small, 0.5 - t2 / 24.0 + t2 * t2 / 720.0, (1.0 - np.cos(ts)) / ts**2)
    c = np.where(small, 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0, (ts - np.sin(ts)) / ts**3)
    return a, b, c


def exp(v):
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1)
    a, b, _ = _coeffs(theta)
    K = hat(v)
    I = np.broadcast_to(np.eye(3), K.shape)
    return I + a[..., None, None] * K + b[..., None, None] * (K @ K)


def log(R):
    """Rotation vector of ``R`` with angle in [0, pi]; routed through quaternions for accuracy."""
    return quat_to_rotvec(matrix_to_quat(R))


def right_jacobian(v):
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1)
    _, b, c = _coeffs(theta)
    K = hat(v)
    I = np.broadcast_to(np.eye(3), K.shape)
    return I - b[..., None, None] * K + c[..., None, None] * (K @ K)


def left_jacobian(v):
    return right_jacobian(-np.asarray(v, dtype=float))


def right_jacobian_inv(v):
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1)
    t2 = theta * theta
    small = theta < _SMALL
    ts = np.where(small, 1.0, theta)
    # 1/t^2 - (1 + cos t) / (2 t sin t)
    d = np.where(
        small,
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0,
        1.0 / ts**2 - (1.0 + np.cos(ts)) / (2.0 * ts * np.sin(ts)),
    )
    K = hat(v)
    I = np.broadcast_to(np.eye(3), K.shape)
    return I + 0.5 * K + d[..., None, None] * (K @ K)


def left_jacobian_inv(v):
    return right_jacobian_inv(-np.asarray(v, dtype=float))


def geodesic_distance(R1, R2):
    return np.linalg.norm(log(np.swapaxes(R1, -1, -2) @ R2), axis=-1)


# ---------------------------------------------------------------- quaternions


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_multiply(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pw, px, py, pz = p[..., 0], p[..., 1], p[..., 2], p[..., 3]
    qw, qx, qy, qz = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    out = np.empty(np.broadcast_shapes(p.shape, q.shape))
    out[..., 0] = pw * qw - px * qx - py * qy - pz * qz
    out[..., 1] = pw * qx + px * qw + py * qz - pz * qy
    out[..., 2] = pw * qy - px * qz + py * qw + pz * qx
    out[..., 3] = pw * qz + px * qy - py * qx + pz * qw
    return out


def quat_from_rotvec(v):
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1)
    half = 0.5 * theta
    small = theta < _SMALL
    ts = np.where(small, 1.0, theta)
    # sin(t/2)/t
    k = np.where(small, 0.5 - theta**2 / 48.0, np.sin(half) / ts)
    return np.concatenate([np.cos(half)[..., None], k[..., None] * v], axis=-1)


def quat_to_rotvec(q):
    q = np.asarray(q, dtype=float)
    # canonical hemisphere w >= 0 so the angle lies in [0, pi]
    q = np.where(q[..., :1] < 0.0, -q, q)
    w = q[..., 0]
    xyz = q[..., 1:]
    s = np.linalg.norm(xyz, axis=-1)
    angle = 2.0 * np.arctan2(s, w)
    small = s < 1e-12
    ss = np.where(small, 1.0, s)
    k = np.where(small, 2.0 / np.where(w == 0.0, 1.0, w), angle / ss)
    return k[..., None] * xyz


def quat_to_matrix(q):
    q = quat_normalize(q)
    w, x, y, z = np.moveaxis(q, -1, 0)
    out = np.empty(q.shape[:-1] + (3, 3))
    out[..., 0, 0] = 1 - 2 * (y * y + z * z)
    out[..., 0, 1] = 2 * (x * y - z * w)
    out[..., 0, 2] = 2 * (x * z + y * w)
    out[..., 1, 0] = 2 * (x * y + z * w)
    out[..., 1, 1] = 1 - 2 * (x * x + z * z)
    out[..., 1, 2] = 2 * (y * z - x * w)
    out[..., 2, 0] = 2 * (x * z - y * w)
    out[..., 2, 1] = 2 * (y * z + x * w)
    out[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def matrix_to_quat(R):
    """Shepperd's method, branch chosen per element on the largest diagonal term."""
    R = np.asarray(R, dtype=float)
    shape = R.shape[:-2]
    R = R.reshape(-1, 3, 3)
    tr = np.trace(R, axis1=1, axis2=2)
    diag = np.stack([tr, R[:, 0, 0], R[:, 1, 1], R[:, 2, 2]], axis=1)
    pick = np.argmax(diag, axis=1)
    q = np.empty((R.shape[0], 4))
    for branch in range(4):
        idx = np.nonzero(pick == branch)[0]
        if idx.size == 0:
            continue
        M = R[idx]
        if branch == 0:
            t = np.sqrt(1.0 + tr[idx]) * 2.0
            q[idx, 0] = 0.25 * t
            q[idx, 1] = (M[:, 2, 1] - M[:, 1, 2]) / t
            q[idx, 2] = (M[:, 0, 2] - M[:, 2, 0]) / t
            q[idx, 3] = (M[:, 1, 0] - M[:, 0, 1]) / t
        elif branch == 1:
            t = np.sqrt(1.0 + M[:, 0, 0] - M[:, 1, 1] - M[:, 2, 2]) * 2.0
            q[idx, 0] = (M[:, 2, 1] - M[:, 1, 2]) / t
            q[idx, 1] = 0.25 * t
            q[idx, 2] = (M[:, 0, 1] + M[:, 1, 0]) / t
            q[idx, 3] = (M[:, 0, 2] + M[:, 2, 0]) / t
        elif branch == 2:
            t = np.sqrt(1.0 + M[:, 1, 1] - M[:, 0, 0] - M[:, 2, 2]) * 2.0
            q[idx, 0] = (M[:, 0, 2] - M[:, 2, 0]) / t
            q[idx, 1] = (M[:, 0, 1] + M[:, 1, 0]) / t
            q[idx, 2] = 0.25 * t
            q[idx, 3] = (M[:, 1, 2] + M[:, 2, 1]) / t
        else:
            t = np.sqrt(1.0 + M[:, 2, 2] - M[:, 0, 0] - M[:, 1, 1]) * 2.0
            q[idx, 0] = (M[:, 1, 0] - M[:, 0, 1]) / t
            q[idx, 1] = (M[:, 0, 2] + M[:, 2, 0]) / t
            q[idx, 2] = (M[:, 1, 2] + M[:, 2, 1]) / t
            q[idx, 3] = 0.25 * t
    q = np.where(q[:, :1] < 0.0, -q, q)
    return q.reshape(shape + (4,))


def polar_rotation(M):
    """Nearest orthogonal matrix (polar factor) via SVD."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    return U @ Vt
