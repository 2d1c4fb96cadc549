"""3D kernels: axis-angle rotation, point/line distances, line projections."""
from dataclasses import dataclass

import numpy as np

from . import tensor as T

UNIT_TOL = 1e-9
ON_AXIS_TOL = 1e-9


class GeometryError(ValueError):
    pass


class DegenerateInputError(GeometryError):
    pass


def _check_unit(u, tol=UNIT_TOL):
    n = np.linalg.norm(u, axis=-1)
    if np.any(np.abs(n - 1.0) > tol):
        raise GeometryError(f"direction must be unit-norm (got norm {np.ravel(n)[0]:.12g})")


def normalize(v):
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise DegenerateInputError("cannot normalize a zero vector")
    return v / n


@dataclass(frozen=True)
class Line3:
    """Infinite line ``pivot + t * direction``."""

    direction: np.ndarray
    pivot: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        q = np.asarray(self.pivot, dtype=np.float64)
        _check_unit(d)
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "pivot", q)

    @classmethod
    def through(cls, pivot, direction):
        return cls(normalize(direction), np.asarray(pivot, dtype=np.float64))


def rodrigues_rotate(points, axis, alpha):
    """Rotate ``points`` (..., 3) by ``alpha`` radians about the line ``axis``."""
    u = axis.direction
    _check_unit(u)
    if not np.isfinite(alpha):
        raise GeometryError("rotation angle must be finite")
    if alpha == 0:
        return np.array(points, dtype=np.float64)
    v = np.asarray(points, dtype=np.float64) - axis.pivot
    c, s = np.cos(alpha), np.sin(alpha)
    rotated = v * c + np.cross(u, v) * s + (v @ u)[..., None] * u * (1 - c)
    return rotated + axis.pivot


def rodrigues_rotate_tensor(points, direction, pivot, alpha):
    """Differentiable Rodrigues rotation.

    ``points`` (..., 3) array or tensor; ``direction`` and ``pivot`` tensors that
    broadcast against it. Gradients flow to ``direction`` and ``pivot``.
    Unit-ness of ``direction`` is the caller's contract.
    """
    c, s = float(np.cos(alpha)), float(np.sin(alpha))
    v = T.sub(points, pivot)
    uv = T.sum(T.mul(v, direction), axis=-1, keepdims=True)
    out = T.mul(v, c)
    out = T.add(out, T.mul(T.cross(direction, v), s))
    out = T.add(out, T.mul(T.mul(direction, uv), 1 - c))
    return T.add(out, pivot)


def point_to_line_distance(p, q, u):
    """Perpendicular distance from ``p`` to the line through ``q`` along unit ``u``.

    Vectorized over leading axes of ``p``.
    """
    u = np.asarray(u, dtype=np.float64)
    _check_unit(u)
    w = np.asarray(p, dtype=np.float64) - q
    along = (w @ u)[..., None] * u
    return np.linalg.norm(along - w, axis=-1)


def cosine_similarity(u, v):
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = np.linalg.norm(u, axis=-1)
    nv = np.linalg.norm(v, axis=-1)
    if np.any(nu == 0) or np.any(nv == 0):
        raise DegenerateInputError("cosine similarity of a zero vector")
    return np.clip((u * v).sum(axis=-1) / (nu * nv), -1.0, 1.0)


def project_point_to_line(p, axis):
    """Return ``(foot, pdir, dist)`` for points ``p`` (..., 3).

    ``pdir`` is the unit vector from ``p`` toward its foot on the axis, so
    ``p + dist * pdir == foot``.
    """
    p = np.asarray(p, dtype=np.float64)
    w = p - axis.pivot
    foot = axis.pivot + (w @ axis.direction)[..., None] * axis.direction
    offset = foot - p
    dist = np.linalg.norm(offset, axis=-1)
    if np.any(dist < ON_AXIS_TOL):
        raise DegenerateInputError("point lies on the axis; perpendicular direction undefined")
    return foot, offset / dist[..., None], dist


def any_perpendicular(u):
    """A fixed unit vector orthogonal to ``u``."""
    u = np.asarray(u, dtype=np.float64)
    e = np.zeros(3)
    e[np.argmin(np.abs(u))] = 1.0
    return normalize(np.cross(u, e))


def line_to_line_distance(a, b):
    """Minimum distance between two infinite lines."""
    _check_unit(a.direction)
    _check_unit(b.direction)
    w = b.pivot - a.pivot
    n = np.cross(a.direction, b.direction)
    nn = np.linalg.norm(n)
    if nn < 1e-12:
        return float(point_to_line_distance(b.pivot, a.pivot, a.direction))
    return float(abs(w @ n) / nn)


def axis_angle_matrix(u, alpha):
    """3x3 rotation matrix for unit axis ``u`` and angle ``alpha``."""
    u = np.asarray(u, dtype=np.float64)
    K = np.array([[0, -u[2], u[1]], [u[2], 0, -u[0]], [-u[1], u[0], 0]])
    return np.eye(3) + np.sin(alpha) * K + (1 - np.cos(alpha)) * (K @ K)


def euler_xyz_matrix(rx, ry, rz):
    """Rotation applying x, then y, then z rotations (extrinsic)."""
    return (axis_angle_matrix([0, 0, 1], rz) @ axis_angle_matrix([0, 1, 0], ry)
            @ axis_angle_matrix([1, 0, 0], rx))
