"""Instances, single-view sampling, augmentation and per-point targets."""
from dataclasses import dataclass, field, replace

import numpy as np

from ..geometry import (ON_AXIS_TOL, Line3, any_perpendicular, axis_angle_matrix,
                        euler_xyz_matrix, normalize)
from .categories import get_category, joint_direction, randomized_dims


class ViewDegenerateError(RuntimeError):
    """Back-face culling left too few candidate points for the requested view."""


@dataclass(frozen=True)
class JointSpec:
    direction: np.ndarray
    pivot: np.ndarray
    state: float
    limits: tuple = (-np.pi, np.pi)

    @property
    def axis(self):
        return Line3(self.direction, self.pivot)


@dataclass
class SampleRecord:
    points: np.ndarray
    labels: np.ndarray
    joints: list
    active_link_count: int
    active_joint_count: int
    provenance: dict = field(default_factory=dict)

    @property
    def n(self):
        return len(self.points)


@dataclass
class PointwiseTargets:
    """Per-point ground truth, padded to ``n_joints`` channels.

    Arrays are ``dir (n, J, 3)``, ``dist (n, J)``, ``pdir (n, J, 3)``,
    ``state (n, J)``, ``valid (n, J)`` and ``active (J,)``. Inactive channels
    are zero and invalid everywhere.
    """

    dir: np.ndarray
    dist: np.ndarray
    pdir: np.ndarray
    state: np.ndarray
    valid: np.ndarray
    active: np.ndarray


@dataclass
class Instance:
    category: object
    seed: int
    dims: dict
    boxes: list
    rest_axes: list

    def link_transforms(self, states):
        """Rigid transform ``(R, t)`` of each link for the given joint states."""
        cat = self.category
        if len(states) != cat.n_joints:
            raise ValueError(f"expected {cat.n_joints} joint states, got {len(states)}")
        R = [np.eye(3)]
        t = [np.zeros(3)]
        for j, parent in enumerate(cat.parents):
            axis = self.rest_axes[j]
            Rj = axis_angle_matrix(axis.direction, states[j])
            tj = axis.pivot - Rj @ axis.pivot
            R.append(R[parent] @ Rj)
            t.append(R[parent] @ tj + t[parent])
        return R, t

    def posed_joints(self, states):
        R, t = self.link_transforms(states)
        out = []
        for j, parent in enumerate(self.category.parents):
            axis = self.rest_axes[j]
            out.append(JointSpec(normalize(R[parent] @ axis.direction),
                                 R[parent] @ axis.pivot + t[parent],
                                 float(states[j]), tuple(self.category.limits[j])))
        return out

    def pose_points(self, local_points, links, states):
        """Move rest-frame points belonging to ``links`` into the posed frame."""
        R, t = self.link_transforms(states)
        out = np.empty_like(local_points)
        for link in range(self.category.n_links):
            m = links == link
            out[m] = local_points[m] @ R[link].T + t[link]
        return out

    def surface_samples(self, count, rng):
        """Area-uniform rest-frame surface samples: ``(points, normals, links)``."""
        faces = []
        for box in self.boxes:
            c = np.asarray(box.center, dtype=np.float64)
            s = np.asarray(box.size, dtype=np.float64)
            for ax in range(3):
                u, v = [a for a in range(3) if a != ax]
                for sign in (-1.0, 1.0):
                    faces.append((box.link, c, s, ax, u, v, sign, s[u] * s[v]))
        areas = np.array([f[-1] for f in faces])
        which = rng.choice(len(faces), size=count, p=areas / areas.sum())
        uv = rng.uniform(-0.5, 0.5, size=(count, 2))
        pts = np.empty((count, 3))
        nrm = np.zeros((count, 3))
        links = np.empty(count, dtype=np.int64)
        for f_idx, (link, c, s, ax, u, v, sign, _) in enumerate(faces):
            m = which == f_idx
            k = int(m.sum())
            if k == 0:
                continue
            p = np.tile(c, (k, 1))
            p[:, ax] += sign * s[ax] / 2
            p[:, u] += uv[m, 0] * s[u]
            p[:, v] += uv[m, 1] * s[v]
            pts[m] = p
            nrm[m, ax] = sign
            links[m] = link
        return pts, nrm, links


def build_instance(category, seed):
    """Randomized box geometry and rest-pose joint axes, deterministic in ``seed``."""
    if isinstance(category, str):
        category = get_category(category)
    rng = np.random.default_rng(seed)
    dims = randomized_dims(category, rng)
    boxes, templates = category.build(dims)
    axes = [Line3(joint_direction(tpl), np.asarray(tpl.pivot, dtype=np.float64)) for tpl in templates]
    return Instance(category, int(seed) if np.isscalar(seed) else seed, dims, boxes, axes)


def random_states(category, rng):
    return np.array([rng.uniform(lo, hi) for lo, hi in category.limits])


def random_camera(rng, min_elevation=0.15):
    """Unit direction from the object toward the camera, on the upper hemisphere."""
    while True:
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        if v[2] >= min_elevation:
            return v


def sample_view(instance, states, camera, n=1024, rng=None, oversample=4):
    """Single partial view of ``instance`` posed at ``states``.

    Surface points whose outward normal faces away from ``camera`` are
    discarded, then the rest is resampled to exactly ``n`` points.
    """
    if n < 64:
        raise ValueError("a view needs at least 64 points")
    cat = instance.category
    states = np.asarray(states, dtype=np.float64)
    for (lo, hi), s in zip(cat.limits, states):
        if not lo - 1e-12 <= s <= hi + 1e-12:
            raise ValueError(f"state {s} outside limits [{lo}, {hi}]")
    camera = normalize(camera)
    rng = np.random.default_rng() if rng is None else rng

    local, normals, links = instance.surface_samples(oversample * n, rng)
    R, _ = instance.link_transforms(states)
    facing = _rotate_normals(R, normals, links) @ camera > 0
    keep = np.flatnonzero(facing)
    if len(keep) < n // 4:
        raise ViewDegenerateError(f"only {len(keep)} visible points for n={n}")
    pick = rng.choice(keep, size=n, replace=len(keep) < n)
    points = instance.pose_points(local[pick], links[pick], states)
    return SampleRecord(
        points=points,
        labels=links[pick].astype(np.int64),
        joints=instance.posed_joints(states),
        active_link_count=cat.n_links,
        active_joint_count=cat.n_joints,
        provenance={"category": cat.name, "instance_seed": instance.seed,
                    "states": states.tolist(), "camera": camera.tolist()},
    )


def _rotate_normals(R, normals, links):
    out = np.empty_like(normals)
    for link, Rl in enumerate(R):
        m = links == link
        out[m] = normals[m] @ Rl.T
    return out


@dataclass(frozen=True)
class AugmentConfig:
    """Uniform Euler x/y/z rotation, translation and scale ranges.

    ``rotation_range`` is one bound for all three axes or a per-axis triple.
    """
    rotation_range: object = np.pi
    translation_range: float = 1.0
    scale_range: tuple = (0.8, 1.2)

    def rotation_bounds(self):
        return np.broadcast_to(np.asarray(self.rotation_range, dtype=np.float64), (3,)).copy()

    def draw(self, rng):
        r = self.rotation_bounds()
        return (rng.uniform(-r, r, size=3), rng.uniform(-self.translation_range, self.translation_range, size=3),
                float(rng.uniform(*self.scale_range)))


def augment(rec, seed=None, config=AugmentConfig(), rotation=None, translation=None, scale=None):
    """Random rigid motion plus uniform scaling applied to points and joints.

    Explicit ``rotation`` (Euler x/y/z radians), ``translation`` or ``scale``
    override the random draw. Joint states are unchanged.
    """
    rng = np.random.default_rng(seed)
    rot, trans, sc = config.draw(rng)
    rot = rot if rotation is None else np.asarray(rotation, dtype=np.float64)
    trans = trans if translation is None else np.asarray(translation, dtype=np.float64)
    sc = sc if scale is None else float(scale)
    R = euler_xyz_matrix(*rot)

    points = sc * rec.points @ R.T + trans
    joints = [replace(j, direction=normalize(R @ j.direction), pivot=sc * (R @ j.pivot) + trans)
              for j in rec.joints]
    prov = dict(rec.provenance)
    prov["augment"] = {"rotation": rot.tolist(), "translation": trans.tolist(), "scale": sc}
    return replace(rec, points=points, joints=joints, provenance=prov)


def compute_pointwise_targets(rec, n_joints=None):
    """Per-point direction, distance, foot direction and state for every joint."""
    n = rec.n
    J = rec.active_joint_count if n_joints is None else n_joints
    if J < rec.active_joint_count:
        raise ValueError("n_joints smaller than the record's active joint count")
    out = PointwiseTargets(
        dir=np.zeros((n, J, 3)), dist=np.zeros((n, J)), pdir=np.zeros((n, J, 3)),
        state=np.zeros((n, J)), valid=np.zeros((n, J), dtype=bool), active=np.zeros(J, dtype=bool))
    p = np.asarray(rec.points, dtype=np.float64)
    for k, joint in enumerate(rec.joints[:rec.active_joint_count]):
        u = np.asarray(joint.direction, dtype=np.float64)
        w = p - joint.pivot
        foot = joint.pivot + (w @ u)[:, None] * u
        offset = foot - p
        dist = np.linalg.norm(offset, axis=1)
        ok = dist >= ON_AXIS_TOL
        pdir = np.tile(any_perpendicular(u), (n, 1))
        pdir[ok] = offset[ok] / dist[ok, None]
        out.dir[:, k] = u
        out.dist[:, k] = np.where(ok, dist, 0.0)
        out.pdir[:, k] = pdir
        out.state[:, k] = joint.state
        out.valid[:, k] = ok
        out.active[k] = True
    return out
