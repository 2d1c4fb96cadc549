"""Sample files, manifests and split generation.

Sample file (little-endian)::

    b"CPTS" | version u32 | n u32 | n_L u8 | n_J u8 |
    points f32[n,3] | labels u8[n] |
    per joint: dir f32[3] | pivot f32[3] | state f32 |
    per joint: dir f32[n,3] | dist f32[n] | pdir f32[n,3] | state f32[n] |
    valid u8[n, n_J]

``n_L`` and ``n_J`` are the sample's active link and joint counts.
"""
import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .categories import get_category
from .generator import (AugmentConfig, JointSpec, PointwiseTargets, SampleRecord,
                        ViewDegenerateError, augment, build_instance,
                        compute_pointwise_targets, random_camera, random_states,
                        sample_view)

MAGIC = b"CPTS"
VERSION = 1
GENERATOR_VERSION = "capt-synth-1"
SPLITS = ("train", "val", "test")


class SampleFormatError(IOError):
    pass


def write_sample(path, rec, targets=None):
    if targets is None:
        targets = compute_pointwise_targets(rec)
    n, nl, nj = rec.n, rec.active_link_count, rec.active_joint_count
    f4 = "<f4"
    parts = [MAGIC, struct.pack("<IIBB", VERSION, n, nl, nj),
             np.asarray(rec.points, dtype=f4).tobytes(),
             np.asarray(rec.labels, dtype=np.uint8).tobytes()]
    for j in rec.joints[:nj]:
        parts.append(np.asarray(j.direction, dtype=f4).tobytes())
        parts.append(np.asarray(j.pivot, dtype=f4).tobytes())
        parts.append(np.asarray([j.state], dtype=f4).tobytes())
    for k in range(nj):
        parts.append(np.ascontiguousarray(targets.dir[:, k], dtype=f4).tobytes())
        parts.append(np.ascontiguousarray(targets.dist[:, k], dtype=f4).tobytes())
        parts.append(np.ascontiguousarray(targets.pdir[:, k], dtype=f4).tobytes())
        parts.append(np.ascontiguousarray(targets.state[:, k], dtype=f4).tobytes())
    parts.append(np.ascontiguousarray(targets.valid[:, :nj], dtype=np.uint8).tobytes())
    try:
        with open(path, "wb") as fh:
            fh.write(b"".join(parts))
    except OSError as exc:
        raise OSError(f"cannot write sample file {path}: {exc}") from exc


def read_sample(path):
    """Return ``(SampleRecord, PointwiseTargets)`` stored in ``path``."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != MAGIC:
        raise SampleFormatError(f"{path}: bad magic, not a CPTS sample")
    try:
        version, n, nl, nj = struct.unpack_from("<IIBB", buf, 4)
        if version != VERSION:
            raise SampleFormatError(f"{path}: unsupported sample version {version}")
        off = 14

        def take(dtype, count):
            nonlocal off
            arr = np.frombuffer(buf, dtype=dtype, count=count, offset=off)
            off += arr.nbytes
            return arr

        points = take("<f4", n * 3).reshape(n, 3).astype(np.float64)
        labels = take("u1", n).astype(np.int64)
        joints = []
        for _ in range(nj):
            v = take("<f4", 7).astype(np.float64)
            joints.append(JointSpec(v[:3], v[3:6], float(v[6])))
        t = PointwiseTargets(np.zeros((n, nj, 3)), np.zeros((n, nj)), np.zeros((n, nj, 3)),
                             np.zeros((n, nj)), np.zeros((n, nj), bool), np.ones(nj, bool))
        for k in range(nj):
            t.dir[:, k] = take("<f4", n * 3).reshape(n, 3)
            t.dist[:, k] = take("<f4", n)
            t.pdir[:, k] = take("<f4", n * 3).reshape(n, 3)
            t.state[:, k] = take("<f4", n)
        t.valid[:] = take("u1", n * nj).reshape(n, nj).astype(bool)
    except (struct.error, ValueError) as exc:
        raise SampleFormatError(f"{path}: truncated sample file") from exc
    if off != len(buf):
        raise SampleFormatError(f"{path}: trailing bytes")
    rec = SampleRecord(points, labels, joints, nl, nj, {"path": str(path)})
    return rec, t


def split_counts(total, ratio=(7, 2, 1)):
    """Split ``total`` by ``ratio``; rounding remainder goes to the last split."""
    ratio = np.asarray(ratio, dtype=np.float64)
    raw = total * ratio / ratio.sum()
    counts = np.floor(raw + 0.5).astype(int)
    counts[-1] = total - counts[:-1].sum()
    return dict(zip(SPLITS, counts.tolist()))


def make_sample(category, instance_seed, view_seed, n, augment_config=None, max_tries=50):
    """One posed, culled and (optionally) augmented sample."""
    inst = build_instance(category, instance_seed)
    rng = np.random.default_rng(view_seed)
    for _ in range(max_tries):
        states = random_states(inst.category, rng)
        camera = random_camera(rng)
        try:
            rec = sample_view(inst, states, camera, n, rng)
            break
        except ViewDegenerateError:
            continue
    else:
        raise ViewDegenerateError(f"no usable view after {max_tries} cameras")
    if augment_config is not None:
        rec = augment(rec, rng.integers(2**32), augment_config)
    rec.provenance["view_seed"] = list(view_seed) if not np.isscalar(view_seed) else view_seed
    return rec


def generate_dataset(category, counts, out_dir, ratio=(7, 2, 1), seed=0, n=1024,
                     views_per_instance=1, augment_config=AugmentConfig()):
    """Write train/val/test sample files plus ``manifest.json`` under ``out_dir``.

    ``counts`` is either a total split by ``ratio`` or an explicit
    ``{"train": .., "val": .., "test": ..}`` mapping. Every instance belongs to
    exactly one split.
    """
    cat = get_category(category) if isinstance(category, str) else category
    if isinstance(counts, dict):
        per_split = {s: int(counts.get(s, 0)) for s in SPLITS}
    else:
        if counts < 10:
            raise ValueError(f"need at least 10 samples, got {counts}")
        per_split = split_counts(int(counts), ratio)
    if sum(per_split.values()) < 10:
        raise ValueError("need at least 10 samples in total")

    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "category": cat.name,
        "seed": int(seed),
        "generator_version": GENERATOR_VERSION,
        "n": int(n),
        "ratio": list(ratio),
        "counts": per_split,
        "views_per_instance": int(views_per_instance),
        "augment": None if augment_config is None else {
            "rotation_range": augment_config.rotation_bounds().tolist(),
            "translation_range": augment_config.translation_range,
            "scale_range": list(augment_config.scale_range)},
        "splits": {},
        "instances": {},
    }
    next_instance = 0
    for split_idx, split in enumerate(SPLITS):
        split_dir = os.path.join(out_dir, split)
        os.makedirs(split_dir, exist_ok=True)
        paths, instances = [], []
        for i in range(per_split[split]):
            if i % views_per_instance == 0:
                instance_id = next_instance
                next_instance += 1
                instances.append(instance_id)
            instance_seed = [int(seed), 0, instance_id]
            view_seed = [int(seed), 1, instance_id, i % views_per_instance]
            rec = make_sample(cat, instance_seed, view_seed, n, augment_config)
            rel = f"{split}/{i:05d}.cpts"
            write_sample(os.path.join(out_dir, rel), rec, compute_pointwise_targets(rec))
            paths.append(rel)
        manifest["splits"][split] = paths
        manifest["instances"][split] = instances
    write_manifest(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest


def write_manifest(path, manifest):
    try:
        with open(path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write manifest {path}: {exc}") from exc


def read_manifest(path):
    with open(path) as fh:
        return json.load(fh)


@dataclass
class SplitArrays:
    """A whole split stacked into padded arrays (``N`` samples, ``J`` joint channels)."""

    points: np.ndarray        # (N, n, 3)
    labels: np.ndarray        # (N, n)
    tdir: np.ndarray          # (N, n, J, 3)
    tdist: np.ndarray         # (N, n, J)
    tpdir: np.ndarray         # (N, n, J, 3)
    tstate: np.ndarray        # (N, n, J)
    valid: np.ndarray         # (N, n, J) bool
    active: np.ndarray        # (N, J) bool
    joint_dir: np.ndarray     # (N, J, 3)
    joint_pivot: np.ndarray   # (N, J, 3)
    joint_state: np.ndarray   # (N, J)
    link_count: np.ndarray    # (N,)

    def __len__(self):
        return len(self.points)

    def subset(self, idx):
        return SplitArrays(*(getattr(self, f)[idx] for f in self.__dataclass_fields__))


def load_split(root, split, manifest=None, dtype=np.float32):
    manifest = read_manifest(os.path.join(root, "manifest.json")) if manifest is None else manifest
    cat = get_category(manifest["category"])
    J = cat.n_J_max
    files = manifest["splits"].get(split, [])
    if not files:
        raise ValueError(f"split {split!r} is empty")
    recs = [read_sample(os.path.join(root, f)) for f in files]
    N, n = len(recs), recs[0][0].n
    out = SplitArrays(
        np.zeros((N, n, 3), dtype), np.zeros((N, n), np.int64),
        np.zeros((N, n, J, 3), dtype), np.zeros((N, n, J), dtype), np.zeros((N, n, J, 3), dtype),
        np.zeros((N, n, J), dtype), np.zeros((N, n, J), bool), np.zeros((N, J), bool),
        np.zeros((N, J, 3)), np.zeros((N, J, 3)), np.zeros((N, J)), np.zeros(N, np.int64))
    for i, (rec, t) in enumerate(recs):
        nj = rec.active_joint_count
        out.points[i] = rec.points
        out.labels[i] = rec.labels
        out.tdir[i, :, :nj] = t.dir
        out.tdist[i, :, :nj] = t.dist
        out.tpdir[i, :, :nj] = t.pdir
        out.tstate[i, :, :nj] = t.state
        out.valid[i, :, :nj] = t.valid
        out.active[i, :nj] = True
        for k, j in enumerate(rec.joints):
            out.joint_dir[i, k] = j.direction / np.linalg.norm(j.direction)
            out.joint_pivot[i, k] = j.pivot
            out.joint_state[i, k] = j.state
        out.link_count[i] = rec.active_link_count
    return out
