"""Training objective: segmentation, per-point joint fields and motion loss.

Per-joint terms are normalized like ``sum_k sum_i e_ki / (n_J * n_k)``: every
active joint contributes the mean error over its selected points, and joints
are averaged. Batched inputs are additionally averaged over samples.
"""
from dataclasses import astuple, dataclass

import numpy as np

from . import tensor as T
from .geometry import DegenerateInputError, rodrigues_rotate_tensor

TERMS = ("seg", "dir", "pdir", "dist", "state", "motion")


@dataclass(frozen=True)
class LossWeights:
    seg: float = 1.0
    dir: float = 1.0
    pdir: float = 1.0
    dist: float = 1.0
    state: float = 1.0
    motion: float = 0.1

    def __post_init__(self):
        if any(w < 0 for w in astuple(self)):
            raise ValueError("loss weights must be nonnegative")

    def as_vector(self):
        return np.array(astuple(self))


@dataclass(frozen=True)
class MotionLossConfig:
    alpha: float = np.pi / 2
    metric: str = "l2"

    def __post_init__(self):
        if self.alpha == 0:
            raise ValueError("motion loss rotation angle must be nonzero")
        if self.metric != "l2":
            raise ValueError(f"unsupported motion metric {self.metric!r}")


class TrainingFault(ArithmeticError):
    def __init__(self, term, detail=""):
        super().__init__(f"non-finite loss term {term!r} {detail}".strip())
        self.term = term


def _batch_size(shape, core_dims):
    return int(np.prod(shape[:len(shape) - core_dims])) if len(shape) > core_dims else 1


def joint_weights(mask):
    """Weights for masks shaped (..., n, J) implementing the per-joint normalization."""
    mask = np.asarray(mask, dtype=np.float64)
    n_k = mask.sum(axis=-2, keepdims=True)
    active = (n_k > 0).sum(axis=-1, keepdims=True)
    w = mask / np.where(n_k > 0, n_k, 1) / np.maximum(active, 1)
    return w / _batch_size(mask.shape, 2)


def seg_loss(logits, labels):
    """Mean per-point cross entropy."""
    labels = np.asarray(labels)
    L = logits.shape[-1]
    if labels.size and (labels.max() >= L or labels.min() < 0):
        raise ValueError(f"labels must lie in [0, {L})")
    onehot = np.eye(L, dtype=logits.dtype)[labels]
    logp = T.log_softmax(logits, axis=-1)
    return T.mul(T.sum(T.mul(logp, onehot)), -1.0 / labels.size)


def _cosine_distance_loss(pred, gt, mask):
    gt = np.asarray(gt)
    m = np.asarray(mask, dtype=bool)
    pn = np.linalg.norm(T.tensor(pred).data, axis=-1)
    gn = np.linalg.norm(gt, axis=-1)
    if np.any(m & ((pn == 0) | (gn == 0))):
        raise DegenerateInputError("cosine distance of a zero vector")
    w = joint_weights(m).astype(T.tensor(pred).dtype)
    gt_unit = (gt / np.where(gn == 0, 1, gn)[..., None]).astype(w.dtype)
    # masked-out zero rows get a unit denominator; their weight is 0 anyway
    safe = ((pn == 0) & ~m).astype(w.dtype)
    cos = T.div(T.sum(T.mul(pred, gt_unit), axis=-1), T.add(T.l2norm(pred, axis=-1), safe))
    return T.sum(T.mul(T.sub(1.0, cos), w))


def dir_loss(pred_dir, gt_dir, mask):
    return _cosine_distance_loss(pred_dir, gt_dir, mask)


def pdir_loss(pred_pdir, gt_pdir, mask):
    return _cosine_distance_loss(pred_pdir, gt_pdir, mask)


def dist_loss(pred_dist, gt_dist, mask):
    w = joint_weights(mask).astype(T.tensor(pred_dist).dtype)
    diff = T.sub(pred_dist, np.asarray(gt_dist, dtype=w.dtype))
    return T.sum(T.mul(T.mul(diff, diff), w))


def state_loss(pred_state, gt_state, mask):
    w = joint_weights(mask).astype(T.tensor(pred_state).dtype)
    return T.sum(T.mul(T.abs(T.sub(pred_state, np.asarray(gt_state, dtype=w.dtype))), w))


def aggregate_axes(pred):
    """Equal-weight mean of the per-point axis fields, differentiable.

    Returns ``(direction, pivot)`` tensors shaped (..., J, 3); the direction
    is renormalized after averaging.
    """
    d = T.mean(pred.dir, axis=-3)
    d = T.div(d, T.l2norm(d, axis=-1, keepdims=True))
    pts = np.asarray(pred.points, dtype=pred.dist.dtype)[..., :, None, :]
    pivots = T.add(pts, T.mul(T.reshape(pred.dist, pred.dist.shape + (1,)), pred.pdir))
    return d, T.mean(pivots, axis=-3)


def _rodrigues_np(points, u, q, alpha):
    v = points - q
    c, s = np.cos(alpha), np.sin(alpha)
    return q + v * c + np.cross(u, v) * s + u * (v * u).sum(-1, keepdims=True) * (1 - c)


def motion_loss(points, labels, pred_dir, pred_pivot, gt_dir, gt_pivot, cfg=MotionLossConfig(),
                active=None):
    """Mean distance between child-link points rotated about predicted and true axes.

    ``points`` (..., n, 3); ``labels`` (..., n); axes (..., J, 3). The child
    link of joint ``k`` is link ``k + 1``. Joints whose child link has no
    points contribute nothing and are left out of the normalization.
    """
    pred_dir = T.tensor(pred_dir)
    pred_pivot = T.tensor(pred_pivot)
    norms = np.linalg.norm(pred_dir.data, axis=-1)
    if np.any(np.abs(norms - 1) > 1e-6):
        raise ValueError("predicted joint directions must be unit-norm")
    dtype = pred_dir.dtype
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    gt_dir = np.asarray(gt_dir, dtype=np.float64)
    gt_pivot = np.asarray(gt_pivot, dtype=np.float64)
    J = gt_dir.shape[-2]
    child = np.arange(1, J + 1)
    mask = labels[..., :, None] == child
    if active is not None:
        mask = mask & np.asarray(active, dtype=bool)[..., None, :]
    if not mask.any():
        return T.Tensor(np.zeros((), dtype=dtype))
    w = joint_weights(mask).astype(dtype)

    P = points[..., :, None, :]
    target = _rodrigues_np(P, gt_dir[..., None, :, :], gt_pivot[..., None, :, :], cfg.alpha).astype(dtype)
    moved = rodrigues_rotate_tensor(P.astype(dtype), T.reshape(pred_dir, pred_dir.shape[:-2] + (1,) + pred_dir.shape[-2:]),
                                    T.reshape(pred_pivot, pred_pivot.shape[:-2] + (1,) + pred_pivot.shape[-2:]),
                                    cfg.alpha)
    gap = T.l2norm(T.sub(moved, target), axis=-1)
    return T.sum(T.mul(gap, w))


def total_loss(terms, weights=LossWeights()):
    """Weighted sum of the named loss terms; raises :class:`TrainingFault` on NaN/Inf."""
    total = None
    for name, w in zip(TERMS, weights.as_vector()):
        term = terms.get(name)
        if term is None:
            continue
        value = T.tensor(term)
        if not np.all(np.isfinite(value.data)):
            raise TrainingFault(name)
        if w == 0:
            continue
        piece = T.mul(value, float(w))
        total = piece if total is None else T.add(total, piece)
    if total is None:
        return T.Tensor(0.0)
    return total


def compute_losses(pred, batch, weights=LossWeights(), motion_cfg=MotionLossConfig()):
    """All six terms plus ``total`` for a prediction and a dict of targets.

    ``batch`` carries ``labels``, ``tdir``, ``tdist``, ``tpdir``, ``tstate``,
    ``valid``, ``active``, ``joint_dir`` and ``joint_pivot`` arrays shaped like
    :class:`capt.synthdata.SplitArrays` fields.
    """
    active = np.asarray(batch["active"], dtype=bool)
    valid = np.asarray(batch["valid"], dtype=bool)
    joint_mask = np.broadcast_to(active[..., None, :], valid.shape)
    terms = {}

    def run(name, fn, *args):
        try:
            terms[name] = fn(*args)
        except T.NonFiniteError as exc:
            raise TrainingFault(name, str(exc)) from exc

    run("seg", seg_loss, pred.seg_logits, batch["labels"])
    run("dir", dir_loss, pred.dir, batch["tdir"], joint_mask)
    run("pdir", pdir_loss, pred.pdir, batch["tpdir"], valid)
    run("dist", dist_loss, pred.dist, batch["tdist"], valid)
    run("state", state_loss, pred.state, batch["tstate"], joint_mask)

    def motion():
        axis_dir, axis_pivot = aggregate_axes(pred)
        return motion_loss(pred.points, batch["labels"], axis_dir, axis_pivot,
                           batch["joint_dir"], batch["joint_pivot"], motion_cfg, active)

    if weights.motion > 0:
        run("motion", motion)
    else:
        with T.no_grad():
            run("motion", motion)
    terms["total"] = total_loss(terms, weights)
    return terms
