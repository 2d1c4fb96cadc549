"""Coarse-to-fine voting of per-point joint fields into one estimate per joint."""
import math
from dataclasses import dataclass

import numpy as np

from .geometry import point_to_line_distance


class VoteDegenerateError(ArithmeticError):
    pass


@dataclass(frozen=True)
class VotingConfig:
    omega0: float = 0.5
    omega1: float = 1.5

    def __post_init__(self):
        if not 0 <= self.omega0 < self.omega1:
            raise ValueError("voting band needs 0 <= omega0 < omega1")


@dataclass(frozen=True)
class VotedJoint:
    direction: np.ndarray
    pivot: np.ndarray
    state: float
    participant_count: int
    fallback: bool = False

    def to_dict(self):
        return {"direction": [float(x) for x in self.direction],
                "pivot": [float(x) for x in self.pivot],
                "state": float(self.state),
                "participant_count": int(self.participant_count),
                "fallback_flag": bool(self.fallback)}


def lower_median(x):
    s = np.sort(np.asarray(x, dtype=np.float64))
    return float(s[(len(s) - 1) // 2])


def _vote(pred, k, idx):
    direction = pred.dir[idx, k].mean(axis=0)
    norm = np.linalg.norm(direction)
    if norm < 1e-6:
        raise VoteDegenerateError(f"joint {k}: averaged direction cancels out")
    pivots = pred.points[idx] + pred.dist[idx, k, None] * pred.pdir[idx, k]
    return VotedJoint(direction / norm, pivots.mean(axis=0), float(pred.state[idx, k].mean()), len(idx))


def coarse_vote(pred, k):
    """Equal-weight mean of joint ``k``'s fields over all points."""
    pred = pred.detach()
    if len(pred.points) < 1:
        raise ValueError("voting needs at least one point")
    return _vote(pred, k, np.arange(len(pred.points)))


def fine_vote(pred, coarse, cfg, k):
    """Re-vote with the points whose distance to the coarse axis lies in the median band."""
    pred = pred.detach()
    d = point_to_line_distance(pred.points, coarse.pivot, coarse.direction)
    m = lower_median(d)
    lo = cfg.omega0 * m
    keep = d >= lo
    if not math.isinf(cfg.omega1):
        keep &= d <= cfg.omega1 * m
    idx = np.flatnonzero(keep)
    if len(idx) == 0:
        return VotedJoint(coarse.direction, coarse.pivot, coarse.state, coarse.participant_count, True)
    return _vote(pred, k, idx)


def double_vote(pred, cfg=VotingConfig(), n_joints=None):
    """Coarse then fine vote for each joint channel (or the first ``n_joints``)."""
    pred = pred.detach()
    J = pred.dir.shape[-2] if n_joints is None else n_joints
    out = []
    for k in range(J):
        out.append(fine_vote(pred, coarse_vote(pred, k), cfg, k))
    return out


def coarse_votes(pred, n_joints=None):
    pred = pred.detach()
    J = pred.dir.shape[-2] if n_joints is None else n_joints
    return [coarse_vote(pred, k) for k in range(J)]
