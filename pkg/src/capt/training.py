"""Mini-batch training and split evaluation."""
import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .losses import TERMS, LossWeights, MotionLossConfig, compute_losses
from .metrics import aggregate, sample_row
from .optim import Adam
from .synthdata.generator import JointSpec
from .voting import VotingConfig, coarse_votes, double_vote

log = logging.getLogger(__name__)

BATCH_FIELDS = ("labels", "tdir", "tdist", "tpdir", "tstate", "valid", "active", "joint_dir", "joint_pivot")


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    lr: float = 1e-3
    lr_min_ratio: float = 0.05
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    motion: MotionLossConfig = field(default_factory=MotionLossConfig)


@dataclass
class TrainResult:
    steps: list
    epochs: list
    best_epoch: int
    best_val: float


def batch_dict(split, idx):
    return {name: getattr(split, name)[idx] for name in BATCH_FIELDS}


def _lr_at(cfg, step, total):
    # cosine decay from lr to lr * lr_min_ratio
    frac = step / max(total - 1, 1)
    low = cfg.lr * cfg.lr_min_ratio
    return low + 0.5 * (cfg.lr - low) * (1 + math.cos(math.pi * frac))


def validation_loss(model, split, cfg, batch_size=16):
    totals = {t: 0.0 for t in TERMS + ("total",)}
    n = len(split)
    with T.no_grad():
        for start in range(0, n, batch_size):
            idx = np.arange(start, min(start + batch_size, n))
            pred = model.forward(split.points[idx])
            terms = compute_losses(pred, batch_dict(split, idx), cfg.weights, cfg.motion)
            for name, value in terms.items():
                totals[name] += float(value.data) * len(idx) / n
    return totals


def train(model, train_split, val_split=None, cfg=TrainConfig(), log_csv=None, checkpoint=None,
          progress=None):
    """Train ``model`` in place with Adam.

    When ``checkpoint`` is given the parameters with the lowest validation
    total loss (or the last epoch without validation) are saved there.
    """
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.parameters(), cfg.lr, cfg.betas, cfg.eps)
    n = len(train_split)
    per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = per_epoch * cfg.epochs
    steps, epochs = [], []
    best_val, best_epoch = math.inf, -1
    writer = fh = None
    if log_csv is not None:
        fh = open(log_csv, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(["step", *TERMS, "total"])
    try:
        step = 0
        for epoch in range(cfg.epochs):
            t0 = time.perf_counter()
            order = rng.permutation(n)
            sums = {t: 0.0 for t in TERMS + ("total",)}
            for start in range(0, n, cfg.batch_size):
                idx = np.sort(order[start:start + cfg.batch_size])
                opt.lr = _lr_at(cfg, step, total_steps)
                opt.zero_grad()
                pred = model.forward(train_split.points[idx])
                terms = compute_losses(pred, batch_dict(train_split, idx), cfg.weights, cfg.motion)
                T.backward(terms["total"])
                opt.step()
                row = {name: float(value.data) for name, value in terms.items()}
                steps.append(row)
                if writer is not None:
                    writer.writerow([step] + [repr(row[t]) for t in TERMS] + [repr(row["total"])])
                for name in sums:
                    sums[name] += row[name] * len(idx) / n
                step += 1
            summary = {"epoch": epoch, "train": sums, "seconds": time.perf_counter() - t0}
            if val_split is not None:
                summary["val"] = validation_loss(model, val_split, cfg)
                score = summary["val"]["total"]
            else:
                score = -epoch
            if score < best_val:
                best_val, best_epoch = score, epoch
                if checkpoint is not None:
                    model.save(checkpoint)
            epochs.append(summary)
            log.info("epoch %d train %.4f val %s (%.1fs)", epoch, sums["total"],
                     f"{summary['val']['total']:.4f}" if "val" in summary else "-", summary["seconds"])
            if progress is not None:
                progress(summary)
    finally:
        if fh is not None:
            fh.close()
    return TrainResult(steps, epochs, best_epoch, best_val)


def gt_joints(split, i):
    return [JointSpec(split.joint_dir[i, k], split.joint_pivot[i, k], float(split.joint_state[i, k]))
            for k in range(split.joint_dir.shape[1]) if split.active[i, k]]


def predict_split(model, split, batch_size=16):
    preds = []
    for start in range(0, len(split), batch_size):
        idx = np.arange(start, min(start + batch_size, len(split)))
        batch = model.predict(split.points[idx])
        preds.extend(batch.take(i) for i in range(len(idx)))
    return preds


def evaluate(model, split, voting=VotingConfig(), batch_size=16):
    """Fine (double) and coarse-only voting reports over a loaded split."""
    preds = predict_split(model, split, batch_size)
    rows = {"fine": [], "coarse": []}
    for i, pred in enumerate(preds):
        gts = gt_joints(split, i)
        labels = pred.labels()
        rows["fine"].append(sample_row(labels, split.labels[i], double_vote(pred, voting, len(gts)), gts))
        rows["coarse"].append(sample_row(labels, split.labels[i], coarse_votes(pred, len(gts)), gts))
    return {name: aggregate(r) for name, r in rows.items()}
