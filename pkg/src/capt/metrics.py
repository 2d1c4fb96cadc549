"""Segmentation and joint-estimation metrics with a table-style report."""
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import Line3, cosine_similarity, line_to_line_distance

DIR_THRESHOLDS = (5.0, 10.0)       # degrees -> AP5, AP10
POS_THRESHOLDS = (0.01, 0.05)      # scene units -> AP1, AP5
STATE_THRESHOLDS = (5.0, 10.0)     # degrees -> AP5, AP10


def confusion_matrix(pred, gt, n_classes=None):
    pred = np.asarray(pred, dtype=np.int64)
    gt = np.asarray(gt, dtype=np.int64)
    if pred.shape != gt.shape:
        raise ValueError("prediction and ground truth label arrays differ in length")
    L = int(max(pred.max(initial=0), gt.max(initial=0)) + 1) if n_classes is None else n_classes
    return np.bincount(gt * L + pred, minlength=L * L).reshape(L, L)


def seg_metrics_from_confusion(cm):
    """PA and mIoU (mean over classes present in ground truth) from a gt-by-pred matrix."""
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    gt_count = cm.sum(axis=1)
    union = gt_count + cm.sum(axis=0) - tp
    present = gt_count > 0
    pa = tp.sum() / cm.sum()
    miou = float(np.mean(tp[present] / union[present]))
    return float(pa), miou


def seg_metrics(pred_labels, gt_labels):
    return seg_metrics_from_confusion(confusion_matrix(pred_labels, gt_labels))


def direction_error(pred, gt):
    """Angle in degrees between directed axes.

    Computed as atan2(|u x v|, u . v): identical to the arccos of the cosine
    similarity but accurate for nearly parallel axes.
    """
    cosine_similarity(pred, gt)  # zero-vector check
    u = np.asarray(pred, dtype=np.float64)
    v = np.asarray(gt, dtype=np.float64)
    return float(np.degrees(np.arctan2(np.linalg.norm(np.cross(u, v)), u @ v)))


def position_error(pred, gt):
    return line_to_line_distance(pred, gt)


def state_error(pred, gt):
    return float(np.degrees(abs(pred - gt)))


def ap(errors, threshold):
    """Fraction of errors strictly below ``threshold``."""
    errors = np.asarray(errors, dtype=np.float64)
    return float(np.mean(errors < threshold))


@dataclass
class JointMetrics:
    MED_dir: float
    AP5_dir: float
    AP10_dir: float
    AED: float
    AP1_pos: float
    AP5_pos: float
    MED_state: float
    AP5_state: float
    AP10_state: float

    @classmethod
    def from_errors(cls, dir_err, pos_err, state_err, thresholds=None):
        th = thresholds or {"dir": DIR_THRESHOLDS, "pos": POS_THRESHOLDS, "state": STATE_THRESHOLDS}
        return cls(
            float(np.mean(dir_err)), ap(dir_err, th["dir"][0]), ap(dir_err, th["dir"][1]),
            float(np.mean(pos_err)), ap(pos_err, th["pos"][0]), ap(pos_err, th["pos"][1]),
            float(np.mean(state_err)), ap(state_err, th["state"][0]), ap(state_err, th["state"][1]))


@dataclass
class EvalReport:
    PA: float
    mIoU: float
    joints: list
    mean: JointMetrics
    sample_count: int
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self, title=""):
        return format_table([(title or "CAPT", self)])


def sample_row(pred_labels, gt_labels, voted, gt_joints):
    """Per-sample errors: voted joints vs ground truth (``JointSpec``-like objects)."""
    pa, miou = seg_metrics(pred_labels, gt_labels)
    row = {"PA": pa, "mIoU": miou, "dir": [], "pos": [], "state": []}
    for v, g in zip(voted, gt_joints):
        gdir = np.asarray(g.direction, dtype=np.float64)
        gdir = gdir / np.linalg.norm(gdir)
        row["dir"].append(direction_error(v.direction, gdir))
        row["pos"].append(position_error(Line3(v.direction, v.pivot), Line3(gdir, g.pivot)))
        row["state"].append(state_error(v.state, g.state))
    return row


def aggregate(rows, thresholds=None):
    """Average per-sample rows into an :class:`EvalReport`."""
    if not rows:
        raise ValueError("cannot aggregate an empty evaluation set")
    J = max(len(r["dir"]) for r in rows)
    joints = []
    for k in range(J):
        sel = [r for r in rows if len(r["dir"]) > k]
        joints.append(JointMetrics.from_errors([r["dir"][k] for r in sel], [r["pos"][k] for r in sel],
                                               [r["state"][k] for r in sel], thresholds))
    all_dir = [e for r in rows for e in r["dir"]]
    all_pos = [e for r in rows for e in r["pos"]]
    all_state = [e for r in rows for e in r["state"]]
    mean = JointMetrics.from_errors(all_dir, all_pos, all_state, thresholds)
    return EvalReport(float(np.mean([r["PA"] for r in rows])), float(np.mean([r["mIoU"] for r in rows])),
                      joints, mean, len(rows))


_COLUMNS = [("MED", "MED_dir", "{:.2f}"), ("AP5", "AP5_dir", "{:.2f}"), ("AP10", "AP10_dir", "{:.2f}"),
            ("AED", "AED", "{:.3f}"), ("AP1", "AP1_pos", "{:.2f}"), ("AP5", "AP5_pos", "{:.2f}"),
            ("MED", "MED_state", "{:.2f}"), ("AP5", "AP5_state", "{:.2f}"), ("AP10", "AP10_state", "{:.2f}")]


def format_table(named_reports):
    """Plain-text table: segmentation, joint direction, position and state groups."""
    header1 = ["Method", "Segmentation", "", "Joint Direction", "", "", "Joint Position", "", "",
               "Joint State", "", ""]
    header2 = ["", "PA", "mIoU"] + [c[0] for c in _COLUMNS]
    rows = [header1, header2]
    for name, rep in named_reports:
        cells = [name, f"{rep.PA:.3f}", f"{rep.mIoU:.3f}"]
        for _, key, fmt in _COLUMNS:
            cells.append(", ".join(fmt.format(getattr(j, key)) for j in rep.joints))
        rows.append(cells)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header2))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows) + "\n"
