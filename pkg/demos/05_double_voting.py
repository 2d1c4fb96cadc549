"""
Coarse-to-fine voting
=====================

Feed exact per-point fields through the voter, then corrupt the points far
from the axis and watch the fine vote ignore them.
"""
import numpy as np

from capt.metrics import direction_error
from capt.model import PerPointPrediction
from capt.synthdata import compute_pointwise_targets, make_sample
from capt.voting import VotingConfig, coarse_vote, double_vote, fine_vote

rec = make_sample("oven", instance_seed=2, view_seed=[2, 0], n=512)
t = compute_pointwise_targets(rec)
pred = PerPointPrediction(np.eye(2)[rec.labels], t.dir, t.dist, t.pdir, t.state, rec.points)
truth = rec.joints[0]

(exact,) = double_vote(pred)
print("exact fields -> direction error", direction_error(exact.direction, truth.direction), "deg")

# scramble the directions predicted by the far half of the cloud
rng = np.random.default_rng(0)
far = t.dist[:, 0] > 1.5 * np.median(t.dist[:, 0])
noisy = pred.dir.copy()
noisy[far, 0] += rng.normal(scale=0.6, size=(far.sum(), 3))
noisy[far, 0] /= np.linalg.norm(noisy[far, 0], axis=-1, keepdims=True)
pred = PerPointPrediction(pred.seg_logits, noisy, pred.dist, pred.pdir, pred.state, pred.points)

coarse = coarse_vote(pred, 0)
fine = fine_vote(pred, coarse, VotingConfig(omega0=0.5, omega1=1.5), 0)
print(f"corrupted {far.sum()} far points")
print("coarse error", round(direction_error(coarse.direction, truth.direction), 3), "deg with",
      coarse.participant_count, "points")
print("fine error  ", round(direction_error(fine.direction, truth.direction), 3), "deg with",
      fine.participant_count, "points")
