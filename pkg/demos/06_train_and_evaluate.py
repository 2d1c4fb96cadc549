"""
Training, evaluation and export
===============================

A short run on a small laptop set, finishing in about a minute. Eight epochs
get segmentation going but not the hinge axis: expect direction errors near
90 degrees here. The 30-epoch surrogate from the README reaches a few degrees.
"""
import os
import sys
import tempfile

import numpy as np

from capt.metrics import format_table
from capt.model import CAPTModel, ModelConfig
from capt.ply import write_ply
from capt.synthdata import AugmentConfig, generate_dataset, load_split
from capt.training import TrainConfig, evaluate, train
from capt.voting import double_vote

out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp()
generate_dataset("laptop", {"train": 60, "val": 10, "test": 10}, out, seed=1, n=256,
                 augment_config=AugmentConfig(rotation_range=(0.0, 0.0, np.pi)))
train_split, val_split, test_split = (load_split(out, s) for s in ("train", "val", "test"))

model = CAPTModel(ModelConfig(n=256, d_e=32))
ckpt = os.path.join(out, "laptop.capt")
result = train(model, train_split, val_split, TrainConfig(epochs=8),
               log_csv=os.path.join(out, "loss.csv"), checkpoint=ckpt,
               progress=lambda s: print(f"epoch {s['epoch']} train {s['train']['total']:.3f} "
                                        f"val {s['val']['total']:.3f}"))

best = CAPTModel.load(ckpt, dtype="float64")
reports = evaluate(best, test_split)
print(format_table([("double voting", reports["fine"]), ("coarse only", reports["coarse"])]))

# one sample with predicted (red) and true (green) hinges
pred = best.predict(test_split.points[0])
joints = double_vote(pred)
write_ply(os.path.join(out, "sample.ply"), test_split.points[0], pred.labels(),
          [(j.direction, j.pivot) for j in joints],
          [(test_split.joint_dir[0, 0], test_split.joint_pivot[0, 0])])
print("wrote", os.path.join(out, "sample.ply"))
