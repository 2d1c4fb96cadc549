"""Category-level articulation estimation from a single point cloud.

Submodules: ``tensor`` (reverse-mode autodiff), ``geometry``, ``synthdata``,
``model``, ``losses``, ``voting``, ``metrics``, ``training`` and ``cli``.
"""
from .geometry import Line3
from .losses import LossWeights, MotionLossConfig
from .model import CAPTModel, ModelConfig, PerPointPrediction
from .voting import VotedJoint, VotingConfig, coarse_vote, double_vote, fine_vote

__version__ = "0.1.0"
