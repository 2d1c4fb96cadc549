"""Procedural articulated categories built from boxes.

Every category is described in an object rest frame with +z up. A builder
receives per-instance dimension factors and returns the link boxes and the
joint axes at zero state. Link 0 is the base; the child of joint ``j`` is
link ``j + 1``.
"""
from dataclasses import dataclass

import numpy as np

from ..geometry import normalize


@dataclass(frozen=True)
class Box:
    link: int
    center: tuple
    size: tuple


@dataclass(frozen=True)
class JointTemplate:
    direction: tuple
    pivot: tuple


@dataclass(frozen=True)
class CategorySpec:
    name: str
    n_links: int
    n_joints: int
    parents: tuple
    limits: tuple
    nominal: dict
    direction_convention: str
    zero_state: str

    def __post_init__(self):
        if len(self.parents) != self.n_joints or len(self.limits) != self.n_joints:
            raise ValueError(f"{self.name}: one parent and one limit pair per joint")
        if self.n_joints != self.n_links - 1:
            raise ValueError(f"{self.name}: tree objects need n_joints == n_links - 1")
        for j, parent in enumerate(self.parents):
            # parents must precede children so the tree is acyclic and rooted at 0
            if not 0 <= parent <= j:
                raise ValueError(f"{self.name}: joint {j} has invalid parent {parent}")
        for lo, hi in self.limits:
            if not -np.pi < lo < hi < np.pi:
                raise ValueError(f"{self.name}: state limits must lie inside (-pi, pi)")

    @property
    def n_L_max(self):
        return self.n_links

    @property
    def n_J_max(self):
        return self.n_joints

    def build(self, dims):
        return _BUILDERS[self.name](dims)


def _laptop(d):
    w, depth, hb, hl = d["width"], d["depth"], d["base_height"], d["lid_thickness"]
    lid_depth = depth * d["lid_ratio"]
    boxes = [
        Box(0, (0, 0, hb / 2), (w, depth, hb)),
        # zero state: lid lies flat behind the hinge, top flush with the base
        Box(1, (0, depth / 2 + lid_depth / 2, hb - hl / 2), (w * 0.98, lid_depth, hl)),
    ]
    return boxes, [JointTemplate((1, 0, 0), (0, depth / 2, hb))]


def _oven(d):
    w, depth, h, t = d["width"], d["depth"], d["height"], d["door_thickness"]
    z0 = h * 0.1
    door_h = h * 0.8
    boxes = [
        Box(0, (0, 0, h / 2), (w, depth, h)),
        Box(1, (0, -depth / 2 - t / 2, z0 + door_h / 2), (w * 0.9, t, door_h)),
    ]
    return boxes, [JointTemplate((1, 0, 0), (0, -depth / 2, z0))]


def _washing_machine(d):
    w, depth, h, t, r = d["width"], d["depth"], d["height"], d["door_thickness"], d["door_size"]
    zc = h * 0.55
    boxes = [
        Box(0, (0, 0, h / 2), (w, depth, h)),
        Box(1, (0, -depth / 2 - t / 2, zc), (r, t, r)),
    ]
    return boxes, [JointTemplate((0, 0, -1), (-r / 2, -depth / 2, zc))]


def _eyeglasses(d):
    w, t, h, length, rim = d["width"], d["frame_thickness"], d["height"], d["temple_length"], d["temple_width"]
    boxes = [
        Box(0, (0, 0, 0), (w, t, h)),
        Box(1, (-w / 2 + rim / 2, t / 2 + length / 2, h / 4), (rim, length, rim * 1.5)),
        Box(2, (w / 2 - rim / 2, t / 2 + length / 2, h / 4), (rim, length, rim * 1.5)),
    ]
    joints = [
        JointTemplate((0, 0, -1), (-w / 2 + rim / 2, t / 2, 0)),
        JointTemplate((0, 0, 1), (w / 2 - rim / 2, t / 2, 0)),
    ]
    return boxes, joints


def _scissors(d):
    length, front, wid, t = d["blade_length"], d["front_ratio"], d["blade_width"], d["thickness"]
    x0 = length * (front - 0.5)
    boxes = [
        Box(0, (0, 0, 0), (wid * 1.2, wid * 1.2, t * 2.2)),
        Box(1, (x0, 0, t / 2 + t * 0.1), (length, wid, t)),
        Box(2, (x0, 0, -t / 2 - t * 0.1), (length, wid, t)),
    ]
    joints = [JointTemplate((0, 0, 1), (0, 0, 0)), JointTemplate((0, 0, -1), (0, 0, 0))]
    return boxes, joints


_BUILDERS = {
    "laptop": _laptop,
    "oven": _oven,
    "washing_machine": _washing_machine,
    "eyeglasses": _eyeglasses,
    "scissors": _scissors,
}

CATEGORIES = {
    "laptop": CategorySpec(
        "laptop", 2, 1, (0,), ((0.0, 2.4),),
        {"width": 0.7, "depth": 0.5, "base_height": 0.06, "lid_thickness": 0.02, "lid_ratio": 0.95},
        "hinge along the back edge, positive state raises the lid",
        "lid coplanar with the base (flat open)"),
    "oven": CategorySpec(
        "oven", 2, 1, (0,), ((0.0, 1.5),),
        {"width": 0.6, "depth": 0.5, "height": 0.45, "door_thickness": 0.03},
        "hinge along the bottom front edge, positive state lowers the door",
        "door closed"),
    "washing_machine": CategorySpec(
        "washing_machine", 2, 1, (0,), ((0.0, 1.5),),
        {"width": 0.6, "depth": 0.55, "height": 0.8, "door_thickness": 0.03, "door_size": 0.4},
        "vertical hinge on the left door edge, positive state swings the door outward",
        "door closed"),
    "eyeglasses": CategorySpec(
        "eyeglasses", 3, 2, (0, 0), ((0.0, 1.5), (0.0, 1.5)),
        {"width": 0.7, "frame_thickness": 0.03, "height": 0.2, "temple_length": 0.6, "temple_width": 0.025},
        "vertical hinges at the frame ends, positive state folds a temple inward",
        "temples perpendicular to the frame (worn pose)"),
    "scissors": CategorySpec(
        "scissors", 3, 2, (0, 0), ((0.0, 0.8), (0.0, 0.8)),
        {"blade_length": 0.9, "front_ratio": 0.65, "blade_width": 0.08, "thickness": 0.02},
        "shared screw axis, opposite directions so positive state opens both blades",
        "blades closed and aligned"),
}


def get_category(name):
    try:
        return CATEGORIES[name]
    except KeyError:
        raise ValueError(f"unknown category {name!r}; choose from {sorted(CATEGORIES)}") from None


def randomized_dims(category, rng, spread=0.3):
    """Nominal dimensions each scaled by an independent factor in [1-spread, 1+spread]."""
    out = {}
    for key in sorted(category.nominal):
        value = category.nominal[key]
        if key.endswith("ratio"):
            out[key] = value
        else:
            out[key] = value * rng.uniform(1 - spread, 1 + spread)
    return out


def joint_direction(template):
    return normalize(np.asarray(template.direction, dtype=np.float64))
