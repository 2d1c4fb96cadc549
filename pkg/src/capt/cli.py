"""Command line: ``capt {gen|train|eval|infer}``.

Exit codes: 0 success, 2 configuration/usage, 3 I/O, 4 numerical fault.
"""
import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field, fields

import numpy as np

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("capt")


class CLIError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    category: str = "laptop"
    seed: int = 0
    model: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)
    voting: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path):
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise CLIError(f"cannot read config {path}: {exc}", EXIT_CONFIG)
        except json.JSONDecodeError as exc:
            raise CLIError(f"invalid JSON in {path}: {exc}", EXIT_CONFIG)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise CLIError(f"unknown config keys: {sorted(unknown)}", EXIT_CONFIG)
        return cls(**raw)


def _floats(text, count=None):
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if count is not None and len(values) != count:
        raise argparse.ArgumentTypeError(f"expected {count} values, got {len(values)}")
    return values


def _rotation_range(text):
    values = _floats(text)
    if len(values) not in (1, 3):
        raise argparse.ArgumentTypeError("rotation range takes one value or three")
    return values[0] if len(values) == 1 else tuple(values)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CLIError(f"{self.prog}: {message}", EXIT_CONFIG)


def _common(default):
    # sub-commands use SUPPRESS so they do not clobber values given before the command
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=default, help="JSON run configuration")
    common.add_argument("--seed", type=int, default=default, help="global seed")
    common.add_argument("--threads", type=int, default=default,
                        help="BLAS thread cap; 1 gives reproducible runs")
    common.add_argument("-v", "--verbose", action="store_true", default=default or False)
    return common


def build_parser():
    p = _Parser(prog="capt", description="Category-level articulation estimation from a point cloud.",
                parents=[_common(None)])
    common = _common(argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    g.add_argument("--category")
    g.add_argument("--count", type=int, help="total samples, split by --ratio")
    g.add_argument("--split-counts", type=lambda s: [int(v) for v in _floats(s, 3)],
                   help="explicit train,val,test counts")
    g.add_argument("--ratio", type=lambda s: _floats(s, 3), default=[7, 2, 1])
    g.add_argument("--n", type=int, default=1024, help="points per sample")
    g.add_argument("--out", help="dataset directory")
    g.add_argument("--views-per-instance", type=int, default=1)
    g.add_argument("--no-augment", action="store_true")
    g.add_argument("--rotation-range", type=_rotation_range, default=math.pi,
                   help="Euler bound in radians, one value or x,y,z")
    g.add_argument("--translation-range", type=float, default=1.0)
    g.add_argument("--scale-range", type=lambda s: _floats(s, 2), default=[0.8, 1.2])

    t = sub.add_parser("train", parents=[common], help="train a model")
    t.add_argument("--data", help="dataset directory")
    t.add_argument("--checkpoint", help="output checkpoint path")
    t.add_argument("--log", help="loss CSV path (default: <checkpoint>.loss.csv)")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--d-e", type=int)
    t.add_argument("--neighbors", type=int)
    t.add_argument("--dtype", choices=["float32", "float64"])
    t.add_argument("--motion-weight", type=float)
    t.add_argument("--no-motion-loss", action="store_true", help="train the plain variant (motion weight 0)")

    e = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    e.add_argument("--data")
    e.add_argument("--checkpoint")
    e.add_argument("--split", default="test")
    e.add_argument("--report", help="JSON report path; a .txt table is written alongside")
    e.add_argument("--omega0", type=float)
    e.add_argument("--omega1", type=float)

    i = sub.add_parser("infer", parents=[common], help="estimate joints for one point cloud")
    i.add_argument("--checkpoint")
    i.add_argument("--input", required=True, help=".cpts sample, .npy (n,3) array or whitespace xyz text")
    i.add_argument("--omega0", type=float)
    i.add_argument("--omega1", type=float)
    i.add_argument("--ply", help="write a colored PLY with joint segments")
    i.add_argument("--out", help="write the joint record JSON here as well")
    return p


def _load_config(args):
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _path(args_value, cfg, key, what):
    value = args_value or cfg.paths.get(key)
    if not value:
        raise CLIError(f"missing {what} (--{key} or paths.{key} in config)", EXIT_CONFIG)
    return value


def _voting(args, cfg):
    from .voting import VotingConfig
    omega0 = args.omega0 if args.omega0 is not None else cfg.voting.get("omega0", 0.5)
    omega1 = args.omega1 if args.omega1 is not None else cfg.voting.get("omega1", 1.5)
    try:
        return VotingConfig(float(omega0), float(omega1))
    except ValueError as exc:
        raise CLIError(str(exc), EXIT_CONFIG)


def cmd_gen(args, cfg):
    from .synthdata import AugmentConfig, generate_dataset, get_category
    category = args.category or cfg.category
    try:
        get_category(category)
    except ValueError as exc:
        raise CLIError(str(exc), EXIT_CONFIG)
    out = _path(args.out, cfg, "data", "output directory")
    if args.split_counts is not None:
        counts = dict(zip(("train", "val", "test"), args.split_counts))
        if sum(args.split_counts) < 10:
            raise CLIError("refusing to generate fewer than 10 samples", EXIT_CONFIG)
    elif args.count is not None:
        if args.count < 10:
            raise CLIError(f"--count {args.count} is below the minimum of 10", EXIT_CONFIG)
        counts = args.count
    else:
        raise CLIError("give --count or --split-counts", EXIT_CONFIG)
    if args.n < 64:
        raise CLIError("--n must be at least 64", EXIT_CONFIG)
    aug = None if args.no_augment else AugmentConfig(args.rotation_range, args.translation_range,
                                                      tuple(args.scale_range))
    try:
        generate_dataset(category, counts, out, ratio=tuple(args.ratio), seed=cfg.seed, n=args.n,
                         views_per_instance=args.views_per_instance, augment_config=aug)
    except OSError as exc:
        raise CLIError(str(exc), EXIT_IO)
    print(os.path.join(out, "manifest.json"))


def _open_data(root, split=None):
    from .synthdata import SampleFormatError, load_split, read_manifest
    manifest_path = os.path.join(root, "manifest.json")
    if not os.path.exists(manifest_path):
        raise CLIError(f"no dataset manifest at {manifest_path}", EXIT_CONFIG)
    try:
        manifest = read_manifest(manifest_path)
        if split is None:
            return manifest
        if not manifest["splits"].get(split):
            raise CLIError(f"split {split!r} of {root} is empty", EXIT_CONFIG)
        return manifest, load_split(root, split, manifest)
    except (OSError, SampleFormatError, json.JSONDecodeError) as exc:
        raise CLIError(str(exc), EXIT_IO)


def cmd_train(args, cfg):
    from . import tensor as T
    from .losses import LossWeights, MotionLossConfig, TrainingFault
    from .model import CAPTModel, ModelConfig
    from .synthdata import get_category
    from .training import TrainConfig, train

    data = _path(args.data, cfg, "data", "dataset directory")
    ckpt = _path(args.checkpoint, cfg, "checkpoint", "checkpoint path")
    manifest, train_split = _open_data(data, "train")
    val_split = _open_data(data, "val")[1] if manifest["splits"].get("val") else None
    cat = get_category(manifest["category"])

    model_kw = dict(cfg.model)
    model_kw.update(n=manifest["n"], n_links=cat.n_L_max, n_joints=cat.n_J_max, seed=cfg.seed)
    if args.d_e is not None:
        model_kw["d_e"] = args.d_e
    if args.neighbors is not None:
        model_kw["k_neighbors"] = args.neighbors
    if args.dtype is not None:
        model_kw["dtype"] = args.dtype
    weights = dict(cfg.weights)
    if args.motion_weight is not None:
        weights["motion"] = args.motion_weight
    if args.no_motion_loss:
        weights["motion"] = 0.0
    opt = dict(cfg.optimizer)
    for key, value in (("epochs", args.epochs), ("batch_size", args.batch_size), ("lr", args.lr)):
        if value is not None:
            opt[key] = value
    try:
        model = CAPTModel(ModelConfig(**model_kw))
        tcfg = TrainConfig(seed=cfg.seed, weights=LossWeights(**weights), motion=MotionLossConfig(), **opt)
    except (TypeError, ValueError) as exc:
        raise CLIError(f"bad configuration: {exc}", EXIT_CONFIG)
    log_csv = args.log or ckpt + ".loss.csv"
    try:
        os.makedirs(os.path.dirname(os.path.abspath(ckpt)), exist_ok=True)
        result = train(model, train_split, val_split, tcfg, log_csv=log_csv, checkpoint=ckpt,
                       progress=lambda s: print(f"epoch {s['epoch']}: train {s['train']['total']:.5f}"
                                                + (f" val {s['val']['total']:.5f}" if "val" in s else ""),
                                                flush=True))
    except TrainingFault as exc:
        raise CLIError(f"training aborted: {exc}", EXIT_NUMERIC)
    except (T.NonFiniteError, T.DegenerateGradientError) as exc:
        raise CLIError(f"training aborted: numerical fault: {exc}", EXIT_NUMERIC)
    except OSError as exc:
        raise CLIError(str(exc), EXIT_IO)
    print(f"best epoch {result.best_epoch}, checkpoint {ckpt}, loss log {log_csv}")


def _load_model(path):
    from .checkpoint import CheckpointError
    from .model import CAPTModel
    if not path or not os.path.exists(path):
        raise CLIError(f"checkpoint not found: {path}", EXIT_CONFIG)
    try:
        return CAPTModel.load(path, dtype="float64")
    except FileNotFoundError as exc:
        raise CLIError(f"checkpoint config missing: {exc}", EXIT_CONFIG)
    except (CheckpointError, KeyError, ValueError, OSError) as exc:
        raise CLIError(f"cannot load checkpoint {path}: {exc}", EXIT_IO)


def cmd_eval(args, cfg):
    from .metrics import format_table
    from .training import evaluate
    ckpt = args.checkpoint or cfg.paths.get("checkpoint")
    model = _load_model(ckpt)
    data = _path(args.data, cfg, "data", "dataset directory")
    _, split = _open_data(data, args.split)
    voting = _voting(args, cfg)
    t0 = time.perf_counter()
    reports = evaluate(model, split, voting)
    per_sample = (time.perf_counter() - t0) / len(split)
    report_path = args.report or cfg.paths.get("report") or os.path.join(data, f"report_{args.split}.json")
    doc = {"split": args.split, "checkpoint": os.path.basename(ckpt),
           "voting": {"omega0": voting.omega0, "omega1": voting.omega1},
           "fine": reports["fine"].to_dict(), "coarse": reports["coarse"].to_dict()}
    table = format_table([("CAPT (double voting)", reports["fine"]), ("CAPT (coarse only)", reports["coarse"])])
    try:
        with open(report_path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(os.path.splitext(report_path)[0] + ".txt", "w") as fh:
            fh.write(table)
    except OSError as exc:
        raise CLIError(str(exc), EXIT_IO)
    print(table, end="")
    # informational only; not part of the reproducible report files
    print(f"{per_sample * 1000:.1f} ms per sample")


def _read_cloud(path):
    from .synthdata import SampleFormatError, read_sample
    try:
        if path.endswith(".cpts"):
            rec, _ = read_sample(path)
            return rec.points, rec
        if path.endswith(".npy"):
            pts = np.load(path, allow_pickle=False)
        else:
            pts = np.loadtxt(path, ndmin=2)
    except (OSError, ValueError, SampleFormatError) as exc:
        raise CLIError(f"cannot read point cloud {path}: {exc}", EXIT_IO)
    pts = np.asarray(pts, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] < 3 or not np.all(np.isfinite(pts)):
        raise CLIError(f"{path}: expected an (n, 3) array of finite coordinates", EXIT_IO)
    return pts[:, :3], None


def cmd_infer(args, cfg):
    from .ply import write_ply
    from .voting import double_vote
    model = _load_model(args.checkpoint or cfg.paths.get("checkpoint"))
    points, rec = _read_cloud(args.input)
    if len(points) < 64:
        raise CLIError(f"{args.input}: need at least 64 points, got {len(points)}", EXIT_IO)
    voting = _voting(args, cfg)
    pred = model.predict(points)
    n_joints = rec.active_joint_count if rec is not None else model.cfg.n_joints
    joints = double_vote(pred, voting, n_joints)
    doc = {"input": os.path.basename(args.input), "joints": [j.to_dict() for j in joints]}
    text = json.dumps(doc, indent=2, sort_keys=True)
    print(text)
    try:
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text + "\n")
        if args.ply:
            gt = [(j.direction, j.pivot) for j in rec.joints] if rec is not None else []
            write_ply(args.ply, points, pred.labels(), [(j.direction, j.pivot) for j in joints], gt)
    except OSError as exc:
        raise CLIError(str(exc), EXIT_IO)


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "infer": cmd_infer}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise CLIError("choose a command: gen, train, eval or infer", EXIT_CONFIG)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = _load_config(args)
        if args.threads is not None:
            if args.threads < 1:
                raise CLIError("--threads must be positive", EXIT_CONFIG)
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=args.threads):
                COMMANDS[args.command](args, cfg)
        else:
            COMMANDS[args.command](args, cfg)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
