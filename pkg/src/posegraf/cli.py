"""Command line entry point: train / eval / predict / synth / gradcheck."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import load_config
from .data import DatasetError, PoseSample, SyntheticGenConfig, generate_synthetic, read_dataset, write_dataset
from .model import ConfigError, PoseGrafModel
from .skeleton import TopologyError, h36m_topology, load_topology

log = logging.getLogger("posegraf")

EXIT_CONFIG, EXIT_MISSING, EXIT_DATA, EXIT_NAN, EXIT_CHECKPOINT, EXIT_GRADCHECK = 3, 4, 5, 6, 7, 8


def _topology(path):
    return load_topology(path) if path else h36m_topology()


def cmd_synth(args) -> int:
    topo = _topology(args.topology)
    cfg = SyntheticGenConfig(seed=args.seed, count=args.count, max_joint_angle_rad=args.max_angle,
                             focal_px=args.focal, camera_distance_mm=args.distance)
    if topo.num_joints != 17:
        cfg.bone_lengths_mm = tuple([250.0] * topo.num_bones)
    write_dataset(args.out, generate_synthetic(cfg, topo))
    print(f"wrote {args.count} samples to {args.out}")
    return 0


def cmd_train(args) -> int:
    overrides = {"epochs": args.epochs, "lr": args.lr, "gamma": args.gamma, "seed": args.seed,
                 "batch_size": args.batch_size, "profile": args.profile}
    run = load_config(args.config, overrides)
    base = Path(args.config).parent if args.config else None
    topo = run.load_topology(base)
    train_set = read_dataset(args.data, topo)
    if not train_set:
        raise DatasetError(f"{args.data}: empty dataset")
    test_set = read_dataset(args.eval_data, topo) if args.eval_data else None

    from .train import evaluate_model, fit

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = PoseGrafModel(run.model, topo, seed=run.train.seed)
    manifest = {
        "config": run.to_dict(),
        "schedule": {"epochs": run.train.epochs, "lr": run.train.lr, "gamma": run.train.gamma,
                     "optimizer": "adam", "batch_size": run.train.batch_size},
        "data": {"train": str(args.data), "train_count": len(train_set),
                 "eval": str(args.eval_data) if args.eval_data else None},
        "num_parameters": model.num_parameters(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    history = fit(model, train_set, run.train, test_set, out / "loss_log.csv")
    save_checkpoint(out / "model.ckpt", model)
    if test_set:
        report = evaluate_model(model, test_set, run.train.flip_test)
        manifest["final_eval"] = report.to_dict()
    manifest["final_train_loss_mm"] = history[-1]["train_loss_mm"] if history else None
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    print(f"trained {run.train.epochs} epochs; checkpoint at {out / 'model.ckpt'}")
    return 0


def cmd_eval(args) -> int:
    from .train import evaluate_model

    model = load_checkpoint(args.checkpoint)
    samples = read_dataset(args.data, model.topo)
    if not samples:
        raise DatasetError(f"{args.data}: empty dataset")
    report = evaluate_model(model, samples, flip_test=not args.no_flip)
    print(report.table())
    text = report.to_json()
    if args.report:
        Path(args.report).write_text(text + "\n")
    else:
        print(text)
    return 0


def cmd_predict(args) -> int:
    from .train import predict_dataset

    model = load_checkpoint(args.checkpoint)
    samples = read_dataset(args.input, model.topo, require_3d=False)
    if not samples:
        raise DatasetError(f"{args.input}: no poses")
    pred = predict_dataset(model, np.stack([s.joints_2d for s in samples]), flip_test=not args.no_flip)
    write_dataset(args.out, [PoseSample(s.id, s.joints_2d, p, s.action) for s, p in zip(samples, pred)])
    print(f"wrote {len(samples)} predictions to {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_suite

    errors = run_suite(args.seed)
    for name, err in errors.items():
        print(f"{name:10s} max_rel_err {err:.3e}")
    worst = max(errors.values())
    print(f"{'overall':10s} max_rel_err {worst:.3e} (tolerance {args.tol:g})")
    return 0 if worst < args.tol else EXIT_GRADCHECK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="posegraf", description="2D-to-3D pose lifting on a numpy autodiff core")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.add_argument("--max-angle", type=float, default=0.6)
    p.add_argument("--focal", type=float, default=1000.0)
    p.add_argument("--distance", type=float, default=4500.0)
    p.add_argument("--topology")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--eval-data")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--profile", choices=["full", "desk"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--no-flip", action="store_true", help="disable flip ensembling")
    p.add_argument("--report", help="write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="lift 2D keypoints to 3D")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-flip", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite on the toy config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, TopologyError) as e:
        print(f"error: bad config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"error: missing file: {e.filename or e}", file=sys.stderr)
        return EXIT_MISSING
    except CheckpointError as e:
        print(f"error: bad checkpoint: {e}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except FloatingPointError as e:
        print(f"error: NaN loss: {e}", file=sys.stderr)
        return EXIT_NAN
    except (DatasetError, ValueError) as e:
        print(f"error: shape mismatch or bad data: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
