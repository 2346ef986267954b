"""Command-line interface.

Subcommands: generate, train-field, train-hypernet, render, estimate-pose,
evaluate, run-experiment.  Every subcommand accepts --seed and --config (a
key=value file overriding experiment defaults).  Exit code 0 on success;
on failure, a single-line `error: ...` goes to stderr and the exit code is
nonzero.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .camera import camera_profile
from .experiment import (ExperimentConfig, generate_workspace, run_experiment,
                         train_field_step, train_hypernet_step)
from .field import load_checkpoint
from .fileio import load_pose, read_kv_config, read_ppm, save_pose, write_ppm
from .metrics import (OUTLIER_DEG_DEFAULT, accuracy_curve, read_results,
                      summarize, write_curves, write_report, write_summary)
from .registration import (PoseEstimateConfig, conditioned_appearance,
                           estimate_pose)
from .render import RenderConfig, render_image


def _experiment_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        cfg = ExperimentConfig.from_kv(read_kv_config(args.config))
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "mode", None):
        cfg = dataclasses.replace(cfg, mode=args.mode)
    return cfg


def _cmd_generate(args) -> int:
    generate_workspace(args.workspace, _experiment_config(args))
    print(f"workspace generated at {args.workspace}")
    return 0


def _cmd_train_field(args) -> int:
    out = train_field_step(args.workspace, _experiment_config(args))
    print(f"field checkpoint written to {out}")
    return 0


def _cmd_train_hypernet(args) -> int:
    out = train_hypernet_step(args.workspace, _experiment_config(args))
    print(f"full checkpoint written to {out}")
    return 0


def _cmd_render(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    camera = camera_profile(args.camera)
    pose = load_pose(args.pose)
    if args.conditioning == "hypernet":
        if not args.target:
            raise ValueError("--conditioning hypernet needs --target")
        theta_fc = conditioned_appearance(ckpt, read_ppm(args.target),
                                          "hypernet")
    elif args.conditioning == "base":
        theta_fc = ckpt.params.theta_fc
    else:
        raise ValueError(f"unknown conditioning {args.conditioning!r}")
    cfg = RenderConfig(n_samples=args.samples)
    img = render_image(ckpt.spec, ckpt.params.theta_fd, theta_fc, camera,
                       pose, cfg)
    write_ppm(args.out, img)
    print(f"rendered {args.out}")
    return 0


def _cmd_estimate_pose(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    camera = camera_profile(args.camera)
    target = read_ppm(args.target)
    init = load_pose(args.init)
    cfg = PoseEstimateConfig(iterations=args.iterations,
                             rays_per_iteration=args.rays,
                             n_samples=args.samples,
                             n_restarts=args.restarts,
                             seed=args.seed if args.seed is not None else 0)
    est = estimate_pose(ckpt, target, camera, init, cfg,
                        conditioning=args.conditioning)
    save_pose(args.out, est.pose)
    print(f"final_loss={est.final_loss!r} iterations={est.iterations_used} "
          f"restart={est.restart_index} pose={args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    results = read_results(args.results)
    if not results:
        raise ValueError(f"{args.results} holds no result rows")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    methods = sorted({r.method for r in results})
    reports = [summarize(results, args.outlier_deg, m) for m in methods]
    write_summary(out_dir / "summary.csv", reports)
    curves = {}
    for m in methods:
        rot = [r.rotation_error_deg for r in results if r.method == m]
        trans = [r.translation_error_mm for r in results if r.method == m]
        curves[f"{m}:rotation_deg"] = accuracy_curve(
            rot, np.arange(1, 41) * 0.5)
        curves[f"{m}:translation_mm"] = accuracy_curve(
            trans, np.arange(1, 41) * 0.5)
    write_curves(out_dir / "curves.csv", curves)
    write_report(out_dir / "report.txt", reports, args.outlier_deg)
    print(f"evaluation written to {out_dir}")
    return 0


def _cmd_run_experiment(args) -> int:
    cfg = _experiment_config(args)
    out = run_experiment(args.workspace, cfg, build_all=args.build_all)
    for mode, path in out.items():
        print(f"{mode}: {path}")
    return 0


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=None,
                   help="override the experiment seed")
    p.add_argument("--config", default=None,
                   help="key=value file overriding experiment defaults")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nerfreg",
        description="Appearance-conditioned neural field pose registration")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="build styles, datasets and targets")
    p.add_argument("--workspace", required=True)
    _add_common(p)
    p.set_defaults(fn=_cmd_generate)

    p = sub.add_parser("train-field", help="phase 1: geometry + base appearance")
    p.add_argument("--workspace", required=True)
    _add_common(p)
    p.set_defaults(fn=_cmd_train_field)

    p = sub.add_parser("train-hypernet",
                       help="phase 2: histogram-conditioned appearance")
    p.add_argument("--workspace", required=True)
    _add_common(p)
    p.set_defaults(fn=_cmd_train_hypernet)

    p = sub.add_parser("render", help="render the field at a pose")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pose", required=True, help="pose file (16 reals)")
    p.add_argument("--out", required=True, help="output PPM path")
    p.add_argument("--conditioning", default="base",
                   choices=("base", "hypernet"))
    p.add_argument("--target", default=None,
                   help="image whose histogram conditions the appearance")
    p.add_argument("--camera", default="64", choices=("64", "256"))
    p.add_argument("--samples", type=int, default=96)
    _add_common(p)
    p.set_defaults(fn=_cmd_render)

    p = sub.add_parser("estimate-pose", help="register one target image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--target", required=True, help="target PPM image")
    p.add_argument("--init", required=True, help="initial pose file")
    p.add_argument("--out", required=True, help="estimated pose file")
    p.add_argument("--conditioning", default="hypernet",
                   choices=("base", "hypernet"))
    p.add_argument("--camera", default="64", choices=("64", "256"))
    p.add_argument("--iterations", type=int, default=300)
    p.add_argument("--rays", type=int, default=1024)
    p.add_argument("--samples", type=int, default=96)
    p.add_argument("--restarts", type=int, default=1)
    _add_common(p)
    p.set_defaults(fn=_cmd_estimate_pose)

    p = sub.add_parser("evaluate", help="summaries and curves from results.csv")
    p.add_argument("--results", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--outlier-deg", type=float, default=OUTLIER_DEG_DEFAULT)
    _add_common(p)
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("run-experiment", help="full protocol to report files")
    p.add_argument("--workspace", required=True)
    p.add_argument("--mode", default=None, choices=("mono", "cross", "both"))
    p.add_argument("--build-all", action="store_true",
                   help="regenerate data and retrain before registering")
    _add_common(p)
    p.set_defaults(fn=_cmd_run_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as e:  # contract: single-line error, nonzero exit
        msg = " ".join(str(e).split()) or type(e).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
