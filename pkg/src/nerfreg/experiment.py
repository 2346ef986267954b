"""Experiment orchestration: from nothing to report files.

A workspace directory accumulates everything one protocol run needs:

    styles/        generated style images (PPM) + styles.kv
    data/          posed datasets (base train/val, per-style, targets)
    checkpoints/   field.ckpt after phase 1, full.ckpt after phase 2
    logs/          training loss curves
    results/<mode>/results.csv, summary.csv, curves.csv, report.txt

Modes: "mono" registers self-style targets with the base appearance
(same-modality protocol); "cross" registers held-out-style targets twice on
identical initializations, once hypernetwork-conditioned ("ours") and once
with the base appearance ("base-style"), reproducing the comparison table
ordering.  Every random draw is keyed on (seed, style, target), so reruns
over existing checkpoints reproduce results.csv bit-exactly.
"""

from __future__ import annotations

import dataclasses
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import DEFAULT_CAMERA
from .field import (FieldCheckpoint, FieldSpec, HypernetSpec, load_checkpoint,
                    save_checkpoint)
from .fileio import read_ppm, write_kv_config, write_ppm
from .metrics import (accuracy_curve, make_result, summarize, write_curves,
                      write_report, write_results, write_summary)
from .registration import (PoseEstimateConfig, conditioned_appearance,
                           estimate_pose)
from .scene import (Dataset, StyleImage, build_style_library, load_dataset,
                    make_scene, render_dataset, sample_poses, stylize_scene,
                    test_sampler, train_sampler)
from .se3 import perturb_pose
from .train import (StyleEntry, StyleSet, TrainConfig, train_phase1,
                    train_phase2_hypernet)

ROT_THRESHOLDS_DEG = np.arange(1, 41) * 0.5     # 0.5 .. 20 deg
TRANS_THRESHOLDS_MM = np.arange(1, 41) * 0.5    # 0.5 .. 20 mm


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    n_vessels: int = 6
    n_styles: int = 15
    held_out: tuple = ("style04", "style07", "style09", "style12")
    n_train_views: int = 100
    n_val_views: int = 4
    style_views: int = 10
    mono_targets: int = 50
    cross_targets: int = 25
    oracle_steps: int = 512
    phase1_iterations: int = 5000
    phase2_iterations: int = 12000
    phase1_rays: int = 1024
    phase2_rays: int = 512
    n_samples: int = 96
    est_iterations: int = 300
    est_rays: int = 512
    est_samples: int = 64
    est_restarts: int = 1
    perturb_rot_deg: float = 10.0
    perturb_trans: float = 0.1
    outlier_deg: float = 20.0
    mode: str = "both"

    def __post_init__(self):
        if self.mode not in ("mono", "cross", "both"):
            raise ValueError("mode must be mono, cross, or both")
        if self.n_styles < len(self.held_out) + 1:
            raise ValueError("need at least one non-held-out style")

    def to_kv(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = ",".join(v) if isinstance(v, tuple) else str(v)
        return out

    @classmethod
    def from_kv(cls, kv: dict) -> "ExperimentConfig":
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name not in kv:
                continue
            raw = kv[f.name]
            if f.name == "held_out":
                kwargs[f.name] = tuple(s for s in raw.split(",") if s)
            elif f.type == "int":
                kwargs[f.name] = int(raw)
            elif f.type == "float":
                kwargs[f.name] = float(raw)
            else:
                kwargs[f.name] = raw
        unknown = set(kv) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**kwargs)


def _require(path: Path, producer: str) -> Path:
    if not Path(path).exists():
        raise FileNotFoundError(
            f"{path} is missing; run `nerfreg {producer}` first "
            f"(or pass --build-all)")
    return Path(path)


def _style_seed(cfg: ExperimentConfig, style_id: str, salt: int = 0) -> list:
    return [cfg.seed, zlib.crc32(style_id.encode("utf-8")), salt]


# -- generation ------------------------------------------------------------------


def generate_workspace(root, cfg: ExperimentConfig) -> None:
    """Build styles, datasets, and targets for a full protocol run."""
    root = Path(root)
    scene = make_scene(cfg.seed, cfg.n_vessels)
    camera = DEFAULT_CAMERA

    styles = build_style_library(cfg.seed, cfg.n_styles)
    styles_dir = root / "styles"
    styles_dir.mkdir(parents=True, exist_ok=True)
    for st in styles:
        write_ppm(styles_dir / f"{st.style_id}.ppm", st.image)
    write_kv_config(styles_dir / "styles.kv", {
        "seed": str(cfg.seed), "n_styles": str(cfg.n_styles),
        "held_out": ",".join(cfg.held_out),
    })

    tr = train_sampler(camera)
    te = test_sampler(camera)

    def poses(sampler, n, key):
        rng = np.random.default_rng([cfg.seed, zlib.crc32(key.encode()), 0x90])
        return sample_poses(sampler, n, rng)

    render_dataset(scene, camera, poses(tr, cfg.n_train_views, "base_train"),
                   root / "data" / "base_train", "base", "train", cfg.seed,
                   cfg.oracle_steps)
    render_dataset(scene, camera, poses(tr, cfg.n_val_views, "base_val"),
                   root / "data" / "base_val", "base", "val", cfg.seed,
                   cfg.oracle_steps)
    render_dataset(scene, camera, poses(te, cfg.mono_targets, "mono"),
                   root / "data" / "targets" / "mono", "base", "test",
                   cfg.seed, cfg.oracle_steps)

    for st in styles:
        styled = stylize_scene(scene, st.image, st.style_id)
        if st.style_id in cfg.held_out:
            render_dataset(styled, camera,
                           poses(te, cfg.cross_targets, st.style_id),
                           root / "data" / "targets" / st.style_id,
                           st.style_id, "test", cfg.seed, cfg.oracle_steps)
        else:
            render_dataset(styled, camera,
                           poses(tr, cfg.style_views, st.style_id),
                           root / "data" / "hyper" / st.style_id,
                           st.style_id, "train", cfg.seed, cfg.oracle_steps)

    write_kv_config(root / "generate.kv", cfg.to_kv())


def load_style_images(root, cfg: ExperimentConfig) -> list[StyleImage]:
    styles_dir = _require(Path(root) / "styles", "generate")
    out = []
    for i in range(cfg.n_styles):
        sid = f"style{i:02d}"
        out.append(StyleImage(sid, read_ppm(styles_dir / f"{sid}.ppm")))
    return out


# -- training steps --------------------------------------------------------------


def train_field_step(root, cfg: ExperimentConfig) -> Path:
    root = Path(root)
    train_ds = load_dataset(_require(root / "data" / "base_train", "generate"))
    val_ds = load_dataset(_require(root / "data" / "base_val", "generate"))
    tcfg = TrainConfig(phase1_iterations=cfg.phase1_iterations,
                       rays_per_batch=cfg.phase1_rays,
                       n_samples=cfg.n_samples, seed=cfg.seed)
    (root / "logs").mkdir(parents=True, exist_ok=True)
    params, _ = train_phase1(train_ds, cfg=tcfg, val_dataset=val_ds,
                             log_path=root / "logs" / "phase1.csv")
    ckpt = FieldCheckpoint(FieldSpec.default(), params)
    (root / "checkpoints").mkdir(parents=True, exist_ok=True)
    out = root / "checkpoints" / "field.ckpt"
    save_checkpoint(ckpt, out)
    return out


def train_hypernet_step(root, cfg: ExperimentConfig) -> Path:
    root = Path(root)
    ckpt = load_checkpoint(_require(root / "checkpoints" / "field.ckpt",
                                    "train-field"))
    styles = load_style_images(root, cfg)
    entries = []
    for st in styles:
        if st.style_id in cfg.held_out:
            continue
        ds = load_dataset(_require(root / "data" / "hyper" / st.style_id,
                                   "generate"))
        entries.append(StyleEntry(st.style_id, st.image, ds))
    style_set = StyleSet(entries, cfg.held_out)
    tcfg = TrainConfig(phase2_iterations=cfg.phase2_iterations,
                       rays_per_batch=cfg.phase2_rays,
                       n_samples=cfg.n_samples, seed=cfg.seed)
    hspec = HypernetSpec.for_field(ckpt.spec)
    theta_h, _ = train_phase2_hypernet(style_set, ckpt.spec, ckpt.params,
                                       hspec, tcfg,
                                       log_path=root / "logs" / "phase2.csv")
    out = root / "checkpoints" / "full.ckpt"
    save_checkpoint(FieldCheckpoint(ckpt.spec, ckpt.params, hspec, theta_h),
                    out)
    return out


# -- registration runs -----------------------------------------------------------


def _estimate_cfg(cfg: ExperimentConfig, seed: int) -> PoseEstimateConfig:
    # tol=0 spends the full iteration budget; accuracy outranks wall time here
    return PoseEstimateConfig(iterations=cfg.est_iterations,
                              rays_per_iteration=cfg.est_rays,
                              n_samples=cfg.est_samples,
                              n_restarts=cfg.est_restarts, tol=0.0, seed=seed)


def _register_dataset(ckpt: FieldCheckpoint, ds: Dataset,
                      cfg: ExperimentConfig, methods: dict) -> list:
    """Register every view of ds once per method.

    A method mapping to None conditions the color head on the target
    itself through the hypernetwork; anything else is used as theta_fc.
    """
    results = []
    for i in range(len(ds)):
        target = ds.image(i)
        true_pose = ds.poses[i]
        rng_init = np.random.default_rng(_style_seed(cfg, ds.style_id, 2 * i))
        init = perturb_pose(true_pose, cfg.perturb_rot_deg, cfg.perturb_trans,
                            rng_init)
        tseed = zlib.crc32(f"{ds.style_id}:{i}".encode()) ^ cfg.seed
        for method, theta_fc in methods.items():
            if theta_fc is None:
                theta_fc = conditioned_appearance(ckpt, target, "hypernet")
            est = estimate_pose(ckpt, target, ds.camera, init,
                                _estimate_cfg(cfg, tseed), theta_fc=theta_fc)
            results.append(make_result(
                method, ds.style_id, f"{i:03d}", true_pose, est.pose,
                est.final_loss, ds.scale_mm_per_unit, cfg.outlier_deg))
    return results


def _write_mode_outputs(out_dir: Path, results, cfg: ExperimentConfig):
    out_dir.mkdir(parents=True, exist_ok=True)
    results = sorted(results, key=lambda r: (r.method, r.style_id, r.target_id))
    write_results(out_dir / "results.csv", results)
    methods = sorted({r.method for r in results})
    reports = [summarize(results, cfg.outlier_deg, m) for m in methods]
    write_summary(out_dir / "summary.csv", reports)
    curves = {}
    for m in methods:
        rot = [r.rotation_error_deg for r in results if r.method == m]
        trans = [r.translation_error_mm for r in results if r.method == m]
        curves[f"{m}:rotation_deg"] = accuracy_curve(rot, ROT_THRESHOLDS_DEG)
        curves[f"{m}:translation_mm"] = accuracy_curve(trans,
                                                       TRANS_THRESHOLDS_MM)
    write_curves(out_dir / "curves.csv", curves)
    write_report(out_dir / "report.txt", reports, cfg.outlier_deg)


def run_registration(root, cfg: ExperimentConfig, mode: str) -> list:
    """Register all targets of one mode and write its results directory."""
    root = Path(root)
    ckpt_path = (root / "checkpoints" / "full.ckpt")
    if mode == "mono" and not ckpt_path.exists():
        # mono mode never touches the hypernetwork
        ckpt_path = _require(root / "checkpoints" / "field.ckpt",
                             "train-field")
    else:
        ckpt_path = _require(ckpt_path, "train-hypernet")
    ckpt = load_checkpoint(ckpt_path)
    results = []
    if mode == "mono":
        ds = load_dataset(_require(root / "data" / "targets" / "mono",
                                   "generate"))
        results += _register_dataset(ckpt, ds, cfg,
                                     {"ours": ckpt.params.theta_fc})
    elif mode == "cross":
        for sid in cfg.held_out:
            ds = load_dataset(_require(root / "data" / "targets" / sid,
                                       "generate"))
            methods = {"ours": None,           # per-target conditioning
                       "base-style": ckpt.params.theta_fc}
            results += _register_dataset(ckpt, ds, cfg, methods)
    else:
        raise ValueError(f"unknown registration mode {mode!r}")
    _write_mode_outputs(root / "results" / mode, results, cfg)
    return results


def run_experiment(root, cfg: ExperimentConfig,
                   build_all: bool = False) -> dict:
    """End-to-end protocol; returns the mode -> results.csv path map.

    With build_all, regenerates data and retrains everything first;
    otherwise existing artifacts are required and reused.
    """
    root = Path(root)
    if build_all:
        generate_workspace(root, cfg)
        train_field_step(root, cfg)
        if cfg.mode in ("cross", "both"):
            train_hypernet_step(root, cfg)
    modes = ["mono", "cross"] if cfg.mode == "both" else [cfg.mode]
    out = {}
    for mode in modes:
        run_registration(root, cfg, mode)
        out[mode] = root / "results" / mode / "results.csv"
    return out
