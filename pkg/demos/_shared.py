"""Common setup for the demo scripts: a small scene and a quickly trained field.

Each demo is runnable on its own; artifacts land in demos/out/ and are reused
by later demos instead of retraining.
"""

from pathlib import Path

import numpy as np

from nerfreg import (DEFAULT_CAMERA, FieldCheckpoint, FieldSpec, TrainConfig,
                     load_checkpoint, load_dataset, make_scene, render_dataset,
                     sample_poses, save_checkpoint, test_sampler, train_phase1,
                     train_sampler)

OUT = Path(__file__).resolve().parent / "out"
SEED = 7
CAMERA = DEFAULT_CAMERA

# short-budget demo settings; the full protocol lives in `nerfreg run-experiment`
TRAIN_CFG = TrainConfig(phase1_iterations=400, rays_per_batch=512,
                        n_samples=48, eval_interval=100, seed=SEED)


def demo_scene():
    return make_scene(SEED, n_vessels=4)


def ensure_datasets():
    """Render small train/val/test splits of the demo scene (oracle renders)."""
    scene = demo_scene()
    rng = np.random.default_rng([SEED, 0xD0])
    specs = [("train", train_sampler(CAMERA), 12),
             ("val", train_sampler(CAMERA), 2),
             ("test", test_sampler(CAMERA), 3)]
    out = {}
    for split, sampler, n in specs:
        root = OUT / "data" / split
        if not (root / "manifest.json").exists():
            poses = sample_poses(sampler, n, rng)
            render_dataset(scene, CAMERA, poses, root, "base", split, SEED,
                           n_steps=512)
        else:
            sample_poses(sampler, n, rng)   # keep the rng stream aligned
        out[split] = load_dataset(root)
    return out


def ensure_field():
    """Train (or reload) the demo field; returns (checkpoint, datasets)."""
    datasets = ensure_datasets()
    path = OUT / "field.ckpt"
    if path.exists():
        return load_checkpoint(path), datasets
    print(f"training field: {TRAIN_CFG.phase1_iterations} iterations, "
          f"{TRAIN_CFG.rays_per_batch} rays/batch ...")
    params, history = train_phase1(datasets["train"], cfg=TRAIN_CFG,
                                   val_dataset=datasets["val"],
                                   log_path=OUT / "phase1.csv")
    for it, loss, val in history:
        if np.isfinite(val):
            print(f"  iter {it + 1:4d}  loss {loss:.5f}  val psnr {val:.2f} dB")
    ckpt = FieldCheckpoint(FieldSpec.default(), params)
    save_checkpoint(ckpt, path)
    print(f"saved {path}")
    return ckpt, datasets
