"""Two-phase training.

Phase 1 fits the geometry (hash table + density MLP) and a base appearance
head to posed views of the base scene by stochastic ray sampling, one Adam
group per parameter block.

Phase 2 freezes everything from phase 1 and trains only the hypernetwork:
each iteration picks one style and one view, runs the hypernetwork on the
style histogram to emit the appearance head, renders a ray batch, and
backpropagates through the emitted weights into the hypernetwork.  The
frozen geometry is checksummed before and after as proof it never moved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .field import (FieldParams, FieldSpec, HypernetSpec, histogram_features,
                    hypernet_backward, hypernet_forward, init_hypernet_params)
from .nn import AdamState, adam_step
from .render import (RayBatch, RenderConfig, generate_rays,
                     render_and_backprop, render_image)
from .scene import Dataset


@dataclass(frozen=True)
class TrainConfig:
    phase1_iterations: int = 5000
    phase2_iterations: int = 20000
    rays_per_batch: int = 4096
    lr_table: float = 1e-2
    lr_mlp: float = 1e-3
    lr_hypernet: float = 1e-4
    n_samples: int = 96
    chunk_rays: int = 1024
    eval_interval: int = 500
    seed: int = 0

    def __post_init__(self):
        if min(self.phase1_iterations, self.phase2_iterations,
               self.rays_per_batch, self.n_samples, self.chunk_rays,
               self.eval_interval) < 1:
            raise ValueError("iteration and batch settings must be positive")
        if min(self.lr_table, self.lr_mlp, self.lr_hypernet) <= 0:
            raise ValueError("learning rates must be positive")


def photometric_loss(pred: np.ndarray, target: np.ndarray):
    """Plain mean squared error and its gradient."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError("prediction and target shapes differ")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def psnr(pred: np.ndarray, target: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for values in [0, 1]."""
    mse = float(np.mean((np.asarray(pred, dtype=np.float64)
                         - np.asarray(target, dtype=np.float64)) ** 2))
    if mse == 0.0:
        return float("inf")
    return -10.0 * math.log10(mse)


def write_training_log(path, history) -> None:
    """CSV with one `iter,loss,psnr` row per logged iteration."""
    with open(path, "w") as f:
        f.write("iter,loss,psnr\n")
        for it, loss, p in history:
            f.write(f"{it},{float(loss)!r},{float(p)!r}\n")


def _ray_pool(dataset: Dataset):
    """Flatten every view into parallel ray arrays (misses dropped)."""
    origins, dirs, t_near, t_far, rgb = [], [], [], [], []
    pixels = dataset.camera.all_pixels()
    for i in range(len(dataset)):
        batch = generate_rays(dataset.camera, dataset.poses[i], pixels)
        img = dataset.image(i)
        origins.append(batch.origins)
        dirs.append(batch.directions)
        t_near.append(batch.t_near)
        t_far.append(batch.t_far)
        rgb.append(img[batch.pixels[:, 1], batch.pixels[:, 0]])
    return (np.concatenate(origins), np.concatenate(dirs),
            np.concatenate(t_near), np.concatenate(t_far),
            np.concatenate(rgb))


def train_phase1(dataset: Dataset, spec: FieldSpec | None = None,
                 cfg: TrainConfig | None = None,
                 val_dataset: Dataset | None = None,
                 log_path=None, dtype=np.float32):
    """Fit geometry and base appearance to the dataset.

    Returns (FieldParams, history) with history rows (iter, loss, psnr);
    psnr is NaN except at evaluation iterations (and requires val_dataset).
    """
    spec = spec or FieldSpec.default()
    cfg = cfg or TrainConfig()
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng([cfg.seed, 0xF1])
    params = FieldParams.init(spec, rng, dtype)
    pool_o, pool_d, pool_tn, pool_tf, pool_rgb = _ray_pool(dataset)
    n_pool = pool_o.shape[0]
    if n_pool == 0:
        raise ValueError("no training rays hit the scene box")
    rcfg = RenderConfig(n_samples=cfg.n_samples, stratified=True,
                        chunk_rays=cfg.chunk_rays)
    adam_table = AdamState(lr=cfg.lr_table)
    adam_density = AdamState(lr=cfg.lr_mlp)
    adam_color = AdamState(lr=cfg.lr_mlp)
    dummy_pixels = np.zeros((cfg.rays_per_batch, 2), dtype=np.int64)
    history = []
    for it in range(cfg.phase1_iterations):
        idx = rng.integers(0, n_pool, size=cfg.rays_per_batch)
        batch = RayBatch(pool_o[idx], pool_d[idx], pool_tn[idx], pool_tf[idx],
                         dummy_pixels[: idx.size])
        targ = pool_rgb[idx]

        def loss_fn(rgb_chunk, sl):
            diff = rgb_chunk - targ[sl]
            return float(np.sum(diff * diff) / targ.size), 2.0 * diff / targ.size

        _, loss, grads = render_and_backprop(
            spec, params.theta_fd, params.theta_fc, batch, rcfg, loss_fn, rng,
            want_field=True, want_appearance=True)
        if not np.isfinite(loss):
            raise FloatingPointError(f"phase 1 loss diverged at iteration {it}")
        adam_step(adam_table, params.theta_fd.view("table"),
                  grads.d_theta_fd.view("table"))
        adam_step(adam_density, params.theta_fd.subvector("density.").values,
                  grads.d_theta_fd.subvector("density.").values)
        adam_step(adam_color, params.theta_fc.values, grads.d_theta_fc.values)

        val = float("nan")
        if ((it + 1) % cfg.eval_interval == 0
                or it + 1 == cfg.phase1_iterations):
            if val_dataset is not None and len(val_dataset):
                img = render_image(spec, params.theta_fd, params.theta_fc,
                                   val_dataset.camera, val_dataset.poses[0],
                                   rcfg)
                val = psnr(img, val_dataset.image(0))
        history.append((it, loss, val))
    if log_path is not None:
        write_training_log(log_path, history)
    return params, history


# -- phase 2 ---------------------------------------------------------------------


@dataclass
class StyleEntry:
    style_id: str
    style_image: np.ndarray
    dataset: Dataset


@dataclass
class StyleSet:
    """Styled datasets for hypernetwork training, minus the held-out styles."""
    entries: list
    held_out: tuple = ()

    def __post_init__(self):
        ids = [e.style_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate style ids")

    def training_entries(self):
        return [e for e in self.entries if e.style_id not in self.held_out]


def train_phase2_hypernet(style_set: StyleSet, spec: FieldSpec,
                          params: FieldParams,
                          hspec: HypernetSpec | None = None,
                          cfg: TrainConfig | None = None,
                          log_path=None, dtype=np.float32):
    """Train the hypernetwork on frozen geometry.

    Returns (theta_h, history).  Raises if the frozen parameters change by
    even one bit, or if a held-out style ever reaches the sampler.
    """
    cfg = cfg or TrainConfig()
    hspec = hspec or HypernetSpec.for_field(spec)
    entries = style_set.training_entries()
    if not entries:
        raise ValueError("style set has no training styles")
    frozen_fd = params.theta_fd.checksum()
    frozen_fc = params.theta_fc.checksum()
    rng = np.random.default_rng([cfg.seed, 0xF2])
    theta_h = init_hypernet_params(hspec, rng, dtype)
    adam = AdamState(lr=cfg.lr_hypernet)
    rcfg = RenderConfig(n_samples=cfg.n_samples, stratified=True,
                        chunk_rays=cfg.chunk_rays)
    hists = [histogram_features(e.style_image, hspec.bins_per_channel)
             for e in entries]
    images = [e.dataset.load_images() for e in entries]
    history = []
    for it in range(cfg.phase2_iterations):
        ei = int(rng.integers(len(entries)))
        entry = entries[ei]
        if entry.style_id in style_set.held_out:
            raise RuntimeError(f"held-out style {entry.style_id} was sampled")
        vi = int(rng.integers(len(entry.dataset)))
        full = generate_rays(entry.dataset.camera, entry.dataset.poses[vi],
                             entry.dataset.camera.all_pixels())
        take = min(cfg.rays_per_batch, len(full))
        sel = rng.choice(len(full), size=take, replace=False)
        batch = RayBatch(full.origins[sel], full.directions[sel],
                         full.t_near[sel], full.t_far[sel], full.pixels[sel])
        img = images[ei][vi]
        targ = img[batch.pixels[:, 1], batch.pixels[:, 0]]

        theta_fc = hypernet_forward(hists[ei], theta_h, hspec)

        def loss_fn(rgb_chunk, sl):
            diff = rgb_chunk - targ[sl]
            return float(np.sum(diff * diff) / targ.size), 2.0 * diff / targ.size

        _, loss, grads = render_and_backprop(
            spec, params.theta_fd, theta_fc, batch, rcfg, loss_fn, rng,
            want_field=False, want_appearance=True)
        if not np.isfinite(loss):
            raise FloatingPointError(f"phase 2 loss diverged at iteration {it}")
        d_theta_h = hypernet_backward(hists[ei], theta_h, hspec,
                                      grads.d_theta_fc)
        adam_step(adam, theta_h.values, d_theta_h.values)

        val = float("nan")
        if ((it + 1) % cfg.eval_interval == 0
                or it + 1 == cfg.phase2_iterations):
            img_full = render_image(spec, params.theta_fd, theta_fc,
                                    entry.dataset.camera,
                                    entry.dataset.poses[vi], rcfg)
            val = psnr(img_full, img)
        history.append((it, loss, val))
    if params.theta_fd.checksum() != frozen_fd:
        raise RuntimeError("phase 2 modified the frozen geometry parameters")
    if params.theta_fc.checksum() != frozen_fc:
        raise RuntimeError("phase 2 modified the frozen base appearance")
    if log_path is not None:
        write_training_log(log_path, history)
    return theta_h, history
