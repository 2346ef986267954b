"""Pose recovery against a single target image.

The camera pose is refined by Adam on the 6-dof tangent of SE(3): each step
evaluates the photometric loss and its gradient with respect to a right
multiplicative twist at the current pose, applies one Adam update to the
twist, re-anchors the pose by composing with exp(step), and resets the twist
to zero.  Adam moments persist across re-anchoring.

The appearance head weights used for rendering come either from the
hypernetwork evaluated once on the target's color histogram, or from the
base appearance parameters; they stay fixed during refinement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Camera
from .field import FieldCheckpoint, histogram_features, hypernet_forward
from .nn import AdamState, adam_step
from .params import ParamVector
from .render import (BACKGROUND, RayBatch, RenderConfig, aabb_intersect,
                     render_and_backprop, render_rays)
from .se3 import Pose, perturb_pose, se3_exp


def relative_l2_loss(pred: np.ndarray, target: np.ndarray, eps: float = 0.01):
    """Mean of (pred - target)^2 / (stopgrad(pred)^2 + eps) and d_pred.

    The denominator is treated as constant, so bright predictions are
    down-weighted without feeding an extra gradient path.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError("prediction and target shapes differ")
    diff = pred - target
    denom = pred * pred + eps
    loss = float(np.mean(diff * diff / denom))
    d_pred = 2.0 * diff / (denom * diff.size)
    return loss, d_pred


@dataclass(frozen=True)
class PoseEstimateConfig:
    iterations: int = 300
    rays_per_iteration: int = 1024
    lr: float = 5e-3
    lr_final: float = 5e-4
    window: int = 30            # convergence window, iterations
    tol: float = 1e-5           # minimum loss decrease over the window
    n_restarts: int = 1         # extra randomized starts beyond the first
    restart_rot_deg: float = 5.0
    restart_trans: float = 0.05
    n_samples: int = 96
    stratified: bool = True
    chunk_rays: int = 4096
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("need at least one iteration")
        if self.rays_per_iteration < 1:
            raise ValueError("need at least one ray per iteration")
        if self.lr <= 0 or self.lr_final <= 0 or self.lr_final > self.lr:
            raise ValueError("learning rates must satisfy 0 < lr_final <= lr")
        if self.window < 1 or self.tol < 0 or self.n_restarts < 0:
            raise ValueError("invalid convergence settings")


@dataclass
class PoseEstimate:
    pose: Pose
    final_loss: float           # low-noise evaluation at the returned pose
    iterations_used: int
    restart_index: int
    loss_trace: np.ndarray


def _rays_for_pixels(camera: Camera, pose: Pose, pixels: np.ndarray):
    """RayBatch for the pixels plus the surviving row indices into pixels."""
    pixels = np.asarray(pixels, dtype=np.int64)
    dirs_cam = camera.pixel_directions(pixels)
    dirs = dirs_cam @ pose.rotation.T
    origins = np.broadcast_to(pose.translation, dirs.shape).copy()
    t_near, t_far, hit = aabb_intersect(origins, dirs)
    batch = RayBatch(origins[hit], dirs[hit], t_near[hit], t_far[hit],
                     pixels[hit])
    return batch, np.flatnonzero(hit), dirs_cam[hit]


def _target_rows(target: np.ndarray, pixels: np.ndarray) -> np.ndarray:
    return target[pixels[:, 1], pixels[:, 0]]


def pose_gradient(spec, theta_fd: ParamVector, theta_fc: ParamVector,
                  camera: Camera, pose: Pose, target: np.ndarray,
                  pixels: np.ndarray, cfg: RenderConfig,
                  rng: np.random.Generator | None = None, fixed_t=None):
    """Loss and twist gradient at the current pose.

    The loss covers every sampled pixel; rays that miss the scene box
    contribute their background residual with zero pose gradient.  Sample
    depths are treated as constants, so the gradient flows only through the
    sample positions and the view direction.
    """
    batch, rows, dirs_cam = _rays_for_pixels(camera, pose, pixels)
    if len(batch) == 0:
        raise RuntimeError("every sampled ray misses the scene box; "
                           "the pose initialization is too far off")
    targ = _target_rows(np.asarray(target, dtype=np.float64), pixels)
    n_terms = targ.size

    miss = np.ones(len(pixels), dtype=bool)
    miss[rows] = False
    bg_diff = BACKGROUND - targ[miss]
    loss_miss = float(np.sum(bg_diff * bg_diff
                             / (BACKGROUND * BACKGROUND + 0.01)) / n_terms)

    targ_hit = targ[rows]

    def loss_fn(rgb_chunk, sl):
        diff = rgb_chunk - targ_hit[sl]
        denom = rgb_chunk * rgb_chunk + 0.01
        part = float(np.sum(diff * diff / denom) / n_terms)
        return part, 2.0 * diff / (denom * n_terms)

    _, loss_hit, grads = render_and_backprop(
        spec, theta_fd, theta_fc, batch, cfg, loss_fn, rng, fixed_t=fixed_t,
        want_field=False, want_appearance=False, want_rays=True)

    rt = pose.rotation.T
    d_v = rt @ grads.d_origins.sum(axis=0)
    d_omega = np.cross(dirs_cam, grads.d_directions @ pose.rotation).sum(axis=0)
    return loss_miss + loss_hit, np.concatenate([d_omega, d_v])


def _twist_loss(spec, theta_fd, theta_fc, camera, base_pose, xi, target,
                pixels, cfg, fixed_t, denom=None):
    """Loss at base_pose*exp(xi) on a frozen t grid; finite-difference probe.

    Pass denom = pred**2 + eps evaluated at xi = 0 to hold the normalizer
    constant, matching the differentiation rule pose_gradient applies.
    """
    pose = base_pose.compose(se3_exp(xi))
    pixels = np.asarray(pixels, dtype=np.int64)
    dirs_cam = camera.pixel_directions(pixels)
    dirs = dirs_cam @ pose.rotation.T
    origins = np.broadcast_to(pose.translation, dirs.shape).copy()
    t_near, t_far, _ = aabb_intersect(origins, dirs)
    batch = RayBatch(origins, dirs, t_near, t_far, pixels)
    rgb = render_rays(spec, theta_fd, theta_fc, batch, cfg, fixed_t=fixed_t)
    targ = _target_rows(np.asarray(target, dtype=np.float64), pixels)
    if denom is None:
        return relative_l2_loss(rgb, targ)[0]
    return float(np.mean((rgb - targ) ** 2 / denom))


def _eval_loss(spec, theta_fd, theta_fc, camera, pose, target, pixels,
               cfg: RenderConfig) -> float:
    """Relative-L2 loss at a pose on a fixed pixel set, misses included.

    Used to score finished descents: deterministic quadrature on a common
    pixel set makes restart selection immune to per-iteration sampling noise.
    """
    batch, rows, _ = _rays_for_pixels(camera, pose, pixels)
    targ = _target_rows(np.asarray(target, dtype=np.float64), pixels)
    n_terms = targ.size
    miss = np.ones(len(pixels), dtype=bool)
    miss[rows] = False
    bg_diff = BACKGROUND - targ[miss]
    loss = float(np.sum(bg_diff * bg_diff
                        / (BACKGROUND * BACKGROUND + 0.01)) / n_terms)
    if len(batch):
        rgb = render_rays(spec, theta_fd, theta_fc, batch, cfg)
        diff = rgb - targ[rows]
        loss += float(np.sum(diff * diff / (rgb * rgb + 0.01)) / n_terms)
    return loss


def _cosine_lr(cfg: PoseEstimateConfig, it: int) -> float:
    if cfg.iterations == 1:
        return cfg.lr
    frac = it / (cfg.iterations - 1)
    return cfg.lr_final + 0.5 * (cfg.lr - cfg.lr_final) * (1 + np.cos(np.pi * frac))


def _sample_pixels(camera: Camera, n: int, rng: np.random.Generator):
    n = min(n, camera.n_pixels)
    idx = rng.choice(camera.n_pixels, size=n, replace=False)
    return np.column_stack([idx % camera.width, idx // camera.width])


def conditioned_appearance(ckpt: FieldCheckpoint, target: np.ndarray,
                           conditioning: str = "hypernet") -> ParamVector:
    """Appearance head weights for a target image.

    "hypernet" runs the hypernetwork once on the target's color histogram;
    "base" returns the appearance trained in phase 1.
    """
    if conditioning == "base":
        return ckpt.params.theta_fc
    if conditioning != "hypernet":
        raise ValueError(f"unknown conditioning mode {conditioning!r}")
    if ckpt.theta_h is None:
        raise ValueError("checkpoint has no hypernetwork; "
                         "train phase 2 first or use conditioning='base'")
    hist = histogram_features(target, ckpt.hspec.bins_per_channel)
    return hypernet_forward(hist, ckpt.theta_h, ckpt.hspec)


def estimate_pose(ckpt: FieldCheckpoint, target: np.ndarray, camera: Camera,
                  init_pose: Pose, cfg: PoseEstimateConfig | None = None,
                  conditioning: str = "hypernet",
                  theta_fc: ParamVector | None = None) -> PoseEstimate:
    """Recover the camera pose of a target image by photometric descent.

    Runs 1 + n_restarts descents (restarts start from a random perturbation
    of the initialization) and returns the one with the lowest final loss.
    Every descent takes at least one gradient step; a non-finite loss or
    gradient aborts with an error instead of returning a bogus pose.
    """
    cfg = cfg or PoseEstimateConfig()
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (camera.height, camera.width, 3):
        raise ValueError("target image does not match the camera size")
    if theta_fc is None:
        theta_fc = conditioned_appearance(ckpt, target, conditioning)
    rcfg = RenderConfig(n_samples=cfg.n_samples, stratified=cfg.stratified,
                        chunk_rays=cfg.chunk_rays)
    eval_cfg = RenderConfig(n_samples=cfg.n_samples, stratified=False,
                            chunk_rays=cfg.chunk_rays)
    eval_pixels = _sample_pixels(
        camera, 4 * cfg.rays_per_iteration,
        np.random.default_rng([cfg.seed, 0xE7A1]))
    best = None
    for restart in range(1 + cfg.n_restarts):
        rng = np.random.default_rng([cfg.seed, restart])
        pose = init_pose if restart == 0 else perturb_pose(
            init_pose, cfg.restart_rot_deg, cfg.restart_trans, rng)
        adam = AdamState(lr=cfg.lr)
        xi = np.zeros(6)
        trace = []
        for it in range(cfg.iterations):
            adam.lr = _cosine_lr(cfg, it)
            pixels = _sample_pixels(camera, cfg.rays_per_iteration, rng)
            loss, d_xi = pose_gradient(ckpt.spec, ckpt.params.theta_fd,
                                       theta_fc, camera, pose, target,
                                       pixels, rcfg, rng)
            if not np.isfinite(loss) or not np.all(np.isfinite(d_xi)):
                raise FloatingPointError(
                    f"pose refinement diverged at iteration {it}")
            xi[:] = 0.0
            adam_step(adam, xi, d_xi)
            pose = pose.compose(se3_exp(xi))
            trace.append(loss)
            # windowed means, so sampling noise cannot fake convergence
            if len(trace) >= 2 * cfg.window:
                prev = np.mean(trace[-2 * cfg.window:-cfg.window])
                curr = np.mean(trace[-cfg.window:])
                if prev - curr < cfg.tol:
                    break
        final = _eval_loss(ckpt.spec, ckpt.params.theta_fd, theta_fc, camera,
                           pose, target, eval_pixels, eval_cfg)
        est = PoseEstimate(pose, final, len(trace), restart,
                           np.asarray(trace))
        if best is None or est.final_loss < best.final_loss:
            best = est
    return best
