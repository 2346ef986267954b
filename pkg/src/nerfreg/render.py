"""Volume rendering and its backward pass.

Forward: pinhole rays, clipped to the unit-cube scene box, sampled at n
points, pushed through the field heads and composited front to back with
emission-absorption weights onto a white background.

Backward: exact reverse-mode chain from per-ray pixel cotangents to the field
parameters and to each ray's origin and direction.  Sample positions are
x_i = o + t_i*d with the t grid treated as constant, so d_origin sums the
per-sample position gradients and d_direction sums t_i-weighted position
gradients plus the view-direction path into the color head.  Rays are
processed in fixed-size chunks in a fixed order; gradients accumulate in
float64, so results are reproducible for a fixed thread count.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .camera import Camera
from .encoding import encode_direction, encode_direction_backward
from .field import FieldSpec, density_backward, eval_density
from .nn import mlp_backward, mlp_forward
from .params import ParamVector
from .se3 import Pose

BACKGROUND = np.array([1.0, 1.0, 1.0])


@dataclass(frozen=True)
class RenderConfig:
    n_samples: int = 96
    stratified: bool = False
    chunk_rays: int = 1024

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("need at least two samples per ray")
        if self.chunk_rays < 1:
            raise ValueError("chunk_rays must be positive")


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_near: float
    t_far: float


@dataclass
class RayBatch:
    """Parallel arrays; one row per ray that actually hits the scene box."""

    origins: np.ndarray      # (n, 3)
    directions: np.ndarray   # (n, 3) unit
    t_near: np.ndarray       # (n,)
    t_far: np.ndarray        # (n,)
    pixels: np.ndarray       # (n, 2) integer (u, v); which pixels survived

    def __post_init__(self):
        n = self.origins.shape[0]
        shapes = (self.directions.shape, self.t_near.shape,
                  self.t_far.shape, self.pixels.shape)
        if shapes != ((n, 3), (n,), (n,), (n, 2)):
            raise ValueError("ray batch arrays are not parallel")

    def __len__(self) -> int:
        return self.origins.shape[0]

    def ray(self, i: int) -> Ray:
        return Ray(self.origins[i], self.directions[i],
                   float(self.t_near[i]), float(self.t_far[i]))


def aabb_intersect(origins: np.ndarray, directions: np.ndarray,
                   lo: float = 0.0, hi: float = 1.0):
    """Slab intersection with [lo, hi]^3.  Returns (t_near, t_far, hit).

    t_near is clamped to 0 (rays start at their origin).  A ray exactly on a
    box face and parallel to it is undefined and treated as a miss.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / directions
        t1 = (lo - origins) * inv
        t2 = (hi - origins) * inv
    t_lo = np.fmin(t1, t2)
    t_hi = np.fmax(t1, t2)
    t_near = np.maximum(np.max(t_lo, axis=1), 0.0)
    t_far = np.min(t_hi, axis=1)
    hit = np.isfinite(t_near) & np.isfinite(t_far) & (t_far > t_near + 1e-9)
    return t_near, t_far, hit


def generate_rays(camera: Camera, pose: Pose, pixels: np.ndarray) -> RayBatch:
    """Rays for the given (u, v) pixels; entries missing the box are dropped.

    Dropped pixels render as pure background with zero gradient; callers that
    need them (full images, losses) reinsert the background afterwards.
    """
    pixels = np.asarray(pixels, dtype=np.int64)
    dirs_cam = camera.pixel_directions(pixels)
    dirs = dirs_cam @ pose.rotation.T
    origins = np.broadcast_to(pose.translation, dirs.shape).copy()
    t_near, t_far, hit = aabb_intersect(origins, dirs)
    return RayBatch(origins[hit], dirs[hit], t_near[hit], t_far[hit],
                    pixels[hit])


def sample_t(t_near: np.ndarray, t_far: np.ndarray, n_samples: int,
             stratified: bool = False, rng: np.random.Generator | None = None):
    """Per-ray sample depths and quadrature widths, shapes (n, s).

    n bins partition [t_near, t_far]; deterministic mode takes bin midpoints,
    stratified mode jitters uniformly within each bin.  delta_i = t_{i+1} -
    t_i with the last delta equal to the bin width.
    """
    n = t_near.shape[0]
    span = (t_far - t_near)[:, None]
    if stratified:
        if rng is None:
            raise ValueError("stratified sampling needs an rng")
        offsets = rng.random((n, n_samples))
    else:
        offsets = np.full((n, n_samples), 0.5)
    t = t_near[:, None] + span * (np.arange(n_samples) + offsets) / n_samples
    deltas = np.empty_like(t)
    deltas[:, :-1] = t[:, 1:] - t[:, :-1]
    deltas[:, -1] = span[:, 0] / n_samples
    return t, deltas


# -- compositing ---------------------------------------------------------------


@dataclass
class CompositeResult:
    rgb: np.ndarray            # (n, 3)
    opacity: np.ndarray        # (n,)
    weights: np.ndarray        # (n, s)
    transmittance: np.ndarray  # (n, s); T_i before sample i, non-increasing
    trans_after: np.ndarray    # (n, s); T_{i+1} after sample i


def composite(sigmas: np.ndarray, colors: np.ndarray, deltas: np.ndarray,
              background: np.ndarray = BACKGROUND) -> CompositeResult:
    """Emission-absorption accumulation onto the background color.

    alpha_i = 1 - exp(-sigma_i*delta_i); T_i = prod_{j<i}(1-alpha_j);
    w_i = T_i*alpha_i; rgb = sum w_i c_i + (1 - sum w_i)*background.
    """
    sigmas = np.asarray(sigmas, dtype=np.float64)
    deltas = np.asarray(deltas, dtype=np.float64)
    colors = np.asarray(colors, dtype=np.float64)
    if np.any(sigmas < 0):
        raise ValueError("negative density")
    alphas = 1.0 - np.exp(-sigmas * deltas)
    trans_after = np.cumprod(1.0 - alphas, axis=1)
    transmittance = np.concatenate(
        [np.ones((alphas.shape[0], 1)), trans_after[:, :-1]], axis=1)
    weights = transmittance * alphas
    opacity = weights.sum(axis=1)
    rgb = (weights[:, :, None] * colors).sum(axis=1) \
        + (1.0 - opacity)[:, None] * background
    return CompositeResult(rgb, opacity, weights, transmittance, trans_after)


def composite_backward(result: CompositeResult, colors: np.ndarray,
                       deltas: np.ndarray, d_rgb: np.ndarray,
                       background: np.ndarray = BACKGROUND):
    """(d_sigma, d_colors) for a cotangent on the composited rgb.

    Uses transmittance suffix sums instead of dividing by (1 - alpha), so
    saturated samples stay finite:
      d_sigma_m = delta_m * (T_{m+1}(c_m . g) - sum_{i>m} w_i (c_i . g)
                             - T_n (bg . g)).
    """
    colors = np.asarray(colors, dtype=np.float64)
    deltas = np.asarray(deltas, dtype=np.float64)
    d_rgb = np.asarray(d_rgb, dtype=np.float64)
    cd = np.einsum("nsc,nc->ns", colors, d_rgb)
    bgd = d_rgb @ background
    s = result.weights * cd
    suffix = np.cumsum(s[:, ::-1], axis=1)[:, ::-1]  # sum_{i>=m} s_i
    d_sigma = deltas * (result.trans_after * cd - (suffix - s)
                        - result.trans_after[:, -1:] * bgd[:, None])
    d_colors = result.weights[:, :, None] * d_rgb[:, None, :]
    return d_sigma, d_colors


# -- full ray rendering ----------------------------------------------------------


@dataclass
class _ChunkCache:
    sl: slice
    t: np.ndarray
    deltas: np.ndarray
    dev: object                 # DensityEval
    denc: np.ndarray            # per-ray direction encoding
    color_cache: object
    comp: CompositeResult


@dataclass
class RenderCache:
    spec: FieldSpec
    theta_fd: ParamVector
    theta_fc: ParamVector
    batch: RayBatch
    chunks: list


@dataclass
class RenderGrads:
    d_theta_fd: ParamVector | None
    d_theta_fc: ParamVector | None
    d_origins: np.ndarray | None
    d_directions: np.ndarray | None


def _chunk_forward(spec, theta_fd, theta_fc, origins, dirs, t, deltas,
                   want_cache):
    r, s = t.shape
    pts = (origins[:, None, :] + t[:, :, None] * dirs[:, None, :]).reshape(-1, 3)
    if want_cache:
        dev = eval_density(pts, theta_fd, spec, want_cache=True)
        sigma, z = dev.sigma, dev.z
    else:
        dev = None
        sigma, z = eval_density(pts, theta_fd, spec)
    denc = encode_direction(dirs, spec.dir_encoding)
    cin = np.concatenate(
        [z, np.repeat(denc, s, axis=0).astype(z.dtype)], axis=1)
    out = mlp_forward(spec.color_mlp, theta_fc, cin.astype(theta_fc.dtype),
                      want_cache=want_cache)
    rgb_s, ccache = out if want_cache else (out, None)
    comp = composite(sigma.reshape(r, s), rgb_s.reshape(r, s, 3), deltas)
    cache = _ChunkCache(None, t, deltas, dev, denc, ccache, comp) \
        if want_cache else None
    return comp.rgb, cache


def _chunk_backward(spec, theta_fd, theta_fc, cache: _ChunkCache, dirs,
                    d_rgb, acc: RenderGrads):
    r, s = cache.t.shape
    want_field = acc.d_theta_fd is not None
    want_appearance = acc.d_theta_fc is not None
    want_rays = acc.d_origins is not None
    rgb_samples = cache.color_cache.post[-1].reshape(r, s, 3)
    d_sigma, d_colors = composite_backward(cache.comp, rgb_samples,
                                           cache.deltas, d_rgb)
    d_fc, d_cin = mlp_backward(spec.color_mlp, theta_fc, cache.color_cache,
                               d_colors.reshape(-1, 3),
                               want_param_grads=want_appearance)
    if want_appearance:
        acc.d_theta_fc.values += d_fc.values
    if want_field or want_rays:
        d_z = d_cin[:, : spec.z_dim]
        d_fd, d_x = density_backward(cache.dev, theta_fd, spec,
                                     d_sigma.ravel(), d_z,
                                     want_params=want_field,
                                     want_x=want_rays)
        if want_field:
            acc.d_theta_fd.values += d_fd.values
        if want_rays:
            d_x = d_x.reshape(r, s, 3)
            d_denc = d_cin[:, spec.z_dim :].reshape(r, s, -1).sum(axis=1)
            d_dir = (cache.t[:, :, None] * d_x).sum(axis=1) \
                + encode_direction_backward(dirs, spec.dir_encoding, d_denc)
            acc.d_origins[cache.sl] = d_x.sum(axis=1)
            acc.d_directions[cache.sl] = d_dir


def _chunk_slices(n, chunk):
    return [slice(i, min(i + chunk, n)) for i in range(0, n, chunk)]


def _chunk_t(batch, sl, cfg, rng, fixed_t):
    if fixed_t is not None:
        t, deltas = fixed_t
        return t[sl], deltas[sl]
    return sample_t(batch.t_near[sl], batch.t_far[sl], cfg.n_samples,
                    cfg.stratified, rng)


def render_rays(spec: FieldSpec, theta_fd: ParamVector, theta_fc: ParamVector,
                batch: RayBatch, cfg: RenderConfig,
                rng: np.random.Generator | None = None,
                fixed_t=None, want_cache: bool = False):
    """Per-ray rgb for a batch, shape (n, 3).

    fixed_t optionally supplies a precomputed (t, deltas) quadrature for the
    whole batch; gradient checks use it to keep sampling frozen while the
    pose moves.
    """
    n = len(batch)
    rgb = np.empty((n, 3))
    chunks = []
    for sl in _chunk_slices(n, cfg.chunk_rays):
        t, deltas = _chunk_t(batch, sl, cfg, rng, fixed_t)
        rgb[sl], cache = _chunk_forward(spec, theta_fd, theta_fc,
                                        batch.origins[sl],
                                        batch.directions[sl], t, deltas,
                                        want_cache)
        if want_cache:
            cache.sl = sl
            chunks.append(cache)
    if want_cache:
        return rgb, RenderCache(spec, theta_fd, theta_fc, batch, chunks)
    return rgb


def render_rays_backward(cache: RenderCache, d_rgb: np.ndarray,
                         want_field: bool = True, want_appearance: bool = True,
                         want_rays: bool = False) -> RenderGrads:
    """Chain per-ray rgb cotangents to parameter and ray gradients.

    Gradient accumulators are float64 regardless of the training dtype.
    With want_field off the density backward is skipped entirely unless the
    ray path needs it; the frozen theta_fd contract makes those gradients
    discardable.
    """
    n = len(cache.batch)
    acc = _make_grads(cache.spec, want_field, want_appearance, want_rays, n)
    for chunk in cache.chunks:
        _chunk_backward(cache.spec, cache.theta_fd, cache.theta_fc, chunk,
                        cache.batch.directions[chunk.sl],
                        np.asarray(d_rgb)[chunk.sl], acc)
    return acc


def render_and_backprop(spec, theta_fd, theta_fc, batch: RayBatch,
                        cfg: RenderConfig, loss_fn,
                        rng: np.random.Generator | None = None,
                        fixed_t=None, want_field=True, want_appearance=True,
                        want_rays=False):
    """Fused chunked forward+backward: caches never outlive their chunk.

    loss_fn(rgb_chunk, sl) returns (loss_contribution, d_rgb_chunk) where
    contributions over all chunks sum to the batch loss.  Returns (rgb, loss,
    RenderGrads).
    """
    n = len(batch)
    rgb = np.empty((n, 3))
    loss = 0.0
    acc = _make_grads(spec, want_field, want_appearance, want_rays, n)
    for sl in _chunk_slices(n, cfg.chunk_rays):
        t, deltas = _chunk_t(batch, sl, cfg, rng, fixed_t)
        rgb[sl], cache = _chunk_forward(spec, theta_fd, theta_fc,
                                        batch.origins[sl],
                                        batch.directions[sl], t, deltas, True)
        cache.sl = sl
        part, d_rgb = loss_fn(rgb[sl], sl)
        loss += part
        _chunk_backward(spec, theta_fd, theta_fc, cache,
                        batch.directions[sl], d_rgb, acc)
    return rgb, loss, acc


def _make_grads(spec, want_field, want_appearance, want_rays, n) -> RenderGrads:
    return RenderGrads(
        d_theta_fd=(ParamVector.zeros(spec.theta_fd_entries(), np.float64)
                    if want_field else None),
        d_theta_fc=(ParamVector.zeros(spec.theta_fc_entries(), np.float64)
                    if want_appearance else None),
        d_origins=np.zeros((n, 3)) if want_rays else None,
        d_directions=np.zeros((n, 3)) if want_rays else None,
    )


def render_image(spec: FieldSpec, theta_fd: ParamVector,
                 theta_fc: ParamVector, camera: Camera, pose: Pose,
                 cfg: RenderConfig) -> np.ndarray:
    """Full image at deterministic midpoint sampling; misses stay background."""
    det_cfg = replace(cfg, stratified=False)
    batch = generate_rays(camera, pose, camera.all_pixels())
    img = np.ones((camera.height, camera.width, 3))
    if len(batch):
        rgb = render_rays(spec, theta_fd, theta_fc, batch, det_cfg)
        img[batch.pixels[:, 1], batch.pixels[:, 0]] = rgb
    return img
