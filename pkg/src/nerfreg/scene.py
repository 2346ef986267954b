"""Synthetic stand-in for a clinical capture pipeline.

A procedural scene (hollow hemispherical tissue shell with vessel curves on
the dome and value-noise tissue albedo) plays the role of the preoperative
anatomy; a deterministic per-channel histogram-matching recolor plays the
role of modality change; an oracle fixed-step ray marcher renders ground
truth.  The oracle shares no code with the learned-field render path, so it
serves as an independent reference for every image-level claim.

All randomness flows through seeds recorded in the dataset manifests.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numba import njit, prange

from .camera import Camera, DEFAULT_CAMERA
from .fileio import read_ppm, write_ppm
from .se3 import Pose, look_at

SCENE_BOUNDS = (0.05, 0.95)   # scene must stay inside this sub-cube
SCALE_MM_PER_UNIT = 100.0     # 1 scene unit = 100 mm


# -- scene specification --------------------------------------------------------


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    center: np.ndarray          # (3,) hemisphere center
    radius: float               # mid-surface radius
    thickness: float            # full shell thickness
    rim_z: float                # shell exists where z - center_z >= rim_z
    sigma_max: float            # plateau density inside the shell
    vessel_points: np.ndarray   # (n_vessels, k, 3) polylines on the mid-surface
    vessel_radii: np.ndarray    # (n_vessels,)
    vessel_colors: np.ndarray   # (n_vessels, 3)
    color_a: np.ndarray         # tissue palette endpoints
    color_b: np.ndarray
    noise_coarse: np.ndarray    # value-noise lattices over the unit cube
    noise_fine: np.ndarray
    albedo_lut: np.ndarray | None = None   # (3, 256) recolor map, or None

    def __post_init__(self):
        lo, hi = SCENE_BOUNDS
        vmax = float(self.vessel_radii.max()) if self.vessel_radii.size else 0.0
        pad = self.radius + self.thickness / 2 + vmax
        extremes = [
            self.center[0] - pad, self.center[0] + pad,
            self.center[1] - pad, self.center[1] + pad,
            self.center[2] + self.rim_z - vmax,
            self.center[2] + pad,
        ]
        if min(extremes) < lo or max(extremes) > hi:
            raise ValueError("scene geometry leaves the allowed sub-cube")
        if self.thickness <= 0 or self.radius <= 0 or self.sigma_max < 0:
            raise ValueError("radius and thickness must be positive, "
                             "sigma_max nonnegative")
        if self.vessel_radii.size and np.any(self.vessel_radii <= 0):
            raise ValueError("vessel radii must be positive")
        if self.albedo_lut is not None and self.albedo_lut.shape != (3, 256):
            raise ValueError("albedo_lut must have shape (3, 256)")


def _vessel_polyline(rng, rim_cos, n_points):
    # tangent walk on the unit sphere, kept on the upper dome
    az = rng.uniform(0.0, 2 * np.pi)
    pol = rng.uniform(np.deg2rad(16.0), np.deg2rad(52.0))
    p = np.array([np.sin(pol) * np.cos(az), np.sin(pol) * np.sin(az), np.cos(pol)])
    v = rng.normal(size=3)
    t = v - (v @ p) * p
    t /= np.linalg.norm(t)
    step = rng.uniform(0.07, 0.12)
    pts = np.empty((n_points, 3))
    for i in range(n_points):
        pts[i] = p
        p_new = np.cos(step) * p + np.sin(step) * t
        p_new /= np.linalg.norm(p_new)
        t = t - (t @ p_new) * p_new
        w = rng.normal(size=3)
        w -= (w @ p_new) * p_new
        t = t + 0.35 * rng.random() * w / max(np.linalg.norm(w), 1e-9)
        t /= np.linalg.norm(t)
        if p_new[2] < rim_cos + 0.12 and t[2] < 0:
            t[2] = -t[2]      # bounce off the rim, stay on the dome
            t /= np.linalg.norm(t)
        p = p_new
    return pts


def make_scene(seed: int = 0, n_vessels: int = 6) -> SceneSpec:
    """Default procedural scene, fully determined by (seed, n_vessels)."""
    rng = np.random.default_rng([seed, 0x5CE])
    center = np.array([0.5, 0.5, 0.32])
    radius, thickness, rim_z = 0.34, 0.07, -0.02
    rim_cos = rim_z / radius
    k = 14
    vessel_points = np.empty((n_vessels, k, 3))
    for i in range(n_vessels):
        vessel_points[i] = center + radius * _vessel_polyline(rng, rim_cos, k)
    vessel_radii = rng.uniform(0.014, 0.024, size=n_vessels)
    vessel_colors = np.column_stack([
        rng.uniform(0.34, 0.50, n_vessels),
        rng.uniform(0.05, 0.13, n_vessels),
        rng.uniform(0.07, 0.15, n_vessels),
    ])
    return SceneSpec(
        seed=seed,
        center=center,
        radius=radius,
        thickness=thickness,
        rim_z=rim_z,
        sigma_max=45.0,
        vessel_points=vessel_points,
        vessel_radii=vessel_radii,
        vessel_colors=vessel_colors,
        color_a=np.array([0.85, 0.66, 0.60]),
        color_b=np.array([0.56, 0.36, 0.33]),
        noise_coarse=rng.random((7, 7, 7)),
        noise_fine=rng.random((17, 17, 17)),
    )


# -- numba kernels ---------------------------------------------------------------


@njit(cache=True, inline="always")
def _tri_lattice(grid, x, y, z):
    g = grid.shape[0] - 1
    fx = min(max(x, 0.0), 1.0) * g
    fy = min(max(y, 0.0), 1.0) * g
    fz = min(max(z, 0.0), 1.0) * g
    i = min(int(fx), g - 1)
    j = min(int(fy), g - 1)
    k = min(int(fz), g - 1)
    tx, ty, tz = fx - i, fy - j, fz - k
    c00 = grid[i, j, k] * (1 - tx) + grid[i + 1, j, k] * tx
    c10 = grid[i, j + 1, k] * (1 - tx) + grid[i + 1, j + 1, k] * tx
    c01 = grid[i, j, k + 1] * (1 - tx) + grid[i + 1, j, k + 1] * tx
    c11 = grid[i, j + 1, k + 1] * (1 - tx) + grid[i + 1, j + 1, k + 1] * tx
    c0 = c00 * (1 - ty) + c10 * ty
    c1 = c01 * (1 - ty) + c11 * ty
    return c0 * (1 - tz) + c1 * tz


@njit(cache=True, inline="always")
def _sigma_at(px, py, pz, cx, cy, cz, radius, half_th, ramp, rim_z, sigma_max):
    dz = pz - cz
    if dz < rim_z:
        return 0.0
    dx = px - cx
    dy = py - cy
    r = math.sqrt(dx * dx + dy * dy + dz * dz)
    u = (half_th - abs(r - radius)) / ramp
    if u <= 0.0:
        return 0.0
    if u >= 1.0:
        return sigma_max
    return sigma_max * u * u * (3.0 - 2.0 * u)


@njit(cache=True, inline="always")
def _vessel_blend(px, py, pz, vpts, vradii, vbmin, vbmax):
    """(index, weight) of the first vessel (fixed order) containing the point.

    Weight is 1 inside the tube core and smoothsteps to 0 at the surface, so
    color edges are band-limited and fixed-step marches converge.
    """
    for i in range(vpts.shape[0]):
        if (px < vbmin[i, 0] or px > vbmax[i, 0]
                or py < vbmin[i, 1] or py > vbmax[i, 1]
                or pz < vbmin[i, 2] or pz > vbmax[i, 2]):
            continue
        best = 1e30
        for s in range(vpts.shape[1] - 1):
            ax, ay, az = vpts[i, s, 0], vpts[i, s, 1], vpts[i, s, 2]
            bx = vpts[i, s + 1, 0] - ax
            by = vpts[i, s + 1, 1] - ay
            bz = vpts[i, s + 1, 2] - az
            qx, qy, qz = px - ax, py - ay, pz - az
            bb = bx * bx + by * by + bz * bz
            t = 0.0
            if bb > 0.0:
                t = (qx * bx + qy * by + qz * bz) / bb
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
            ex, ey, ez = qx - t * bx, qy - t * by, qz - t * bz
            d2 = ex * ex + ey * ey + ez * ez
            if d2 < best:
                best = d2
        r = vradii[i]
        if best <= r * r:
            d = math.sqrt(best)
            core = 0.6 * r
            if d <= core:
                return i, 1.0
            u = (r - d) / (r - core)
            return i, u * u * (3.0 - 2.0 * u)
    return -1, 0.0


@njit(cache=True, inline="always")
def _albedo_at(px, py, pz, coarse, fine, ca, cb,
               vpts, vradii, vcolors, vbmin, vbmax,
               lut, has_lut, out3):
    t = 0.62 * _tri_lattice(coarse, px, py, pz) + 0.38 * _tri_lattice(fine, px, py, pz)
    out3[0] = ca[0] + t * (cb[0] - ca[0])
    out3[1] = ca[1] + t * (cb[1] - ca[1])
    out3[2] = ca[2] + t * (cb[2] - ca[2])
    i, w = _vessel_blend(px, py, pz, vpts, vradii, vbmin, vbmax)
    if i >= 0:
        if w >= 1.0:        # tube core: exactly the vessel color
            out3[0] = vcolors[i, 0]
            out3[1] = vcolors[i, 1]
            out3[2] = vcolors[i, 2]
        else:
            out3[0] += w * (vcolors[i, 0] - out3[0])
            out3[1] += w * (vcolors[i, 1] - out3[1])
            out3[2] += w * (vcolors[i, 2] - out3[2])
    if has_lut:
        for c in range(3):
            j = int(out3[c] * 255.0 + 0.5)
            if j < 0:
                j = 0
            elif j > 255:
                j = 255
            out3[c] = lut[c, j]


@njit(cache=True, parallel=True)
def _density_kernel(pts, cx, cy, cz, radius, half_th, ramp, rim_z, sigma_max, out):
    for n in prange(pts.shape[0]):
        out[n] = _sigma_at(pts[n, 0], pts[n, 1], pts[n, 2],
                           cx, cy, cz, radius, half_th, ramp, rim_z, sigma_max)


@njit(cache=True, parallel=True)
def _albedo_kernel(pts, coarse, fine, ca, cb, vpts, vradii, vcolors,
                   vbmin, vbmax, lut, has_lut, out):
    for n in prange(pts.shape[0]):
        buf = np.empty(3)
        _albedo_at(pts[n, 0], pts[n, 1], pts[n, 2], coarse, fine, ca, cb,
                   vpts, vradii, vcolors, vbmin, vbmax, lut, has_lut, buf)
        out[n, 0] = buf[0]
        out[n, 1] = buf[1]
        out[n, 2] = buf[2]


@njit(cache=True, parallel=True)
def _oracle_kernel(width, height, fx, fy, cxp, cyp, rot, trans, n_steps,
                   cx, cy, cz, radius, half_th, ramp, rim_z, sigma_max,
                   coarse, fine, ca, cb, vpts, vradii, vcolors, vbmin, vbmax,
                   lut, has_lut, img):
    for pix in prange(width * height):
        v = pix // width
        u = pix % width
        dcx = (u + 0.5 - cxp) / fx
        dcy = -(v + 0.5 - cyp) / fy
        dcz = -1.0
        dx = rot[0, 0] * dcx + rot[0, 1] * dcy + rot[0, 2] * dcz
        dy = rot[1, 0] * dcx + rot[1, 1] * dcy + rot[1, 2] * dcz
        dz = rot[2, 0] * dcx + rot[2, 1] * dcy + rot[2, 2] * dcz
        norm = math.sqrt(dx * dx + dy * dy + dz * dz)
        dx, dy, dz = dx / norm, dy / norm, dz / norm
        ox, oy, oz = trans[0], trans[1], trans[2]

        # slab test against the unit cube
        tn, tf = 0.0, 1e30
        miss = False
        for a in range(3):
            o = ox if a == 0 else (oy if a == 1 else oz)
            d = dx if a == 0 else (dy if a == 1 else dz)
            if abs(d) < 1e-12:
                if o < 0.0 or o > 1.0:
                    miss = True
                    break
            else:
                t0 = (0.0 - o) / d
                t1 = (1.0 - o) / d
                if t0 > t1:
                    t0, t1 = t1, t0
                if t0 > tn:
                    tn = t0
                if t1 < tf:
                    tf = t1
        racc, gacc, bacc = 0.0, 0.0, 0.0
        trans_left = 1.0
        if not miss and tf > tn + 1e-9:
            dt = (tf - tn) / n_steps
            buf = np.empty(3)
            for s in range(n_steps):
                tm = tn + (s + 0.5) * dt
                px = ox + tm * dx
                py = oy + tm * dy
                pz = oz + tm * dz
                sig = _sigma_at(px, py, pz, cx, cy, cz, radius, half_th,
                                ramp, rim_z, sigma_max)
                if sig > 0.0:
                    alpha = 1.0 - math.exp(-sig * dt)
                    _albedo_at(px, py, pz, coarse, fine, ca, cb, vpts, vradii,
                               vcolors, vbmin, vbmax, lut, has_lut, buf)
                    w = trans_left * alpha
                    racc += w * buf[0]
                    gacc += w * buf[1]
                    bacc += w * buf[2]
                    trans_left *= 1.0 - alpha
                    if trans_left < 1e-7:
                        break
        img[v, u, 0] = racc + trans_left
        img[v, u, 1] = gacc + trans_left
        img[v, u, 2] = bacc + trans_left


def _vessel_bounds(spec):
    if spec.vessel_points.size == 0:
        z = np.zeros((0, 3))
        return z, z
    pad = spec.vessel_radii[:, None] + 1e-9
    return spec.vessel_points.min(axis=1) - pad, spec.vessel_points.max(axis=1) + pad


def _kernel_args(spec):
    vbmin, vbmax = _vessel_bounds(spec)
    if spec.albedo_lut is None:
        lut, has_lut = np.zeros((3, 256)), False
    else:
        lut, has_lut = np.ascontiguousarray(spec.albedo_lut, dtype=np.float64), True
    return dict(
        cx=float(spec.center[0]), cy=float(spec.center[1]), cz=float(spec.center[2]),
        radius=float(spec.radius), half_th=float(spec.thickness) / 2,
        ramp=float(spec.thickness) / 4, rim_z=float(spec.rim_z),
        sigma_max=float(spec.sigma_max),
        coarse=spec.noise_coarse, fine=spec.noise_fine,
        ca=spec.color_a, cb=spec.color_b,
        vpts=spec.vessel_points, vradii=spec.vessel_radii,
        vcolors=spec.vessel_colors, vbmin=vbmin, vbmax=vbmax,
        lut=lut, has_lut=has_lut,
    )


def scene_density(spec: SceneSpec, x: np.ndarray) -> np.ndarray:
    """Ground-truth density at points x (n, 3)."""
    pts = np.ascontiguousarray(x, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("x must have shape (n, 3)")
    a = _kernel_args(spec)
    out = np.empty(pts.shape[0])
    _density_kernel(pts, a["cx"], a["cy"], a["cz"], a["radius"], a["half_th"],
                    a["ramp"], a["rim_z"], a["sigma_max"], out)
    return out


def scene_albedo(spec: SceneSpec, x: np.ndarray) -> np.ndarray:
    """Ground-truth albedo at points x (n, 3); LUT applied if present."""
    pts = np.ascontiguousarray(x, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("x must have shape (n, 3)")
    a = _kernel_args(spec)
    out = np.empty((pts.shape[0], 3))
    _albedo_kernel(pts, a["coarse"], a["fine"], a["ca"], a["cb"], a["vpts"],
                   a["vradii"], a["vcolors"], a["vbmin"], a["vbmax"],
                   a["lut"], a["has_lut"], out)
    return out


def oracle_render(spec: SceneSpec, camera: Camera, pose: Pose,
                  n_steps: int = 512) -> np.ndarray:
    """Reference image by dense fixed-step marching (independent of the field)."""
    if n_steps < 512:
        raise ValueError("oracle rendering requires at least 512 steps")
    a = _kernel_args(spec)
    img = np.empty((camera.height, camera.width, 3))
    _oracle_kernel(camera.width, camera.height,
                   float(camera.fx), float(camera.fy),
                   float(camera.cx), float(camera.cy),
                   np.ascontiguousarray(pose.rotation),
                   np.ascontiguousarray(pose.translation), n_steps,
                   a["cx"], a["cy"], a["cz"], a["radius"], a["half_th"],
                   a["ramp"], a["rim_z"], a["sigma_max"],
                   a["coarse"], a["fine"], a["ca"], a["cb"], a["vpts"],
                   a["vradii"], a["vcolors"], a["vbmin"], a["vbmax"],
                   a["lut"], a["has_lut"], img)
    return img


# -- deterministic recoloring ----------------------------------------------------


def _shell_points(spec, n, rng):
    # roughly uniform over the shell: direction on the dome cap, radius in band
    cos_min = spec.rim_z / spec.radius
    c = rng.uniform(cos_min, 1.0, n)
    az = rng.uniform(0.0, 2 * np.pi, n)
    s = np.sqrt(np.clip(1.0 - c * c, 0.0, 1.0))
    d = np.column_stack([s * np.cos(az), s * np.sin(az), c])
    r = rng.uniform(spec.radius - spec.thickness / 2,
                    spec.radius + spec.thickness / 2, n)
    return spec.center + d * r[:, None]


def stylize_scene(spec: SceneSpec, style_image: np.ndarray, style_id: str,
                  n_samples: int = 100_000, seed: int = 0) -> SceneSpec:
    """Recolored copy of the scene whose albedo distribution matches the style.

    Builds a monotone per-channel lookup table by quantile-mapping the base
    albedo distribution (sampled over the shell) onto the full style-image
    distribution.  Always derived from the base albedo, so restyling a styled
    scene gives the same result as styling the base scene.
    """
    style = np.asarray(style_image, dtype=np.float64)
    if style.ndim != 3 or style.shape[2] != 3:
        raise ValueError("style image must have shape (h, w, 3)")
    if style.min() < 0.0 or style.max() > 1.0:
        raise ValueError("style image values must lie in [0, 1]")
    base = replace(spec, albedo_lut=None)
    rng = np.random.default_rng([seed, zlib.crc32(style_id.encode("utf-8"))])
    samples = scene_albedo(base, _shell_points(base, n_samples, rng))
    lut = np.empty((3, 256))
    grid = np.arange(256) / 255.0
    for ch in range(3):
        src = np.sort(samples[:, ch])
        tgt = np.sort(style[:, :, ch].ravel())
        # empirical cdf of the base albedo at each lut input value
        cdf = np.searchsorted(src, grid, side="right") / src.size
        lut[ch] = np.interp(cdf, np.linspace(0.0, 1.0, tgt.size), tgt)
    return replace(spec, albedo_lut=lut)


# -- style library ---------------------------------------------------------------


@dataclass(frozen=True)
class StyleImage:
    style_id: str
    image: np.ndarray


def _hsv_to_rgb(h, s, v):
    h6 = (h % 1.0) * 6.0
    i = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def _smooth_field(rng, size, cells):
    # bilinear upsample of a random lattice, values in [0, 1]
    lat = rng.random((cells + 1, cells + 1))
    u = np.linspace(0.0, cells, size)
    i = np.minimum(u.astype(int), cells - 1)
    t = u - i
    rows = lat[i][:, i] * np.outer(1 - t, 1 - t) \
        + lat[i + 1][:, i] * np.outer(t, 1 - t) \
        + lat[i][:, i + 1] * np.outer(1 - t, t) \
        + lat[i + 1][:, i + 1] * np.outer(t, t)
    return rows


def build_style_library(seed: int = 0, n_styles: int = 15,
                        size: int = 64) -> list[StyleImage]:
    """Smooth colored style images with evenly spaced hues.

    Brightness stays below 0.9 so style histograms leave the top intensity
    bin empty; pairwise mean colors are at least 0.05 apart.
    """
    styles = []
    for i in range(n_styles):
        rng = np.random.default_rng([seed, 0x57, i])
        hue = (0.04 + i / n_styles) % 1.0
        sat0 = 0.55 + 0.30 * rng.random()
        val0 = 0.40 + 0.30 * rng.random()
        h = hue + 0.08 * (_smooth_field(rng, size, 4) - 0.5)
        s = np.clip(sat0 + 0.36 * (_smooth_field(rng, size, 5) - 0.5), 0.25, 1.0)
        v = np.clip(val0 + 0.32 * (_smooth_field(rng, size, 5) - 0.5), 0.12, 0.88)
        styles.append(StyleImage(f"style{i:02d}", _hsv_to_rgb(h, s, v)))
    means = np.array([st.image.mean(axis=(0, 1)) for st in styles])
    for i in range(n_styles):
        for j in range(i + 1, n_styles):
            if np.linalg.norm(means[i] - means[j]) <= 0.05:
                raise RuntimeError(
                    f"styles {i} and {j} are too similar; change the seed")
    return styles


# -- pose sampling ---------------------------------------------------------------


@dataclass(frozen=True)
class PoseSampler:
    """Uniform camera placement on a spherical shell around the scene."""
    radius_range: tuple[float, float] = (0.72, 0.82)
    elev_range_deg: tuple[float, float] = (30.0, 72.0)
    azim_range_deg: tuple[float, float] = (0.0, 360.0)
    lookat: tuple[float, float, float] = (0.5, 0.5, 0.44)
    lookat_jitter: float = 0.025
    seed: int = 0
    camera: Camera = field(default_factory=lambda: DEFAULT_CAMERA)

    def __post_init__(self):
        if not (0.0 < self.radius_range[0] <= self.radius_range[1]):
            raise ValueError("invalid radius range")
        if not (-90.0 < self.elev_range_deg[0] <= self.elev_range_deg[1] < 90.0):
            raise ValueError("invalid elevation range")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng([self.seed, 0x90])


def train_sampler(camera: Camera = DEFAULT_CAMERA) -> PoseSampler:
    return PoseSampler(camera=camera)


def test_sampler(camera: Camera = DEFAULT_CAMERA) -> PoseSampler:
    # reaches above the training band, so some test elevations are novel
    return PoseSampler(elev_range_deg=(57.0, 75.0), camera=camera)


def _sees_scene(pose: Pose, camera: Camera, point: np.ndarray) -> bool:
    # the anchor point must project into the central half of the image
    q = pose.rotation.T @ (np.asarray(point) - pose.translation)
    if q[2] >= -1e-6:
        return False
    u = camera.cx + camera.fx * q[0] / -q[2] - 0.5
    v = camera.cy - camera.fy * q[1] / -q[2] - 0.5
    return (0.25 * camera.width <= u <= 0.75 * camera.width
            and 0.25 * camera.height <= v <= 0.75 * camera.height)


def sample_pose(sampler: PoseSampler, rng: np.random.Generator) -> Pose:
    """Draw one pose; rejects candidates that do not look at the scene."""
    anchor = np.asarray(sampler.lookat)
    for _ in range(100):
        r = rng.uniform(*sampler.radius_range)
        elev = np.deg2rad(rng.uniform(*sampler.elev_range_deg))
        azim = np.deg2rad(rng.uniform(*sampler.azim_range_deg))
        eye = anchor + r * np.array([
            np.cos(elev) * np.cos(azim),
            np.cos(elev) * np.sin(azim),
            np.sin(elev),
        ])
        target = anchor + sampler.lookat_jitter * rng.uniform(-1.0, 1.0, 3)
        pose = look_at(eye, target, np.array([0.0, 0.0, 1.0]))
        if _sees_scene(pose, sampler.camera, anchor):
            return pose
    raise RuntimeError("could not sample a pose that sees the scene")


def sample_poses(sampler: PoseSampler, n: int,
                 rng: np.random.Generator | None = None) -> list[Pose]:
    rng = rng if rng is not None else sampler.rng()
    return [sample_pose(sampler, rng) for _ in range(n)]


# -- datasets --------------------------------------------------------------------


@dataclass
class Dataset:
    """Posed multi-view images rendered by the oracle, stored as PPM files."""
    root: Path
    camera: Camera
    style_id: str
    split: str
    seed: int
    scene_seed: int
    n_vessels: int
    scale_mm_per_unit: float
    poses: list[Pose]
    image_files: list[str]

    def __post_init__(self):
        if len(self.poses) != len(self.image_files):
            raise ValueError("poses and image files must align")

    def __len__(self):
        return len(self.poses)

    def image(self, i: int) -> np.ndarray:
        return read_ppm(self.root / self.image_files[i])

    def load_images(self) -> list[np.ndarray]:
        return [self.image(i) for i in range(len(self))]


def render_dataset(spec: SceneSpec, camera: Camera, poses: list[Pose],
                   root, style_id: str, split: str, seed: int,
                   n_steps: int = 512) -> Dataset:
    """Render all poses with the oracle and write images + manifest to disk."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    image_files = []
    for i, pose in enumerate(poses):
        name = f"view{i:03d}.ppm"
        write_ppm(root / name, oracle_render(spec, camera, pose, n_steps))
        image_files.append(name)
    ds = Dataset(root=root, camera=camera, style_id=style_id, split=split,
                 seed=seed, scene_seed=spec.seed,
                 n_vessels=spec.vessel_points.shape[0],
                 scale_mm_per_unit=SCALE_MM_PER_UNIT,
                 poses=list(poses), image_files=image_files)
    _write_manifest(ds)
    return ds


def _write_manifest(ds: Dataset):
    manifest = {
        "style_id": ds.style_id,
        "split": ds.split,
        "seed": ds.seed,
        "scene_seed": ds.scene_seed,
        "n_vessels": ds.n_vessels,
        "scale_mm_per_unit": ds.scale_mm_per_unit,
        "camera": {
            "fx": ds.camera.fx, "fy": ds.camera.fy,
            "cx": ds.camera.cx, "cy": ds.camera.cy,
            "width": ds.camera.width, "height": ds.camera.height,
        },
        "views": [
            {"image": img, "pose": pose.matrix().ravel().tolist()}
            for img, pose in zip(ds.image_files, ds.poses)
        ],
    }
    with open(ds.root / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1)


def load_dataset(root) -> Dataset:
    root = Path(root)
    path = root / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"no dataset manifest at {path}")
    with open(path) as f:
        m = json.load(f)
    cam = m["camera"]
    camera = Camera(cam["fx"], cam["fy"], cam["cx"], cam["cy"],
                    cam["width"], cam["height"])
    poses, image_files = [], []
    for view in m["views"]:
        mat = np.asarray(view["pose"], dtype=np.float64).reshape(4, 4)
        poses.append(Pose.from_matrix(mat))
        image_files.append(view["image"])
    return Dataset(root=root, camera=camera, style_id=m["style_id"],
                   split=m["split"], seed=m["seed"], scene_seed=m["scene_seed"],
                   n_vessels=m["n_vessels"],
                   scale_mm_per_unit=m["scale_mm_per_unit"],
                   poses=poses, image_files=image_files)


def make_datasets(spec: SceneSpec, styles: list[StyleImage], camera: Camera,
                  n_views: int, sampler: PoseSampler, out_root,
                  n_steps: int = 512, split: str = "train") -> list[Dataset]:
    """One dataset per style: stylize, sample poses, render, write to disk."""
    out_root = Path(out_root)
    datasets = []
    for style in styles:
        styled = stylize_scene(spec, style.image, style.style_id)
        rng = np.random.default_rng(
            [sampler.seed, zlib.crc32(style.style_id.encode("utf-8"))])
        poses = sample_poses(sampler, n_views, rng)
        ds = render_dataset(styled, camera, poses,
                            out_root / style.style_id, style.style_id,
                            split, sampler.seed, n_steps)
        datasets.append(ds)
    return datasets
