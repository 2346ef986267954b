"""Pinhole camera model.

Convention (must match dataset manifests exactly): right-handed camera frame
looking along -z with y up in camera space, pixel origin at the top-left,
half-pixel centers.  The camera-frame direction of pixel (u, v) is
((u+0.5-cx)/fx, -(v+0.5-cy)/fy, -1), normalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("camera must have at least one pixel")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    def scaled(self, k: int) -> "Camera":
        """Same field of view at k times the resolution."""
        return Camera(self.fx * k, self.fy * k, self.cx * k, self.cy * k,
                      self.width * k, self.height * k)

    def all_pixels(self) -> np.ndarray:
        """(n, 2) integer (u, v) pairs, row-major (v outer, u inner)."""
        u, v = np.meshgrid(np.arange(self.width), np.arange(self.height))
        return np.stack([u.ravel(), v.ravel()], axis=1).astype(np.int64)

    def pixel_directions(self, pixels: np.ndarray) -> np.ndarray:
        """Unit camera-frame directions for integer (u, v) pixels, (n, 3)."""
        pixels = np.asarray(pixels)
        if pixels.ndim != 2 or pixels.shape[1] != 2:
            raise ValueError(f"pixels must be (n, 2), got {pixels.shape}")
        u = pixels[:, 0].astype(np.float64)
        v = pixels[:, 1].astype(np.float64)
        if (u.min() < 0 or u.max() >= self.width
                or v.min() < 0 or v.max() >= self.height):
            raise ValueError("pixel coordinates out of bounds")
        d = np.stack([(u + 0.5 - self.cx) / self.fx,
                      -(v + 0.5 - self.cy) / self.fy,
                      -np.ones_like(u)], axis=1)
        return d / np.linalg.norm(d, axis=1, keepdims=True)


# 64x64 profile for fast CPU experiments; the scaled(4) profile gives the
# 256x256 resolution used for higher-fidelity runs.
DEFAULT_CAMERA = Camera(80.0, 80.0, 32.0, 32.0, 64, 64)


def camera_profile(name: str) -> Camera:
    if name in ("64", "default"):
        return DEFAULT_CAMERA
    if name == "256":
        return DEFAULT_CAMERA.scaled(4)
    raise ValueError(f"unknown camera profile {name!r} (use 64 or 256)")
