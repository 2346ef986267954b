"""Multiresolution hash-grid position encoding and frequency direction encoding.

Each level ℓ covers the unit cube with a grid of resolution floor(N_min·b^ℓ).
A level whose dense vertex grid fits in the per-level table uses row-major
dense indexing (x fastest); finer levels index vertices with the XOR-prime
spatial hash.  Features are trilinearly interpolated from the 8 cell corners
and concatenated coarse to fine.

The backward pass returns both the table gradient (scatter of the cotangent
by interpolation weights) and the position gradient (through the weights,
piecewise linear in x).  The position path is what carries pose gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import get_num_threads, get_thread_id, njit, prange

HASH_PRIMES = (1, 2654435761, 805459861)


@dataclass(frozen=True)
class HashGridSpec:
    levels: int = 8
    features_per_level: int = 2
    base_resolution: int = 16
    growth_factor: float = 1.5
    table_size: int = 2 ** 14

    def __post_init__(self):
        if min(self.levels, self.features_per_level, self.base_resolution) < 1:
            raise ValueError("levels, features and base resolution must be >= 1")
        if self.growth_factor <= 1.0:
            raise ValueError("growth_factor must be > 1")
        t = self.table_size
        if t < 1 or (t & (t - 1)) != 0:
            raise ValueError("table_size must be a power of two")

    def resolution(self, level: int) -> int:
        return int(np.floor(self.base_resolution * self.growth_factor ** level))

    def resolutions(self) -> np.ndarray:
        return np.array([self.resolution(l) for l in range(self.levels)], np.int64)

    def is_dense(self, level: int) -> bool:
        r = self.resolution(level) + 1
        return r * r * r <= self.table_size

    @property
    def output_dim(self) -> int:
        return self.levels * self.features_per_level

    @property
    def table_rows(self) -> int:
        return self.levels * self.table_size


def init_hash_table(spec: HashGridSpec, rng: np.random.Generator,
                    dtype=np.float32) -> np.ndarray:
    """Embedding table (levels*table_size, F), uniform in [-1e-4, 1e-4]."""
    return rng.uniform(-1e-4, 1e-4,
                       (spec.table_rows, spec.features_per_level)).astype(dtype)


def hash_index(spec: HashGridSpec, level: int, cell) -> int:
    """Table row (within the level) of one integer corner coordinate.

    Dense levels use row-major indexing with x fastest; hashed levels XOR the
    coordinates times fixed primes and reduce mod table_size.  Exact integer
    arithmetic; coordinates are far below any overflow.
    """
    if level >= spec.levels:
        raise ValueError(f"level {level} out of range")
    x, y, z = (int(c) for c in cell)
    if spec.is_dense(level):
        side = spec.resolution(level) + 1
        return x + side * (y + side * z)
    h = (x * HASH_PRIMES[0]) ^ (y * HASH_PRIMES[1]) ^ (z * HASH_PRIMES[2])
    return h % spec.table_size


# -- numba kernels -----------------------------------------------------------
# Positions arrive as float64 (n, 3); the table may be float32 or float64.
# Interpolation weights are computed in float64 either way.


@njit(cache=True, inline="always")
def _corner_index(cx, cy, cz, res, dense, T):
    if dense:
        side = res + 1
        return cx + side * (cy + side * cz)
    h = (cx * 1) ^ (cy * 2654435761) ^ (cz * 805459861)
    return h % T


@njit(cache=True, parallel=True)
def _encode_forward(x, table, res, dense, T, F, out):
    n = x.shape[0]
    L = res.shape[0]
    for i in prange(n):
        for l in range(L):
            R = res[l]
            base = l * T
            sx = min(max(x[i, 0], 0.0), 1.0) * R
            sy = min(max(x[i, 1], 0.0), 1.0) * R
            sz = min(max(x[i, 2], 0.0), 1.0) * R
            cx = min(int(sx), R - 1)
            cy = min(int(sy), R - 1)
            cz = min(int(sz), R - 1)
            fx = sx - cx
            fy = sy - cy
            fz = sz - cz
            for f in range(F):
                out[i, l * F + f] = 0.0
            for dz in range(2):
                wz = fz if dz == 1 else 1.0 - fz
                for dy in range(2):
                    wyz = (fy if dy == 1 else 1.0 - fy) * wz
                    for dx in range(2):
                        w = (fx if dx == 1 else 1.0 - fx) * wyz
                        idx = base + _corner_index(cx + dx, cy + dy, cz + dz,
                                                   R, dense[l], T)
                        for f in range(F):
                            out[i, l * F + f] += w * table[idx, f]


@njit(cache=True, parallel=True)
def _encode_backward(x, table, d_feat, res, dense, T, F,
                     want_table, want_x, d_table_buf, d_x):
    n = x.shape[0]
    L = res.shape[0]
    for i in prange(n):
        tid = get_thread_id()
        gx = 0.0
        gy = 0.0
        gz = 0.0
        for l in range(L):
            R = res[l]
            base = l * T
            sx = min(max(x[i, 0], 0.0), 1.0) * R
            sy = min(max(x[i, 1], 0.0), 1.0) * R
            sz = min(max(x[i, 2], 0.0), 1.0) * R
            cx = min(int(sx), R - 1)
            cy = min(int(sy), R - 1)
            cz = min(int(sz), R - 1)
            fx = sx - cx
            fy = sy - cy
            fz = sz - cz
            for dz in range(2):
                wz = fz if dz == 1 else 1.0 - fz
                for dy in range(2):
                    wy = fy if dy == 1 else 1.0 - fy
                    for dx in range(2):
                        wx = fx if dx == 1 else 1.0 - fx
                        idx = base + _corner_index(cx + dx, cy + dy, cz + dz,
                                                   R, dense[l], T)
                        if want_table:
                            w = wx * wy * wz
                            for f in range(F):
                                d_table_buf[tid, idx, f] += w * d_feat[i, l * F + f]
                        if want_x:
                            # cotangent dotted with this corner's embedding
                            g = 0.0
                            for f in range(F):
                                g += table[idx, f] * d_feat[i, l * F + f]
                            sxn = 1.0 if dx == 1 else -1.0
                            syn = 1.0 if dy == 1 else -1.0
                            szn = 1.0 if dz == 1 else -1.0
                            gx += R * sxn * wy * wz * g
                            gy += R * syn * wx * wz * g
                            gz += R * szn * wx * wy * g
        if want_x:
            d_x[i, 0] = gx
            d_x[i, 1] = gy
            d_x[i, 2] = gz


def encode_position(x: np.ndarray, table: np.ndarray,
                    spec: HashGridSpec) -> np.ndarray:
    """Encode points (n, 3) in [0,1]^3 to features (n, levels*F).

    Callers clamp to the domain; a marginal overshoot is clamped again here
    for numerical slack.  NaN positions are rejected.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 3:
        raise ValueError(f"positions must be (n, 3), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite position passed to encode_position")
    out = np.empty((x.shape[0], spec.output_dim), dtype=table.dtype)
    _encode_forward(x, table, spec.resolutions(), _dense_flags(spec),
                    spec.table_size, spec.features_per_level, out)
    return out


def encode_position_backward(x: np.ndarray, table: np.ndarray,
                             spec: HashGridSpec, d_feat: np.ndarray,
                             want_table: bool = True, want_x: bool = True):
    """Gradients of sum(d_feat * encode_position(x)) w.r.t. table and x.

    Returns (d_table, d_x); either is None when not requested.  Table
    gradients accumulate into per-thread buffers merged in fixed order, so
    results are deterministic for a fixed thread count.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    d_feat = np.ascontiguousarray(d_feat, dtype=np.float64)
    if d_feat.shape != (x.shape[0], spec.output_dim):
        raise ValueError(f"d_feat has shape {d_feat.shape}")
    nt = get_num_threads()
    buf = (np.zeros((nt, spec.table_rows, spec.features_per_level))
           if want_table else np.zeros((1, 1, 1)))
    d_x = np.zeros((x.shape[0], 3)) if want_x else np.zeros((1, 3))
    _encode_backward(x, np.ascontiguousarray(table, dtype=np.float64), d_feat,
                     spec.resolutions(), _dense_flags(spec), spec.table_size,
                     spec.features_per_level, want_table, want_x, buf, d_x)
    d_table = buf.sum(axis=0).astype(table.dtype) if want_table else None
    return d_table, (d_x if want_x else None)


def _dense_flags(spec: HashGridSpec) -> np.ndarray:
    return np.array([spec.is_dense(l) for l in range(spec.levels)], np.bool_)


# -- view-direction encoding --------------------------------------------------


@dataclass(frozen=True)
class DirEncodingSpec:
    n_frequencies: int = 2

    def __post_init__(self):
        if self.n_frequencies < 0:
            raise ValueError("n_frequencies must be >= 0")

    @property
    def output_dim(self) -> int:
        return 3 + 6 * self.n_frequencies


def encode_direction(d: np.ndarray, spec: DirEncodingSpec) -> np.ndarray:
    """[d, sin(2^i pi d), cos(2^i pi d) for i < n_frequencies], shape (n, dim).

    Directions are expected unit-norm (rotations preserve the norm, so no
    normalization happens here); zero-norm rows are rejected.
    """
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 2 or d.shape[1] != 3:
        raise ValueError(f"directions must be (n, 3), got {d.shape}")
    if np.any(np.sum(d * d, axis=1) == 0.0):
        raise ValueError("zero-norm direction")
    parts = [d]
    for i in range(spec.n_frequencies):
        s = (2.0 ** i) * np.pi * d
        parts.append(np.sin(s))
        parts.append(np.cos(s))
    return np.concatenate(parts, axis=1)


def encode_direction_backward(d: np.ndarray, spec: DirEncodingSpec,
                              d_feat: np.ndarray) -> np.ndarray:
    """Gradient of sum(d_feat * encode_direction(d)) w.r.t. d, shape (n, 3)."""
    d = np.asarray(d, dtype=np.float64)
    if d_feat.shape != (d.shape[0], spec.output_dim):
        raise ValueError(f"d_feat has shape {d_feat.shape}")
    grad = d_feat[:, 0:3].astype(np.float64).copy()
    for i in range(spec.n_frequencies):
        freq = (2.0 ** i) * np.pi
        s = freq * d
        d_sin = d_feat[:, 3 + 6 * i : 6 + 6 * i]
        d_cos = d_feat[:, 6 + 6 * i : 9 + 6 * i]
        grad += freq * (np.cos(s) * d_sin - np.sin(s) * d_cos)
    return grad
