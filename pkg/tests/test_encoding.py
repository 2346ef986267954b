"""Hash-grid and direction encodings vs independent reference implementations."""

import numpy as np
import pytest

from conftest import central_fd, rel_error
from nerfreg.encoding import (HASH_PRIMES, DirEncodingSpec, HashGridSpec,
                              encode_direction, encode_direction_backward,
                              encode_position, encode_position_backward,
                              hash_index, init_hash_table)

SMALL = HashGridSpec(levels=3, features_per_level=2, base_resolution=4,
                     growth_factor=1.5, table_size=512)


def reference_encode(x, table, spec):
    """Slow per-point trilinear interpolation, sharing only hash_index."""
    F = spec.features_per_level
    out = np.zeros((x.shape[0], spec.output_dim))
    for i, p in enumerate(np.clip(x, 0.0, 1.0)):
        for l in range(spec.levels):
            R = spec.resolution(l)
            s = p * R
            c = np.minimum(s.astype(np.int64), R - 1)
            f = s - c
            for dz in (0, 1):
                for dy in (0, 1):
                    for dx in (0, 1):
                        w = ((f[0] if dx else 1 - f[0])
                             * (f[1] if dy else 1 - f[1])
                             * (f[2] if dz else 1 - f[2]))
                        row = l * spec.table_size + hash_index(
                            spec, l, (c[0] + dx, c[1] + dy, c[2] + dz))
                        out[i, l * F:(l + 1) * F] += w * table[row]
    return out


def interior_points(spec, n, seed):
    """Points at least 1e-3 cells away from every level's cell faces."""
    rng = np.random.default_rng(seed)
    pts = []
    while len(pts) < n:
        p = rng.uniform(0.05, 0.95, 3)
        scaled = p[None, :] * spec.resolutions()[:, None]
        if np.all(np.abs(scaled - np.round(scaled)) > 1e-3):
            pts.append(p)
    return np.array(pts)


def test_spec_geometry():
    spec = HashGridSpec()
    assert spec.resolutions().tolist() == [16, 24, 36, 54, 81, 121, 182, 273]
    assert spec.output_dim == 16
    assert spec.table_rows == 8 * 2 ** 14
    # (16+1)^3 and (24+1)^3 fit in 2^14 entries, (36+1)^3 does not
    assert spec.is_dense(0) and spec.is_dense(1) and not spec.is_dense(2)


def test_spec_validation():
    with pytest.raises(ValueError):
        HashGridSpec(growth_factor=1.0)
    with pytest.raises(ValueError):
        HashGridSpec(table_size=100)
    with pytest.raises(ValueError):
        HashGridSpec(levels=0)


def test_hash_index_dense_is_row_major():
    spec = HashGridSpec()
    side = spec.resolution(0) + 1
    assert hash_index(spec, 0, (0, 0, 0)) == 0
    assert hash_index(spec, 0, (1, 0, 0)) == 1
    assert hash_index(spec, 0, (0, 1, 0)) == side
    assert hash_index(spec, 0, (0, 0, 1)) == side * side
    assert hash_index(spec, 0, (3, 2, 1)) == 3 + side * (2 + side * 1)


def test_hash_index_matches_literal_formula():
    spec = HashGridSpec()
    rng = np.random.default_rng(0)
    for _ in range(200):
        x, y, z = (int(v) for v in rng.integers(0, 300, 3))
        expected = ((x * HASH_PRIMES[0]) ^ (y * HASH_PRIMES[1])
                    ^ (z * HASH_PRIMES[2])) % spec.table_size
        assert hash_index(spec, 4, (x, y, z)) == expected


def test_hash_index_rejects_bad_level():
    with pytest.raises(ValueError):
        hash_index(HashGridSpec(), 8, (0, 0, 0))


def test_init_table_shape_and_range():
    spec = HashGridSpec()
    table = init_hash_table(spec, np.random.default_rng(0))
    assert table.shape == (spec.table_rows, 2)
    assert table.dtype == np.float32
    assert np.all(np.abs(table) <= 1e-4)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_forward_matches_reference(seed):
    rng = np.random.default_rng(seed)
    table = rng.normal(size=(SMALL.table_rows, 2))
    x = rng.uniform(0.0, 1.0, (16, 3))
    got = encode_position(x, table, SMALL)
    np.testing.assert_allclose(got, reference_encode(x, table, SMALL),
                               rtol=1e-12, atol=1e-12)


def test_out_of_range_positions_clamp():
    rng = np.random.default_rng(3)
    table = rng.normal(size=(SMALL.table_rows, 2))
    lo = encode_position(np.array([[-0.3, 0.5, 1.4]]), table, SMALL)
    hi = encode_position(np.array([[0.0, 0.5, 1.0]]), table, SMALL)
    np.testing.assert_array_equal(lo, hi)


def test_forward_rejects_nan_and_bad_shape():
    table = np.zeros((SMALL.table_rows, 2))
    with pytest.raises(ValueError):
        encode_position(np.array([[np.nan, 0.5, 0.5]]), table, SMALL)
    with pytest.raises(ValueError):
        encode_position(np.zeros((3, 2)), table, SMALL)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_table_gradient_matches_fd(seed):
    rng = np.random.default_rng(10 + seed)
    table = rng.normal(size=(SMALL.table_rows, 2))
    x = interior_points(SMALL, 4, seed)
    cot = rng.normal(size=(4, SMALL.output_dim))
    d_table, _ = encode_position_backward(x, table, SMALL, cot, want_x=False)

    def f(tv):
        return float(np.sum(encode_position(x, tv.reshape(table.shape), SMALL) * cot))

    rows = np.unique(np.nonzero(d_table)[0])  # FD only over touched rows
    fd = np.zeros_like(d_table)
    flat = table.copy().ravel()
    for r in rows:
        for c in range(2):
            k = r * 2 + c
            eps = 1e-6
            flat[k] += eps
            up = f(flat)
            flat[k] -= 2 * eps
            dn = f(flat)
            flat[k] += eps
            fd[r, c] = (up - dn) / (2 * eps)
    assert rel_error(d_table, fd) < 1e-3


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_position_gradient_matches_fd_at_interior_points(seed):
    rng = np.random.default_rng(20 + seed)
    table = rng.normal(size=(SMALL.table_rows, 2))
    x = interior_points(SMALL, 6, 30 + seed)
    cot = rng.normal(size=(6, SMALL.output_dim))
    _, d_x = encode_position_backward(x, table, SMALL, cot, want_table=False)

    def f(xv):
        return float(np.sum(encode_position(xv.reshape(-1, 3), table, SMALL) * cot))

    fd = central_fd(f, x.copy().ravel(), eps=1e-7).reshape(-1, 3)
    assert rel_error(d_x, fd) < 1e-3


def test_backward_is_deterministic():
    rng = np.random.default_rng(7)
    table = rng.normal(size=(SMALL.table_rows, 2))
    x = rng.uniform(0.1, 0.9, (64, 3))
    cot = rng.normal(size=(64, SMALL.output_dim))
    a_t, a_x = encode_position_backward(x, table, SMALL, cot)
    b_t, b_x = encode_position_backward(x, table, SMALL, cot)
    np.testing.assert_array_equal(a_t, b_t)
    np.testing.assert_array_equal(a_x, b_x)


def test_backward_rejects_bad_cotangent_shape():
    table = np.zeros((SMALL.table_rows, 2))
    with pytest.raises(ValueError):
        encode_position_backward(np.zeros((2, 3)), table, SMALL,
                                 np.zeros((2, 3)))


# -- direction encoding -------------------------------------------------------


def test_direction_encoding_values():
    spec = DirEncodingSpec(n_frequencies=2)
    assert spec.output_dim == 15
    d = np.array([[0.0, 0.6, -0.8]])
    out = encode_direction(d, spec)
    expected = np.concatenate([
        d,
        np.sin(np.pi * d), np.cos(np.pi * d),
        np.sin(2 * np.pi * d), np.cos(2 * np.pi * d),
    ], axis=1)
    np.testing.assert_allclose(out, expected, rtol=1e-12)


def test_direction_encoding_zero_frequencies_is_identity():
    d = np.array([[1.0, 0.0, 0.0]])
    np.testing.assert_array_equal(
        encode_direction(d, DirEncodingSpec(n_frequencies=0)), d)


def test_direction_encoding_rejects_zero_norm():
    with pytest.raises(ValueError):
        encode_direction(np.zeros((1, 3)), DirEncodingSpec())


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_direction_gradient_matches_fd(seed):
    spec = DirEncodingSpec(n_frequencies=2)
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(5, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    cot = rng.normal(size=(5, spec.output_dim))
    grad = encode_direction_backward(d, spec, cot)

    def f(dv):
        return float(np.sum(encode_direction(dv.reshape(-1, 3), spec) * cot))

    fd = central_fd(f, d.copy().ravel(), eps=1e-7).reshape(-1, 3)
    assert rel_error(grad, fd) < 1e-4
