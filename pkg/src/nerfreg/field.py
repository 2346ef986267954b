"""Disentangled radiance field: density head, style-parametrized color head,
histogram features, and the hypernetwork that emits the color head's weights.

The density head maps an encoded position to (sigma, z) where z is an
intermediate code consumed by the color head; the color head maps (z,
direction encoding) to RGB.  Density parameters theta_fd and color parameters
theta_fc are kept in separate vectors so theta_fc can be swapped wholesale:
the hypernetwork h(histogram(image); theta_h) produces the entire theta_fc in
one shot while theta_fd stays untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoding import (DirEncodingSpec, HashGridSpec, encode_direction,
                       encode_direction_backward, encode_position,
                       encode_position_backward, init_hash_table)
from .nn import (EXP_CLAMP, MlpSpec, init_mlp_params, mlp_backward,
                 mlp_forward)
from .params import LayoutEntry, ParamVector, load_params, save_params


@dataclass(frozen=True)
class FieldSpec:
    hashgrid: HashGridSpec
    z_dim: int
    dir_encoding: DirEncodingSpec
    density_mlp: MlpSpec
    color_mlp: MlpSpec

    def __post_init__(self):
        if self.density_mlp.input_dim != self.hashgrid.output_dim:
            raise ValueError("density MLP input dim must equal encoding dim")
        if self.density_mlp.output_dim != 1 + self.z_dim:
            raise ValueError("density MLP must output 1 + z_dim values")
        want = self.z_dim + self.dir_encoding.output_dim
        if self.color_mlp.input_dim != want:
            raise ValueError(f"color MLP input dim must be {want}")
        if self.color_mlp.output_dim != 3:
            raise ValueError("color MLP must output RGB")
        if self.color_mlp.output_activation != "sigmoid":
            raise ValueError("color MLP output must be sigmoid-bounded")

    @classmethod
    def default(cls, hidden: int = 64) -> "FieldSpec":
        grid = HashGridSpec()
        direnc = DirEncodingSpec(n_frequencies=2)
        z_dim = 15
        return cls(
            hashgrid=grid,
            z_dim=z_dim,
            dir_encoding=direnc,
            density_mlp=MlpSpec(grid.output_dim, (hidden,), 1 + z_dim, "none"),
            color_mlp=MlpSpec(z_dim + direnc.output_dim, (hidden,), 3, "sigmoid"),
        )

    def theta_fd_entries(self):
        grid = self.hashgrid
        return ([("table", (grid.table_rows, grid.features_per_level))]
                + self.density_mlp.param_entries("density."))

    def theta_fc_entries(self):
        return self.color_mlp.param_entries()


@dataclass
class FieldParams:
    """theta_fd: hash table + density MLP; theta_fc: color MLP only."""

    theta_fd: ParamVector
    theta_fc: ParamVector

    def __post_init__(self):
        if len(self.theta_fc) == 0:
            raise ValueError("empty theta_fc")

    @classmethod
    def init(cls, spec: FieldSpec, rng: np.random.Generator,
             dtype=np.float32) -> "FieldParams":
        theta_fd = ParamVector.zeros(spec.theta_fd_entries(), dtype=dtype)
        theta_fd.view("table")[:] = init_hash_table(spec.hashgrid, rng, dtype)
        dm = init_mlp_params(spec.density_mlp, rng, dtype, prefix="density.")
        theta_fd.subvector("density.").values[:] = dm.values
        theta_fc = init_mlp_params(spec.color_mlp, rng, dtype)
        if len(theta_fc) != spec.color_mlp.param_count:
            raise ValueError("theta_fc layout does not match color MLP")
        return cls(theta_fd, theta_fc)


# -- density head -------------------------------------------------------------


@dataclass
class DensityEval:
    """Forward state of the density head, kept for the backward pass."""

    sigma: np.ndarray
    z: np.ndarray
    x_clamped: np.ndarray
    inside: np.ndarray          # 1.0 where the raw position was in [0,1]
    mlp_cache: object
    raw0: np.ndarray


def eval_density(x: np.ndarray, theta_fd: ParamVector, spec: FieldSpec,
                 want_cache: bool = False):
    """(sigma, z) per point.  sigma = exp_clamped(raw_0); z = raw_1..z_dim.

    Positions are clamped componentwise to the unit cube before encoding.
    theta_fc never enters here; density and the z code depend on theta_fd
    alone.
    """
    x = np.asarray(x, dtype=np.float64)
    xc = np.clip(x, 0.0, 1.0)
    feats = encode_position(xc, theta_fd.view("table"), spec.hashgrid)
    raw, cache = mlp_forward(spec.density_mlp, theta_fd, feats,
                             prefix="density.", want_cache=True)
    raw0 = raw[:, 0]
    sigma = np.exp(np.clip(raw0, -EXP_CLAMP, EXP_CLAMP))
    z = raw[:, 1:]
    if not want_cache:
        return sigma, z
    inside = ((x >= 0.0) & (x <= 1.0)).astype(np.float64)
    return DensityEval(sigma, z, xc, inside, cache, raw0)


def density_backward(ev: DensityEval, theta_fd: ParamVector, spec: FieldSpec,
                     d_sigma: np.ndarray, d_z: np.ndarray,
                     want_params: bool = True, want_x: bool = True):
    """Chain (d_sigma, d_z) back to (d_theta_fd, d_x).

    d_x is zeroed on components that were clamped at the cube boundary; the
    clamp is flat there.  Either output can be skipped: pose refinement only
    needs d_x, appearance training needs neither.
    """
    d_raw = np.empty((ev.sigma.shape[0], 1 + spec.z_dim))
    d_raw[:, 0] = d_sigma * ev.sigma * (np.abs(ev.raw0) < EXP_CLAMP)
    d_raw[:, 1:] = d_z
    d_mlp, d_feat = mlp_backward(spec.density_mlp, theta_fd, ev.mlp_cache,
                                 d_raw, prefix="density.",
                                 want_param_grads=want_params)
    d_table, d_x = encode_position_backward(
        ev.x_clamped, theta_fd.view("table"), spec.hashgrid, d_feat,
        want_table=want_params, want_x=want_x)
    d_theta_fd = None
    if want_params:
        d_theta_fd = ParamVector.zeros(spec.theta_fd_entries(),
                                       dtype=theta_fd.dtype)
        d_theta_fd.view("table")[:] = d_table
        d_theta_fd.subvector("density.").values[:] = d_mlp.values
    if want_x:
        d_x = d_x * ev.inside
    return d_theta_fd, (d_x if want_x else None)


# -- color head ---------------------------------------------------------------


@dataclass
class ColorEval:
    rgb: np.ndarray
    dirs: np.ndarray
    mlp_cache: object


def eval_color(z: np.ndarray, dirs: np.ndarray, theta_fc: ParamVector,
               spec: FieldSpec, want_cache: bool = False):
    """Sigmoid-bounded RGB per point from (z, encoded view direction)."""
    if len(theta_fc) != spec.color_mlp.param_count:
        raise ValueError(
            f"theta_fc has {len(theta_fc)} values, color MLP needs "
            f"{spec.color_mlp.param_count} (hypernetwork wiring mismatch)")
    denc = encode_direction(dirs, spec.dir_encoding)
    cin = np.concatenate([np.asarray(z, dtype=np.float64), denc], axis=1)
    rgb, cache = mlp_forward(spec.color_mlp, theta_fc,
                             cin.astype(theta_fc.dtype), want_cache=True)
    if not want_cache:
        return rgb
    return rgb, ColorEval(rgb, np.asarray(dirs, dtype=np.float64), cache)


def color_backward(ev: ColorEval, theta_fc: ParamVector, spec: FieldSpec,
                   d_rgb: np.ndarray, want_params: bool = True):
    """Chain d_rgb back to (d_theta_fc, d_z, d_dirs)."""
    d_fc, d_cin = mlp_backward(spec.color_mlp, theta_fc, ev.mlp_cache, d_rgb,
                               want_param_grads=want_params)
    d_z = d_cin[:, : spec.z_dim]
    d_denc = d_cin[:, spec.z_dim :]
    d_dirs = encode_direction_backward(ev.dirs, spec.dir_encoding, d_denc)
    return d_fc, d_z, d_dirs


# -- histogram conditioning ----------------------------------------------------


@dataclass(frozen=True)
class HistogramFeature:
    bins: np.ndarray            # 3*B, channel-major
    bins_per_channel: int


def histogram_features(image: np.ndarray, bins_per_channel: int = 16) -> HistogramFeature:
    """Per-channel normalized histogram, concatenated (R then G then B).

    Bin k counts values in [k/B, (k+1)/B); the last bin is closed so value
    1.0 lands in bin B-1.  Invariant under pixel permutation by construction.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] * img.shape[1] == 0:
        raise ValueError(f"expected a nonempty (h, w, 3) image, got {img.shape}")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("image channels must lie in [0, 1]")
    b = int(bins_per_channel)
    n_pix = img.shape[0] * img.shape[1]
    idx = np.minimum((img * b).astype(np.int64), b - 1)
    out = np.empty(3 * b)
    for c in range(3):
        out[c * b : (c + 1) * b] = np.bincount(idx[:, :, c].ravel(),
                                               minlength=b) / n_pix
    return HistogramFeature(out, b)


# -- hypernetwork ---------------------------------------------------------------


@dataclass(frozen=True)
class HypernetSpec:
    """Trunk MLP plus one linear head per named theta_fc entry."""

    bins_per_channel: int
    trunk: MlpSpec
    head_entries: tuple[LayoutEntry, ...]

    def __post_init__(self):
        if self.trunk.input_dim != self.input_dim:
            raise ValueError("trunk input dim must equal 3 * bins_per_channel")

    @property
    def input_dim(self) -> int:
        return 3 * self.bins_per_channel

    @property
    def theta_fc_length(self) -> int:
        return sum(e.size for e in self.head_entries)

    @classmethod
    def for_field(cls, field_spec: FieldSpec, bins_per_channel: int = 16,
                  trunk_width: int = 128, trunk_out: int = 128) -> "HypernetSpec":
        layout = ParamVector.zeros(field_spec.theta_fc_entries()).layout
        trunk = MlpSpec(3 * bins_per_channel, (trunk_width, trunk_width),
                        trunk_out, "none")
        return cls(bins_per_channel, trunk, layout)

    def param_entries(self):
        entries = self.trunk.param_entries("trunk.")
        for e in self.head_entries:
            entries.append((f"head.{e.name}.W", (self.trunk.output_dim, e.size)))
            entries.append((f"head.{e.name}.b", (e.size,)))
        return entries


HEAD_INIT_SCALE = 0.01  # keeps initial theta_fc near zero -> mid-gray renders


def init_hypernet_params(hspec: HypernetSpec, rng: np.random.Generator,
                         dtype=np.float32) -> ParamVector:
    pv = ParamVector.zeros(hspec.param_entries(), dtype=dtype)
    trunk = init_mlp_params(hspec.trunk, rng, dtype, prefix="trunk.")
    pv.subvector("trunk.").values[:] = trunk.values
    din = hspec.trunk.output_dim
    bound = np.sqrt(6.0 / din) * HEAD_INIT_SCALE
    for e in hspec.head_entries:
        w = rng.uniform(-bound, bound, size=(din, e.size))
        pv.view(f"head.{e.name}.W")[:] = w.astype(dtype)
    return pv


def hypernet_forward(hist: HistogramFeature, theta_h: ParamVector,
                     hspec: HypernetSpec) -> ParamVector:
    """Emit the full theta_fc for one histogram.  Pure and deterministic;
    theta_fd is not an input and cannot be touched."""
    u = _hist_input(hist, hspec)
    t = mlp_forward(hspec.trunk, theta_h, u, prefix="trunk.")
    theta_fc = ParamVector.zeros(
        [(e.name, e.shape) for e in hspec.head_entries], dtype=theta_h.dtype)
    for e in hspec.head_entries:
        w = theta_h.view(f"head.{e.name}.W")
        b = theta_h.view(f"head.{e.name}.b")
        theta_fc.values[e.offset : e.end] = (t[0] @ w + b)
    return theta_fc


def hypernet_backward(hist: HistogramFeature, theta_h: ParamVector,
                      hspec: HypernetSpec, d_theta_fc) -> ParamVector:
    """d(theta_h) for a cotangent on the emitted theta_fc.

    Recomputes the (single-row) trunk forward; the cost is negligible next
    to rendering.
    """
    g_all = d_theta_fc.values if isinstance(d_theta_fc, ParamVector) else d_theta_fc
    g_all = np.asarray(g_all)
    if g_all.shape != (hspec.theta_fc_length,):
        raise ValueError("d_theta_fc length does not match head layout")
    u = _hist_input(hist, hspec)
    t, cache = mlp_forward(hspec.trunk, theta_h, u, prefix="trunk.",
                           want_cache=True)
    d_theta_h = ParamVector.zeros(hspec.param_entries(), dtype=theta_h.dtype)
    d_t = np.zeros((1, hspec.trunk.output_dim))
    for e in hspec.head_entries:
        g = g_all[e.offset : e.end]
        d_theta_h.view(f"head.{e.name}.W")[:] += np.outer(t[0], g)
        d_theta_h.view(f"head.{e.name}.b")[:] += g
        d_t[0] += theta_h.view(f"head.{e.name}.W") @ g
    d_trunk, _ = mlp_backward(hspec.trunk, theta_h, cache, d_t, prefix="trunk.")
    d_theta_h.subvector("trunk.").values[:] += d_trunk.values
    return d_theta_h


def _hist_input(hist: HistogramFeature, hspec: HypernetSpec) -> np.ndarray:
    u = np.asarray(hist.bins, dtype=np.float64).reshape(1, -1)
    if u.shape[1] != hspec.input_dim:
        raise ValueError(
            f"histogram has {u.shape[1]} bins, hypernetwork expects "
            f"{hspec.input_dim}")
    return u


# -- checkpoint io --------------------------------------------------------------
#
# One file: a plain-text spec block (every scalar needed to rebuild FieldSpec
# and HypernetSpec), then the theta_fd / theta_fc / theta_h parameter blobs
# back to back.


@dataclass
class FieldCheckpoint:
    spec: FieldSpec
    params: FieldParams
    hspec: HypernetSpec | None = None
    theta_h: ParamVector | None = None


def save_checkpoint(ckpt: FieldCheckpoint, path) -> None:
    spec = ckpt.spec
    grid = spec.hashgrid
    lines = [
        "FIELDCKPT1",
        f"levels {grid.levels}",
        f"features_per_level {grid.features_per_level}",
        f"base_resolution {grid.base_resolution}",
        f"growth_factor {grid.growth_factor!r}",
        f"table_size {grid.table_size}",
        f"z_dim {spec.z_dim}",
        f"n_frequencies {spec.dir_encoding.n_frequencies}",
        f"density_hidden {','.join(str(d) for d in spec.density_mlp.hidden_dims)}",
        f"color_hidden {','.join(str(d) for d in spec.color_mlp.hidden_dims)}",
    ]
    if ckpt.theta_h is not None:
        h = ckpt.hspec
        lines += [
            f"bins_per_channel {h.bins_per_channel}",
            f"trunk_hidden {','.join(str(d) for d in h.trunk.hidden_dims)}",
            f"trunk_out {h.trunk.output_dim}",
        ]
    lines.append("END")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        save_params(ckpt.params.theta_fd, fh)
        save_params(ckpt.params.theta_fc, fh)
        if ckpt.theta_h is not None:
            save_params(ckpt.theta_h, fh)


def load_checkpoint(path) -> FieldCheckpoint:
    with open(path, "rb") as fh:
        kv = {}
        first = fh.readline().decode("ascii").strip()
        if first != "FIELDCKPT1":
            raise ValueError(f"{path}: not a field checkpoint")
        while True:
            line = fh.readline().decode("ascii").strip()
            if line == "END":
                break
            if not line:
                raise ValueError(f"{path}: truncated checkpoint header")
            key, val = line.split(None, 1)
            kv[key] = val
        grid = HashGridSpec(
            levels=int(kv["levels"]),
            features_per_level=int(kv["features_per_level"]),
            base_resolution=int(kv["base_resolution"]),
            growth_factor=float(kv["growth_factor"]),
            table_size=int(kv["table_size"]),
        )
        z_dim = int(kv["z_dim"])
        direnc = DirEncodingSpec(int(kv["n_frequencies"]))
        density_hidden = tuple(int(d) for d in kv["density_hidden"].split(","))
        color_hidden = tuple(int(d) for d in kv["color_hidden"].split(","))
        spec = FieldSpec(
            hashgrid=grid,
            z_dim=z_dim,
            dir_encoding=direnc,
            density_mlp=MlpSpec(grid.output_dim, density_hidden, 1 + z_dim, "none"),
            color_mlp=MlpSpec(z_dim + direnc.output_dim, color_hidden, 3, "sigmoid"),
        )
        theta_fd = load_params(fh)
        theta_fc = load_params(fh)
        hspec = None
        theta_h = None
        if "bins_per_channel" in kv:
            b = int(kv["bins_per_channel"])
            trunk_hidden = tuple(int(d) for d in kv["trunk_hidden"].split(","))
            trunk = MlpSpec(3 * b, trunk_hidden, int(kv["trunk_out"]), "none")
            hspec = HypernetSpec(b, trunk, theta_fc.layout)
            theta_h = load_params(fh)
    return FieldCheckpoint(spec, FieldParams(theta_fd, theta_fc), hspec, theta_h)
