"""Small fully-connected networks with hand-written backprop.

Forward: y = act(x @ W + b) per layer, relu on hidden layers, configurable
output activation.  Backward consumes the cache produced by the forward pass
and returns gradients both for the parameters (as a ParamVector matching the
input layout) and for the network input.  No autodiff framework is involved;
the matmuls are the standard transposed-weight identities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ParamVector

# Output activations.  exp_clamped means exp(clip(x, -15, 15)), which keeps
# density positive without overflowing float32.
OUTPUT_ACTIVATIONS = ("none", "sigmoid", "exp_clamped")
EXP_CLAMP = 15.0


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of one MLP: dims only, no values."""

    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int
    output_activation: str = "none"

    def __post_init__(self):
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(int(d) <= 0 for d in dims):
            raise ValueError(f"all layer dims must be positive, got {dims}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")

    @property
    def layer_dims(self) -> tuple[tuple[int, int], ...]:
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        return tuple(zip(dims[:-1], dims[1:]))

    @property
    def n_layers(self) -> int:
        return len(self.hidden_dims) + 1

    def param_entries(self, prefix: str = "") -> list[tuple[str, tuple[int, ...]]]:
        """(name, shape) pairs in layer order: W then b per layer."""
        entries = []
        for i, (din, dout) in enumerate(self.layer_dims):
            entries.append((f"{prefix}layer{i}.W", (din, dout)))
            entries.append((f"{prefix}layer{i}.b", (dout,)))
        return entries

    @property
    def param_count(self) -> int:
        return sum(int(np.prod(s)) for _, s in self.param_entries())


def init_mlp_params(spec: MlpSpec, rng: np.random.Generator,
                    dtype=np.float32, prefix: str = "") -> ParamVector:
    """He-uniform weights (matches the relu hidden activations), zero biases."""
    pv = ParamVector.zeros(spec.param_entries(prefix), dtype=dtype)
    for i, (din, dout) in enumerate(spec.layer_dims):
        bound = np.sqrt(6.0 / din)
        w = rng.uniform(-bound, bound, size=(din, dout))
        pv.view(f"{prefix}layer{i}.W")[:] = w.astype(dtype)
    return pv


@dataclass
class ForwardCache:
    """Everything the backward pass needs: input, pre-activations, and the
    post-activation output of every layer."""

    spec: MlpSpec
    x: np.ndarray
    pre: list = field(default_factory=list)    # pre-activation per layer
    post: list = field(default_factory=list)   # post-activation per layer


def _apply_output_activation(kind, pre):
    if kind == "none":
        return pre
    if kind == "sigmoid":
        # stable form: never exponentiates a large positive number
        out = np.empty_like(pre)
        pos = pre >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-pre[pos]))
        ez = np.exp(pre[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if kind == "exp_clamped":
        return np.exp(np.clip(pre, -EXP_CLAMP, EXP_CLAMP))
    raise ValueError(kind)


def mlp_forward(spec: MlpSpec, params: ParamVector, x: np.ndarray,
                prefix: str = "", want_cache: bool = False):
    """Evaluate the network on a batch.

    x has shape (n, input_dim).  Returns (n, output_dim), plus a ForwardCache
    when want_cache is set.
    """
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ValueError(
            f"mlp input has shape {x.shape}, expected (n, {spec.input_dim})"
        )
    cache = ForwardCache(spec, x) if want_cache else None
    h = x
    last = spec.n_layers - 1
    for i in range(spec.n_layers):
        w = params.view(f"{prefix}layer{i}.W")
        b = params.view(f"{prefix}layer{i}.b")
        pre = h @ w + b
        if i < last:
            post = np.maximum(pre, 0.0)
        else:
            post = _apply_output_activation(spec.output_activation, pre)
        if want_cache:
            cache.pre.append(pre)
            cache.post.append(post)
        h = post
    return (h, cache) if want_cache else h


def mlp_backward(spec: MlpSpec, params: ParamVector, cache: ForwardCache,
                 d_out: np.ndarray, prefix: str = "",
                 want_param_grads: bool = True):
    """Backprop d_out (n, output_dim) through the cached forward pass.

    Returns (d_params, d_input).  d_params is None when want_param_grads is
    false (used during pose refinement, where only d_input matters).
    """
    if cache.spec != spec:
        raise ValueError("forward cache was built for a different architecture")
    d_out = np.asarray(d_out)
    if d_out.shape != cache.post[-1].shape:
        raise ValueError(
            f"d_out has shape {d_out.shape}, expected {cache.post[-1].shape}"
        )
    d_params = (
        ParamVector.zeros(spec.param_entries(prefix), dtype=params.dtype)
        if want_param_grads
        else None
    )
    last = spec.n_layers - 1
    d = d_out
    # output activation
    if spec.output_activation == "sigmoid":
        y = cache.post[last]
        d = d * (y * (1.0 - y))
    elif spec.output_activation == "exp_clamped":
        y = cache.post[last]
        inside = np.abs(cache.pre[last]) < EXP_CLAMP
        d = d * y * inside
    for i in range(last, -1, -1):
        inp = cache.x if i == 0 else cache.post[i - 1]
        if want_param_grads:
            d_params.view(f"{prefix}layer{i}.W")[:] += inp.T @ d
            d_params.view(f"{prefix}layer{i}.b")[:] += d.sum(axis=0)
        d = d @ params.view(f"{prefix}layer{i}.W").T
        if i > 0:
            d = d * (cache.pre[i - 1] > 0)
    return d_params, d


# -- optimizer ---------------------------------------------------------------


@dataclass
class AdamState:
    """Adam with bias correction.  One state per parameter group."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    step: int = 0


def adam_step(state: AdamState, values: np.ndarray, grads: np.ndarray) -> None:
    """One in-place Adam update of values given grads of the same shape."""
    if values.shape != grads.shape:
        raise ValueError("values and grads shapes differ")
    if not np.all(np.isfinite(grads)):
        raise FloatingPointError("non-finite gradient in adam_step")
    if state.m is None:
        state.m = np.zeros_like(values, dtype=np.float64)
        state.v = np.zeros_like(values, dtype=np.float64)
    state.step += 1
    g = grads.astype(np.float64, copy=False)
    state.m += (1.0 - state.beta1) * (g - state.m)
    state.v += (1.0 - state.beta2) * (g * g - state.v)
    mhat = state.m / (1.0 - state.beta1 ** state.step)
    vhat = state.v / (1.0 - state.beta2 ** state.step)
    values -= (state.lr * mhat / (np.sqrt(vhat) + state.eps)).astype(values.dtype)
