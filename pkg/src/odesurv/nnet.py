"""Hazard dynamics network: a small MLP with hand-rolled reverse mode.

The cumulative-hazard ODE is driven by a feed-forward network with
rectified-linear hidden layers and a single output unit squashed through
softplus, which keeps the instantaneous hazard strictly positive. The
backward (adjoint) pass needs exact vector-Jacobian products with respect to
both the network input and the flattened parameter vector, so the forward and
reverse passes are written directly against numpy arrays rather than through
an autodiff framework.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ShapeError

__all__ = [
    "Architecture",
    "ParamSet",
    "softplus_eval",
    "net_init",
    "net_forward",
    "net_forward_batch",
    "net_vjp",
    "net_value_and_vjp",
    "params_to_dict",
    "params_from_dict",
]

PARAMS_FORMAT_VERSION = 1


def softplus_eval(z: float) -> float:
    """Numerically safe softplus log(1 + e^z) of a single value.

    Uses the max(z, 0) + log1p(e^-|z|) branch so arguments up to +-700 never
    overflow. Raises ValueError for non-finite input.
    """
    z = float(z)
    if not np.isfinite(z):
        raise ValueError(f"softplus_eval requires finite input, got {z!r}")
    return float(np.logaddexp(0.0, z))


def _softplus(z):
    # log(1 + e^z) without overflow; array-valued counterpart of softplus_eval
    return np.logaddexp(0.0, z)


@dataclass(frozen=True)
class Architecture:
    """Layer sizes of a dynamics network.

    ``input_dim`` counts every scalar fed to the net (cumulative hazard,
    time, features, depending on the model variant). Hidden layers use the
    rectifier; the single output unit is passed through softplus.
    """

    input_dim: int
    hidden_dims: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(d) for d in self.hidden_dims))
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if any(d < 1 for d in self.hidden_dims):
            raise ValueError(f"hidden dims must all be >= 1, got {self.hidden_dims}")

    @property
    def layer_dims(self) -> tuple:
        """Sizes of every layer boundary: (input, *hidden, 1)."""
        return (int(self.input_dim),) + self.hidden_dims + (1,)

    @property
    def n_params(self) -> int:
        dims = self.layer_dims
        return sum(dims[i + 1] * dims[i] + dims[i + 1] for i in range(len(dims) - 1))


class ParamSet:
    """Immutable container for one network's weights and biases.

    ``layers`` holds (weight, bias) pairs with weight of shape (fan_out,
    fan_in). The flat view concatenates, per layer, the row-major weight
    matrix followed by the bias vector; flatten/unflatten round-trips exactly.
    """

    __slots__ = ("arch", "layers", "seed")

    def __init__(self, arch: Architecture, layers, seed: int):
        dims = arch.layer_dims
        if len(layers) != len(dims) - 1:
            raise ShapeError(f"expected {len(dims) - 1} layers, got {len(layers)}")
        frozen = []
        for i, (w, b) in enumerate(layers):
            w = np.array(w, dtype=float)
            b = np.array(b, dtype=float)
            if w.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
                raise ShapeError(
                    f"layer {i} shapes {w.shape}/{b.shape} do not match dims {dims}"
                )
            w.flags.writeable = False
            b.flags.writeable = False
            frozen.append((w, b))
        object.__setattr__(self, "arch", arch)
        object.__setattr__(self, "layers", tuple(frozen))
        object.__setattr__(self, "seed", int(seed))

    def __setattr__(self, name, value):
        raise AttributeError("ParamSet is immutable")

    @property
    def n_params(self) -> int:
        return self.arch.n_params

    def to_flat(self) -> np.ndarray:
        """Flatten all parameters into one vector (layer order, weight then bias)."""
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in self.layers])

    @classmethod
    def from_flat(cls, arch: Architecture, flat, seed: int = 0) -> "ParamSet":
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (arch.n_params,):
            raise ShapeError(
                f"flat vector has length {flat.shape}, architecture needs {arch.n_params}"
            )
        dims = arch.layer_dims
        layers = []
        pos = 0
        for i in range(len(dims) - 1):
            fan_out, fan_in = dims[i + 1], dims[i]
            w = flat[pos : pos + fan_out * fan_in].reshape(fan_out, fan_in)
            pos += fan_out * fan_in
            b = flat[pos : pos + fan_out]
            pos += fan_out
            layers.append((w, b))
        return cls(arch, layers, seed)


def net_init(arch: Architecture, seed: int) -> ParamSet:
    """Draw initial parameters: fan-in scaled uniform weights, zero biases.

    Weights are uniform on +-sqrt(6 / fan_in) so early softplus outputs stay
    moderate; the draw order (layer by layer) is fixed, making the result a
    pure function of (arch, seed).
    """
    rng = np.random.default_rng(seed)
    dims = arch.layer_dims
    layers = []
    for i in range(len(dims) - 1):
        fan_out, fan_in = dims[i + 1], dims[i]
        bound = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        b = np.zeros(fan_out)
        layers.append((w, b))
    return ParamSet(arch, layers, seed)


def _forward_cache(params: ParamSet, inputs: np.ndarray):
    """Run the net on a (n, input_dim) batch, keeping per-layer activations.

    Returns (raw, pres, acts) where raw is the (n,) pre-softplus output,
    pres[i] the pre-activation of layer i and acts[i] the input to layer i.
    """
    if inputs.ndim != 2 or inputs.shape[1] != params.arch.input_dim:
        raise ShapeError(
            f"inputs of shape {inputs.shape} do not match input_dim {params.arch.input_dim}"
        )
    act = inputs
    acts = [act]
    pres = []
    last = len(params.layers) - 1
    for i, (w, b) in enumerate(params.layers):
        pre = act @ w.T + b
        pres.append(pre)
        if i < last:
            act = np.maximum(pre, 0.0)  # rectifier; subgradient at 0 taken as 0
            acts.append(act)
    return pres[-1][:, 0], pres, acts


def net_forward_batch(params: ParamSet, inputs: np.ndarray) -> np.ndarray:
    """Evaluate softplus(MLP(inputs)) for a (n, input_dim) batch; returns (n,)."""
    raw, _, _ = _forward_cache(params, np.asarray(inputs, dtype=float))
    return _softplus(raw)


def net_forward(params: ParamSet, inputs) -> float:
    """Evaluate the network on a single input vector; always > 0."""
    x = np.asarray(inputs, dtype=float)
    if x.ndim != 1:
        raise ShapeError(f"expected a 1-D input vector, got shape {x.shape}")
    return float(net_forward_batch(params, x[None, :])[0])


def net_value_and_vjp(params: ParamSet, inputs: np.ndarray, cotangents: np.ndarray):
    """Forward values plus the batch vector-Jacobian product.

    For each row i the cotangent c_i multiplies the Jacobian of the scalar
    output h_i = softplus(raw_i). Returns

    - values: (n,) forward outputs,
    - input_grads: (n, input_dim) with row i equal to c_i * dh_i/dinput_i,
    - param_grad: flat vector sum_i c_i * dh_i/dtheta.
    """
    inputs = np.asarray(inputs, dtype=float)
    cotangents = np.asarray(cotangents, dtype=float)
    raw, pres, acts = _forward_cache(params, inputs)
    if cotangents.shape != raw.shape:
        raise ShapeError(
            f"cotangents shape {cotangents.shape} does not match batch {raw.shape}"
        )
    values = _softplus(raw)
    # dh/draw = sigmoid(raw)
    g = (cotangents * expit(raw))[:, None]
    layer_grads = [None] * len(params.layers)
    for i in range(len(params.layers) - 1, -1, -1):
        w, _ = params.layers[i]
        gw = g.T @ acts[i]
        gb = g.sum(axis=0)
        layer_grads[i] = (gw, gb)
        g = g @ w
        if i > 0:
            g = g * (pres[i - 1] > 0.0)
    param_grad = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in layer_grads])
    return values, g, param_grad


def net_vjp(params: ParamSet, inputs, cotangent: float):
    """Cotangent times the Jacobian of a single forward evaluation.

    Returns (input_grad, param_grad): the exact reverse-mode products
    cotangent * dh/dinput and cotangent * dh/dtheta (flat, layer order).
    """
    x = np.asarray(inputs, dtype=float)
    if x.ndim != 1:
        raise ShapeError(f"expected a 1-D input vector, got shape {x.shape}")
    c = float(cotangent)
    if not np.isfinite(c):
        raise ValueError(f"cotangent must be finite, got {c!r}")
    _, input_grads, param_grad = net_value_and_vjp(params, x[None, :], np.array([c]))
    return input_grads[0], param_grad


def params_to_dict(params: ParamSet) -> dict:
    """Versioned JSON-ready form: architecture dims, flat weights, seed."""
    return {
        "version": PARAMS_FORMAT_VERSION,
        "arch": {"dims": list(params.arch.layer_dims)},
        "weights": [float(v) for v in params.to_flat()],
        "seed": params.seed,
    }


def params_from_dict(payload: dict) -> ParamSet:
    if payload.get("version") != PARAMS_FORMAT_VERSION:
        raise ValueError(f"unsupported parameter format version: {payload.get('version')!r}")
    dims = payload["arch"]["dims"]
    if len(dims) < 2 or dims[-1] != 1:
        raise ValueError(f"invalid architecture dims {dims}")
    arch = Architecture(input_dim=int(dims[0]), hidden_dims=tuple(dims[1:-1]))
    return ParamSet.from_flat(arch, np.asarray(payload["weights"], dtype=float), payload.get("seed", 0))
