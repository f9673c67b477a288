"""Survival model variants and curve prediction.

Three parameterizations of the hazard dynamics are supported:

- ``full``: one network over (cumhaz, t, features); the hazard may depend on
  its own integral, so no structural assumption is imposed.
- ``ph``: a baseline-in-time network times a risk-in-features network, each
  made positive by its softplus output; hazard ratios between individuals are
  constant over time (proportional hazards).
- ``cox``: the ``ph`` form with the risk factor restricted to
  exp(features . beta).

A model carries its training-set feature standardization, so every public
entry point takes raw features. Models are immutable; updating parameters
returns a new instance (``with_theta``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import nnet
from .errors import ConfigError, ShapeError
from .odeint import OdeConfig, solve_cumhaz_grid

__all__ = [
    "ModelSpec",
    "SurvivalModel",
    "SurvivalCurve",
    "build_model",
    "predict_survival",
    "predict_hazard",
    "predict_survival_many",
    "predict_curves_many",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]

VARIANTS = ("full", "ph", "cox")
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    """Which variant to build and the hidden layer widths of its network(s)."""

    variant: str = "full"
    hidden_dims: tuple = (32, 32)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        object.__setattr__(self, "hidden_dims", tuple(int(d) for d in self.hidden_dims))


@dataclass(frozen=True)
class SurvivalCurve:
    """A prediction grid and the curve values on it."""

    times: np.ndarray
    values: np.ndarray


class SurvivalModel:
    """Hazard dynamics plus feature standardization for one fitted model.

    ``hazard`` and ``hazard_vjp`` operate on standardized features as
    returned by ``prep``; everything above this class passes raw features and
    calls ``prep`` exactly once per solve.
    """

    __slots__ = ("variant", "net", "baseline_net", "risk_net", "beta",
                 "feature_mean", "feature_scale", "train_config")

    def __init__(self, variant, *, net=None, baseline_net=None, risk_net=None,
                 beta=None, feature_mean=None, feature_scale=None, train_config=None):
        if variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {variant!r}")
        p = self._infer_p(variant, net, baseline_net, risk_net, beta)
        mean = np.zeros(p) if feature_mean is None else np.asarray(feature_mean, dtype=float)
        scale = np.ones(p) if feature_scale is None else np.asarray(feature_scale, dtype=float)
        if mean.shape != (p,) or scale.shape != (p,):
            raise ShapeError(f"standardization stats must have shape ({p},)")
        if np.any(scale <= 0.0):
            raise ConfigError("feature scales must be positive")
        mean = mean.copy()
        scale = scale.copy()
        mean.flags.writeable = False
        scale.flags.writeable = False
        object.__setattr__(self, "variant", variant)
        object.__setattr__(self, "net", net)
        object.__setattr__(self, "baseline_net", baseline_net)
        object.__setattr__(self, "risk_net", risk_net)
        object.__setattr__(self, "beta", None if beta is None else np.asarray(beta, dtype=float))
        object.__setattr__(self, "feature_mean", mean)
        object.__setattr__(self, "feature_scale", scale)
        object.__setattr__(self, "train_config", train_config)

    def __setattr__(self, name, value):
        raise AttributeError("SurvivalModel is immutable; use with_theta")

    @staticmethod
    def _infer_p(variant, net, baseline_net, risk_net, beta):
        if variant == "full":
            if net is None:
                raise ConfigError("full variant needs a dynamics network")
            p = net.arch.input_dim - 2
            if p < 0:
                raise ConfigError("full-variant network must take at least (cumhaz, t)")
            return p
        if baseline_net is None or baseline_net.arch.input_dim != 1:
            raise ConfigError(f"{variant} variant needs a baseline network over time only")
        if variant == "ph":
            if risk_net is None:
                raise ConfigError("ph variant needs a risk network over features")
            return risk_net.arch.input_dim
        if beta is None:
            raise ConfigError("cox variant needs linear coefficients")
        return len(beta)

    @property
    def n_features(self) -> int:
        return self.feature_mean.shape[0]

    @property
    def theta(self) -> np.ndarray:
        """All trainable parameters as one flat vector."""
        if self.variant == "full":
            return self.net.to_flat()
        if self.variant == "ph":
            return np.concatenate([self.baseline_net.to_flat(), self.risk_net.to_flat()])
        return np.concatenate([self.baseline_net.to_flat(), self.beta])

    @property
    def n_params(self) -> int:
        if self.variant == "full":
            return self.net.n_params
        if self.variant == "ph":
            return self.baseline_net.n_params + self.risk_net.n_params
        return self.baseline_net.n_params + self.n_features

    def with_theta(self, flat) -> "SurvivalModel":
        """New model with the same structure and the given flat parameters."""
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_params,):
            raise ShapeError(f"theta must have length {self.n_params}, got {flat.shape}")
        kwargs = dict(feature_mean=self.feature_mean, feature_scale=self.feature_scale,
                      train_config=self.train_config)
        if self.variant == "full":
            return SurvivalModel("full", net=nnet.ParamSet.from_flat(self.net.arch, flat, self.net.seed),
                                 **kwargs)
        nb = self.baseline_net.n_params
        baseline = nnet.ParamSet.from_flat(self.baseline_net.arch, flat[:nb], self.baseline_net.seed)
        if self.variant == "ph":
            risk = nnet.ParamSet.from_flat(self.risk_net.arch, flat[nb:], self.risk_net.seed)
            return SurvivalModel("ph", baseline_net=baseline, risk_net=risk, **kwargs)
        return SurvivalModel("cox", baseline_net=baseline, beta=flat[nb:], **kwargs)

    def prep(self, features) -> np.ndarray:
        """Standardize raw features with the stored training statistics."""
        x = np.asarray(features, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ShapeError(f"features of shape {x.shape} do not match p={self.n_features}")
        return (x - self.feature_mean) / self.feature_scale

    def _net_inputs(self, cumhaz, t, z):
        n = z.shape[0]
        u = np.empty((n, self.n_features + 2))
        u[:, 0] = cumhaz
        u[:, 1] = t
        u[:, 2:] = z
        return u

    def hazard(self, cumhaz, t, z) -> np.ndarray:
        """Instantaneous hazard for a batch; strictly positive.

        ``cumhaz`` is (n,), ``t`` a scalar or (n,) vector, ``z`` standardized
        features (n, p).
        """
        if self.variant == "full":
            return nnet.net_forward_batch(self.net, self._net_inputs(cumhaz, t, z))
        t_col = np.broadcast_to(np.asarray(t, dtype=float), (z.shape[0],))[:, None]
        base = nnet.net_forward_batch(self.baseline_net, t_col)
        if self.variant == "ph":
            return base * nnet.net_forward_batch(self.risk_net, z)
        return base * np.exp(z @ self.beta)

    def hazard_vjp(self, cumhaz, t, z, cotangents):
        """Hazard values plus cotangent-weighted partials.

        Returns (values, dcumhaz, dtheta) where dcumhaz[i] is
        cotangents[i] * d hazard_i / d cumhaz_i and dtheta is the flat sum
        over the batch of cotangents[i] * d hazard_i / d theta.
        """
        cot = np.asarray(cotangents, dtype=float)
        if self.variant == "full":
            values, input_grads, dtheta = nnet.net_value_and_vjp(
                self.net, self._net_inputs(cumhaz, t, z), cot
            )
            return values, input_grads[:, 0], dtheta
        t_col = np.broadcast_to(np.asarray(t, dtype=float), (z.shape[0],))[:, None]
        if self.variant == "ph":
            risk = nnet.net_forward_batch(self.risk_net, z)
            base, _, dtheta_base = nnet.net_value_and_vjp(self.baseline_net, t_col, cot * risk)
            _, _, dtheta_risk = nnet.net_value_and_vjp(self.risk_net, z, cot * base)
            values = base * risk
            return values, np.zeros_like(values), np.concatenate([dtheta_base, dtheta_risk])
        risk = np.exp(z @ self.beta)
        base, _, dtheta_base = nnet.net_value_and_vjp(self.baseline_net, t_col, cot * risk)
        values = base * risk
        dbeta = z.T @ (cot * values)
        return values, np.zeros_like(values), np.concatenate([dtheta_base, dbeta])


def build_model(spec: ModelSpec, n_features: int, seed: int,
                feature_mean=None, feature_scale=None) -> SurvivalModel:
    """Construct an untrained model of the requested variant.

    The ``full`` network sees (cumhaz, t, features); ``ph`` and ``cox``
    baselines see time only, so those variants ignore the cumulative hazard
    by construction. The ``ph`` risk network uses ``seed + 1`` so the two
    subnetworks start from independent draws; ``cox`` coefficients start at
    zero, making the initial hazard independent of features.
    """
    if n_features < 1:
        raise ConfigError(f"need at least one feature, got {n_features}")
    kwargs = dict(feature_mean=feature_mean, feature_scale=feature_scale)
    if spec.variant == "full":
        net = nnet.net_init(nnet.Architecture(n_features + 2, spec.hidden_dims), seed)
        return SurvivalModel("full", net=net, **kwargs)
    baseline = nnet.net_init(nnet.Architecture(1, spec.hidden_dims), seed)
    if spec.variant == "ph":
        risk = nnet.net_init(nnet.Architecture(n_features, spec.hidden_dims), seed + 1)
        return SurvivalModel("ph", baseline_net=baseline, risk_net=risk, **kwargs)
    return SurvivalModel("cox", baseline_net=baseline, beta=np.zeros(n_features), **kwargs)


def predict_curves_many(model, features, grid, config: OdeConfig):
    """Survival and hazard matrices for many individuals on one grid.

    Returns (survival, hazard), each (n, len(grid)). The survival values come
    from exp(-cumhaz) on the solved trajectory; the hazard is the dynamics
    function evaluated along the same trajectory, so the two are consistent
    by construction.
    """
    features = np.asarray(features, dtype=float)
    grid = np.asarray(grid, dtype=float)
    cumhaz = solve_cumhaz_grid(model, features, grid, config)
    surv = np.exp(-cumhaz)
    haz = np.empty_like(cumhaz)
    z = model.prep(features)
    for k in range(grid.shape[0]):
        haz[:, k] = model.hazard(cumhaz[:, k], float(grid[k]), z)
    return surv, haz


def predict_survival_many(model, features, grid, config: OdeConfig) -> np.ndarray:
    """Survival probability matrix (n, len(grid)) for raw features (n, p)."""
    cumhaz = solve_cumhaz_grid(model, features, grid, config)
    return np.exp(-cumhaz)


def predict_survival(model, features, grid, config: OdeConfig) -> SurvivalCurve:
    """Predicted survival curve of one individual on a nondecreasing grid."""
    x = np.asarray(features, dtype=float)
    values = predict_survival_many(model, x[None, :], grid, config)[0]
    return SurvivalCurve(times=np.asarray(grid, dtype=float), values=values)


def predict_hazard(model, features, grid, config: OdeConfig) -> SurvivalCurve:
    """Predicted hazard curve of one individual along the solved trajectory."""
    x = np.asarray(features, dtype=float)
    _, haz = predict_curves_many(model, x[None, :], grid, config)
    return SurvivalCurve(times=np.asarray(grid, dtype=float), values=haz[0])


def model_to_dict(model: SurvivalModel) -> dict:
    payload = {
        "version": MODEL_FORMAT_VERSION,
        "variant": model.variant,
        "feature_mean": [float(v) for v in model.feature_mean],
        "feature_scale": [float(v) for v in model.feature_scale],
        "train_config": model.train_config,
        "beta": None if model.beta is None else [float(v) for v in model.beta],
        "nets": {},
    }
    if model.variant == "full":
        payload["nets"]["full"] = nnet.params_to_dict(model.net)
    else:
        payload["nets"]["baseline"] = nnet.params_to_dict(model.baseline_net)
        if model.variant == "ph":
            payload["nets"]["risk"] = nnet.params_to_dict(model.risk_net)
    return payload


def model_from_dict(payload: dict) -> SurvivalModel:
    if payload.get("version") != MODEL_FORMAT_VERSION:
        raise ConfigError(f"unsupported model format version: {payload.get('version')!r}")
    variant = payload["variant"]
    kwargs = dict(
        feature_mean=payload["feature_mean"],
        feature_scale=payload["feature_scale"],
        train_config=payload.get("train_config"),
    )
    nets = payload["nets"]
    if variant == "full":
        return SurvivalModel("full", net=nnet.params_from_dict(nets["full"]), **kwargs)
    baseline = nnet.params_from_dict(nets["baseline"])
    if variant == "ph":
        return SurvivalModel("ph", baseline_net=baseline,
                             risk_net=nnet.params_from_dict(nets["risk"]), **kwargs)
    return SurvivalModel("cox", baseline_net=baseline, beta=payload["beta"], **kwargs)


def save_model(model: SurvivalModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> SurvivalModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
