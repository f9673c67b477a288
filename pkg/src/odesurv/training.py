"""Mini-batch likelihood training with RMSProp and early stopping.

Every mini-batch costs one forward rescaled solve plus one backward
augmented solve; the optimizer then updates the flat parameter vector.
Validation loss (mean per observation, same solver settings) drives early
stopping, and the returned model carries the parameters from the best
validation epoch.

Hyperparameter search is out of scope; for reference, the search ranges used
when tuning models of this family are typically: learning rate in
[10^-4.5, 10^-1.5], weight decay in [10^-9, 10^-4], momentum in [0.85, 0.99],
1/2/4 hidden layers with 4..128 units, and batch sizes from 32 (small
datasets) up to 1024 (large ones).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .adjoint import loss_grad, mean_loss
from .data import Dataset
from .errors import ConfigError, DivergenceError
from .models import ModelSpec, SurvivalModel, build_model
from .odeint import OdeConfig

__all__ = ["TrainConfig", "OptState", "TrainHistory", "rmsprop_step", "fit"]

# Validation loss must drop by at least this much to count as an improvement.
IMPROVEMENT_TOLERANCE = 1e-6


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    learning_rate: float = 1e-2
    weight_decay: float = 0.0
    momentum: float = 0.9
    rms_decay: float = 0.99
    epsilon: float = 1e-8
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    solver: OdeConfig = field(default_factory=OdeConfig)

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("batch_size, max_epochs and patience must be >= 1")
        if self.learning_rate <= 0.0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0.0:
            raise ConfigError(f"weight_decay must be nonnegative, got {self.weight_decay}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if not 0.0 < self.rms_decay < 1.0:
            raise ConfigError(f"rms_decay must be in (0, 1), got {self.rms_decay}")
        if self.epsilon <= 0.0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")


@dataclass
class OptState:
    """Per-parameter square average and momentum buffer."""

    square_avg: np.ndarray
    momentum_buf: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n_params: int) -> "OptState":
        return cls(np.zeros(n_params), np.zeros(n_params), 0)


@dataclass
class TrainHistory:
    """Per-epoch losses plus where and why training stopped."""

    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = -1
    stop_reason: str = ""

    def to_dict(self) -> dict:
        return {
            "train_loss": [float(v) for v in self.train_loss],
            "val_loss": [float(v) for v in self.val_loss],
            "best_epoch": self.best_epoch,
            "stop_reason": self.stop_reason,
        }


def rmsprop_step(params: np.ndarray, grads: np.ndarray, state: OptState,
                 config: TrainConfig):
    """One RMSProp update with coupled weight decay and momentum.

    g = grad + weight_decay * theta
    v = rms_decay * v + (1 - rms_decay) * g^2
    buf = momentum * buf + g / sqrt(v + epsilon)
    theta = theta - learning_rate * buf

    Inputs are left untouched; returns the updated (params, state).
    """
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if grads.shape != params.shape or state.square_avg.shape != params.shape:
        raise ValueError("parameter, gradient and state shapes must agree")
    if not np.all(np.isfinite(grads)):
        raise DivergenceError("non-finite gradient passed to the optimizer")
    g = grads + config.weight_decay * params
    v = config.rms_decay * state.square_avg + (1.0 - config.rms_decay) * g * g
    buf = config.momentum * state.momentum_buf + g / np.sqrt(v + config.epsilon)
    new_params = params - config.learning_rate * buf
    return new_params, OptState(square_avg=v, momentum_buf=buf, step=state.step + 1)


def fit(spec: ModelSpec, train_set: Dataset, val_set: Dataset, config: TrainConfig):
    """Train a model on raw-feature datasets; returns (model, history).

    Feature standardization statistics are computed from the training set and
    stored inside the model, so both fitting and later prediction consume raw
    features. A fixed seed pins initialization, shuffle order and therefore
    the final parameters bitwise. Training stops once the validation loss has
    not improved for ``patience`` consecutive epochs, on reaching
    ``max_epochs``, or when the loss or gradient turns non-finite (the
    history then says so and the best parameters seen are returned).
    """
    if train_set.n == 0 or val_set.n == 0:
        raise ConfigError("training and validation sets must be nonempty")
    if train_set.p != val_set.p:
        raise ConfigError(f"feature dims differ: train {train_set.p}, val {val_set.p}")

    mean = train_set.features.mean(axis=0)
    sd = train_set.features.std(axis=0)
    scale = np.where(sd > 0.0, sd, 1.0)

    root = np.random.SeedSequence(config.seed)
    init_ss, shuffle_ss = root.spawn(2)
    init_seed = int(init_ss.generate_state(1)[0])
    shuffle_rng = np.random.default_rng(shuffle_ss)

    echo = asdict(config)
    model = build_model(spec, train_set.p, init_seed, feature_mean=mean, feature_scale=scale)
    model = SurvivalModel(**_model_fields(model, train_config=echo))

    theta = model.theta
    opt = OptState.zeros(theta.shape[0])
    history = TrainHistory()
    best_val = np.inf
    best_theta = theta.copy()
    strikes = 0

    for epoch in range(config.max_epochs):
        order = shuffle_rng.permutation(train_set.n)
        epoch_loss = 0.0
        diverged = False
        for start in range(0, train_set.n, config.batch_size):
            batch = train_set.subset(order[start : start + config.batch_size])
            try:
                report = loss_grad(model, batch, config.solver)
            except DivergenceError:
                diverged = True
                break
            if not np.isfinite(report.total_loss) or not np.all(np.isfinite(report.grad)):
                diverged = True
                break
            epoch_loss += report.total_loss
            theta, opt = rmsprop_step(theta, report.grad, opt, config)
            model = model.with_theta(theta)
        if diverged:
            history.stop_reason = "diverged"
            break

        history.train_loss.append(epoch_loss / train_set.n)
        val = mean_loss(model, val_set, config.solver, chunk_size=max(config.batch_size, 64))
        if not np.isfinite(val):
            history.stop_reason = "diverged"
            break
        history.val_loss.append(val)

        if val < best_val - IMPROVEMENT_TOLERANCE:
            best_val = val
            best_theta = theta.copy()
            history.best_epoch = epoch
            strikes = 0
        else:
            strikes += 1
            if strikes >= config.patience:
                history.stop_reason = "early_stop"
                break
    if not history.stop_reason:
        history.stop_reason = "max_epochs"

    return model.with_theta(best_theta), history


def _model_fields(model: SurvivalModel, **overrides) -> dict:
    fields = dict(
        variant=model.variant,
        net=model.net,
        baseline_net=model.baseline_net,
        risk_net=model.risk_net,
        beta=model.beta,
        feature_mean=model.feature_mean,
        feature_scale=model.feature_scale,
        train_config=model.train_config,
    )
    fields.update(overrides)
    return fields
