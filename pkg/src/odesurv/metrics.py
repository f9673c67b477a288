"""Censoring-aware evaluation of survival predictions.

Discrimination and calibration under right-censoring need the censoring
distribution itself: the Kaplan-Meier estimate of the censoring survival
supplies inverse-probability weights for the time-dependent concordance
index and for the Brier / binomial log-likelihood scores. Truncation
horizons are picked by where that estimate falls below a level (1e-8, 0.2
and 0.4 by default), and the integrated scores average 100 grid points on
(0, horizon].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sstats

from .adjoint import mean_loss
from .errors import UndefinedMetricError
from .models import predict_survival_many
from .odeint import OdeConfig

__all__ = [
    "StepFunction",
    "MetricReport",
    "RiskSplit",
    "km_survival",
    "censor_km",
    "tau_for_level",
    "c_index_td",
    "brier_score",
    "binomial_log_likelihood",
    "integrated_metric",
    "nll_metric",
    "logrank_test",
    "risk_split",
    "evaluate",
]

DEFAULT_LEVELS = (1e-8, 0.2, 0.4)
INTEGRATION_POINTS = 100
WEIGHT_FLOOR = 1e-8  # censoring-survival clamp used in every IPCW weight
PROB_CLAMP = 1e-7  # keeps the binomial log-likelihood away from log(0)


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous piecewise-constant function.

    ``values[k]`` holds the function value on [times[k], times[k+1]); before
    the first jump the function equals ``init_value``.
    """

    times: np.ndarray
    values: np.ndarray
    init_value: float = 1.0

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.shape != values.shape or times.ndim != 1:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if np.any(np.diff(times) <= 0.0):
            raise ValueError("jump times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __call__(self, t):
        """Value at t (right-continuous: the post-jump value at a jump time)."""
        idx = np.searchsorted(self.times, t, side="right") - 1
        return np.where(idx < 0, self.init_value, self.values[np.maximum(idx, 0)])

    def before(self, t):
        """Left limit: the value just before t."""
        idx = np.searchsorted(self.times, t, side="left") - 1
        return np.where(idx < 0, self.init_value, self.values[np.maximum(idx, 0)])


def _group_counts(times, events):
    times = np.asarray(times, dtype=float)
    events = np.asarray(events)
    if times.size == 0:
        raise ValueError("need at least one observation")
    if times.shape != events.shape:
        raise ValueError("times and event flags must have equal length")
    if np.any(times < 0.0):
        raise ValueError("times must be nonnegative")
    if not np.all(np.isin(events, (0, 1))):
        raise ValueError("event flags must be 0 or 1")
    uniq, inverse = np.unique(times, return_inverse=True)
    d = np.bincount(inverse, weights=events.astype(float))
    c = np.bincount(inverse, weights=1.0 - events.astype(float))
    removed = d + c
    at_risk = times.size - np.concatenate([[0.0], np.cumsum(removed)[:-1]])
    return uniq, d, c, at_risk


def km_survival(times, events) -> StepFunction:
    """Product-limit estimate of the event-time survival function.

    Multiplies (1 - d_k / n_k) over the distinct times with at least one
    event, where n_k counts everyone still at risk entering that time
    (subjects censored exactly there included, per the events-first tie
    rule).
    """
    uniq, d, _, at_risk = _group_counts(times, events)
    jumps = d > 0
    factors = 1.0 - d[jumps] / at_risk[jumps]
    return StepFunction(uniq[jumps], np.cumprod(factors))


def censor_km(dataset) -> StepFunction:
    """Kaplan-Meier estimate of the censoring survival function.

    Censorings play the role of events; at tied times the true events leave
    the risk set first, so the factor at time t is
    1 - (censorings at t) / (at risk entering t - events at t).
    """
    uniq, d, c, at_risk = _group_counts(dataset.times, dataset.events)
    jumps = c > 0
    factors = 1.0 - c[jumps] / (at_risk[jumps] - d[jumps])
    return StepFunction(uniq[jumps], np.cumprod(factors))


def tau_for_level(censor_surv: StepFunction, level: float, observed_times) -> float:
    """Smallest jump time where the censoring survival is at most ``level``.

    Falls back to the largest observed time when the level is never reached,
    which makes the metric effectively untruncated.
    """
    if not 0.0 < level <= 1.0:
        raise ValueError(f"level must be in (0, 1], got {level}")
    hit = np.flatnonzero(censor_surv.values <= level)
    if hit.size:
        return float(censor_surv.times[hit[0]])
    return float(np.max(observed_times))


def _ipcw_event_weights(times, censor_surv):
    g = np.maximum(censor_surv.before(times), WEIGHT_FLOOR)
    return 1.0 / (g * g)


def c_index_td(surv_matrix, times, events, censor_surv: StepFunction, tau: float) -> float:
    """Inverse-probability-weighted time-dependent concordance index.

    ``surv_matrix[i, j]`` must hold individual i's predicted survival at
    observed time ``times[j]``. Pairs with an event at y_i < tau and any
    y_j > y_i are compared at y_i: full credit when the event case has the
    lower predicted survival, half credit on ties. Each pair is weighted by
    1 / G(y_i-)^2 with the censoring survival clamped below at 1e-8.
    """
    surv_matrix = np.asarray(surv_matrix, dtype=float)
    times = np.asarray(times, dtype=float)
    events = np.asarray(events)
    n = times.shape[0]
    if surv_matrix.shape != (n, n):
        raise ValueError(f"survival matrix must be ({n}, {n}), got {surv_matrix.shape}")
    weights = _ipcw_event_weights(times, censor_surv)
    num = 0.0
    den = 0.0
    for i in np.flatnonzero((events == 1) & (times < tau)):
        later = times > times[i]
        n_comp = int(later.sum())
        if n_comp == 0:
            continue
        s_i = surv_matrix[i, i]
        s_j = surv_matrix[later, i]
        score = float((s_j > s_i).sum()) + 0.5 * float((s_j == s_i).sum())
        num += weights[i] * score
        den += weights[i] * n_comp
    if den == 0.0:
        raise UndefinedMetricError("no comparable pairs below the truncation horizon")
    return num / den


def brier_score(surv_at_t, times, events, censor_surv: StepFunction, t: float) -> float:
    """IPCW Brier score of predicted survival probabilities at time t."""
    if t < 0.0:
        raise ValueError(f"evaluation time must be nonnegative, got {t}")
    surv_at_t = np.asarray(surv_at_t, dtype=float)
    times = np.asarray(times, dtype=float)
    events = np.asarray(events)
    g_event = np.maximum(censor_surv.before(times), WEIGHT_FLOOR)
    g_t = max(float(censor_surv(t)), WEIGHT_FLOOR)
    died = (times <= t) & (events == 1)
    alive = times > t
    terms = np.where(died, surv_at_t**2 / g_event, 0.0)
    terms += np.where(alive, (1.0 - surv_at_t) ** 2 / g_t, 0.0)
    return float(terms.mean())


def binomial_log_likelihood(surv_at_t, times, events, censor_surv: StepFunction,
                            t: float) -> float:
    """IPCW binomial log-likelihood at time t (0 is perfect, more negative is worse)."""
    if t < 0.0:
        raise ValueError(f"evaluation time must be nonnegative, got {t}")
    surv_at_t = np.clip(np.asarray(surv_at_t, dtype=float), PROB_CLAMP, 1.0 - PROB_CLAMP)
    times = np.asarray(times, dtype=float)
    events = np.asarray(events)
    g_event = np.maximum(censor_surv.before(times), WEIGHT_FLOOR)
    g_t = max(float(censor_surv(t)), WEIGHT_FLOOR)
    died = (times <= t) & (events == 1)
    alive = times > t
    terms = np.where(died, np.log(1.0 - surv_at_t) / g_event, 0.0)
    terms += np.where(alive, np.log(surv_at_t) / g_t, 0.0)
    return float(terms.mean())


def _integration_grid(t_max: float) -> np.ndarray:
    return t_max * np.arange(1, INTEGRATION_POINTS + 1) / INTEGRATION_POINTS


def integrated_metric(kind: str, model, dataset, censor_surv: StepFunction,
                      t_max: float, config: OdeConfig) -> float:
    """Mean Brier score ("ibs") or binomial log-likelihood ("ibll") on (0, t_max].

    Averages 100 equally spaced evaluation points; the model curves are
    solved once per individual on that shared grid.
    """
    if kind not in ("ibs", "ibll"):
        raise ValueError(f"kind must be 'ibs' or 'ibll', got {kind!r}")
    if t_max <= 0.0:
        raise ValueError(f"t_max must be positive, got {t_max}")
    grid = _integration_grid(float(t_max))
    surv = predict_survival_many(model, dataset.features, grid, config)
    pointwise = brier_score if kind == "ibs" else binomial_log_likelihood
    scores = [
        pointwise(surv[:, k], dataset.times, dataset.events, censor_surv, float(grid[k]))
        for k in range(grid.shape[0])
    ]
    return float(np.mean(scores))


def nll_metric(model, dataset, config: OdeConfig) -> float:
    """Mean per-observation negative log-likelihood; same formula as training."""
    if dataset.n == 0:
        raise ValueError("dataset must be nonempty")
    return mean_loss(model, dataset, config)


def logrank_test(times, events, group_labels):
    """Two-sample log-rank test; returns (chi_square, p_value).

    At each distinct event time the observed events in group 1 are compared
    with the expectation under the hypergeometric null; the squared total
    discrepancy over the total variance is chi-square with one degree of
    freedom. Identical groups give statistic 0 and p = 1.
    """
    times = np.asarray(times, dtype=float)
    events = np.asarray(events)
    groups = np.asarray(group_labels)
    if not (times.shape == events.shape == groups.shape):
        raise ValueError("times, events and group labels must have equal length")
    if not np.all(np.isin(groups, (0, 1))):
        raise ValueError("group labels must be 0 or 1")
    if groups.min() == groups.max():
        raise ValueError("both groups must be nonempty")
    if not np.any(events == 1):
        raise UndefinedMetricError("log-rank test needs at least one event")

    uniq = np.unique(times[events == 1])
    observed = 0.0
    expected = 0.0
    variance = 0.0
    for t in uniq:
        at_risk = times >= t
        n_total = float(at_risk.sum())
        n_one = float((at_risk & (groups == 1)).sum())
        dead = at_risk & (times == t) & (events == 1)
        d_total = float(dead.sum())
        observed += float((dead & (groups == 1)).sum())
        expected += d_total * n_one / n_total
        if n_total > 1.0:
            variance += (
                d_total
                * (n_one / n_total)
                * (1.0 - n_one / n_total)
                * (n_total - d_total)
                / (n_total - 1.0)
            )
    if variance == 0.0:
        return 0.0, 1.0
    chi_square = (observed - expected) ** 2 / variance
    p_value = float(sstats.chi2.sf(chi_square, df=1))
    return float(chi_square), p_value


@dataclass(frozen=True)
class RiskSplit:
    """Even split of a dataset by predicted survival at a reference time."""

    threshold_time: float
    survival: np.ndarray
    high_risk: np.ndarray  # indices with the lower predicted survival
    low_risk: np.ndarray


def risk_split(model, dataset, config: OdeConfig) -> RiskSplit:
    """Split a dataset into equally sized high/low-risk groups.

    Each individual's survival is predicted at the median observed time;
    sorting by it (stable) and halving gives groups whose sizes differ by at
    most one, low predicted survival meaning high risk.
    """
    threshold_time = float(np.median(dataset.times))
    surv = predict_survival_many(model, dataset.features, [threshold_time], config)[:, 0]
    order = np.argsort(surv, kind="stable")
    half = dataset.n // 2
    return RiskSplit(
        threshold_time=threshold_time,
        survival=surv,
        high_risk=order[:half],
        low_risk=order[half:],
    )


@dataclass
class MetricReport:
    """Evaluation results keyed by truncation level."""

    levels: tuple
    tau: dict = field(default_factory=dict)
    c_index: dict = field(default_factory=dict)
    ibs: dict = field(default_factory=dict)
    ibll: dict = field(default_factory=dict)
    nll: float = float("nan")

    def to_dict(self) -> dict:
        per_level = {
            repr(float(level)): {
                "tau": self.tau[level],
                "c_index": self.c_index[level],
                "ibs": self.ibs[level],
                "ibll": self.ibll[level],
            }
            for level in self.levels
        }
        return {
            "levels": [float(level) for level in self.levels],
            "per_level": per_level,
            "nll": self.nll,
        }


def evaluate(model, dataset, levels=DEFAULT_LEVELS, config: OdeConfig | None = None) -> MetricReport:
    """Full censoring-aware evaluation of a model on one dataset.

    Computes the censoring survival estimate, the truncation horizon for
    every level, the concordance index on exact observed times (one shared
    grid solve for all individuals), the integrated Brier and binomial
    log-likelihood scores on (0, horizon], and the mean negative
    log-likelihood.
    """
    if config is None:
        config = OdeConfig()
    levels = tuple(float(level) for level in levels)
    censor_surv = censor_km(dataset)

    uniq_times = np.unique(dataset.times)
    surv_uniq = predict_survival_many(model, dataset.features, uniq_times, config)
    cols = np.searchsorted(uniq_times, dataset.times)
    surv_matrix = surv_uniq[:, cols]

    report = MetricReport(levels=levels)
    for level in levels:
        tau = tau_for_level(censor_surv, level, dataset.times)
        report.tau[level] = tau
        report.c_index[level] = c_index_td(
            surv_matrix, dataset.times, dataset.events, censor_surv, tau
        )
        report.ibs[level] = integrated_metric("ibs", model, dataset, censor_surv, tau, config)
        report.ibll[level] = integrated_metric("ibll", model, dataset, censor_surv, tau, config)
    report.nll = nll_metric(model, dataset, config)
    return report
