"""Initial-value solvers and cumulative-hazard evaluation.

Two explicit Runge-Kutta integrators are provided: the classical fixed-step
4th-order scheme and the adaptive Dormand-Prince 5(4) embedded pair. On top
of them sit the survival-specific solves: the cumulative hazard of one
individual recorded on a time grid, and the batched solve that rescales every
observation's interval [0, y_i] onto [0, 1] so a whole mini-batch reduces to
a single combined system evaluated at one end point.

Models enter through a small duck-typed protocol: ``prep(features)`` maps raw
features to the network's standardized inputs and ``hazard(cumhaz, t, z)``
evaluates the instantaneous hazard for a batch (see ``models.SurvivalModel``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, ConvergenceError, DivergenceError

__all__ = [
    "OdeConfig",
    "IvpProblem",
    "solve_ivp_fixed",
    "solve_ivp_adaptive",
    "solve_cumhaz",
    "solve_cumhaz_grid",
    "solve_cumhaz_batch",
]

METHOD_FIXED = "fixed-rk4"
METHOD_ADAPTIVE = "adaptive-dopri5"

# Dormand-Prince 5(4) tableau. The propagating solution is 5th order; the
# error estimate is the difference against the embedded 4th-order solution.
_DP_C = (0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0)
_DP_A = (
    (1.0 / 5.0,),
    (3.0 / 40.0, 9.0 / 40.0),
    (44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0),
    (19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0),
    (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0),
    (35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0),
)
_DP_ERR = (
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_ERR_EXPONENT = -1.0 / 5.0


@dataclass(frozen=True)
class OdeConfig:
    """Solver selection and accuracy knobs shared by every hazard solve."""

    method: str = METHOD_ADAPTIVE
    rtol: float = 1e-6
    atol: float = 1e-8
    fixed_steps: int = 100
    max_steps: int = 10000

    def __post_init__(self):
        if self.method not in (METHOD_FIXED, METHOD_ADAPTIVE):
            raise ConfigError(
                f"method must be {METHOD_FIXED!r} or {METHOD_ADAPTIVE!r}, got {self.method!r}"
            )
        if not (self.rtol > 0.0 and self.atol > 0.0):
            raise ConfigError(f"rtol and atol must be positive, got {self.rtol}, {self.atol}")
        if self.fixed_steps < 1 or self.max_steps < 1:
            raise ConfigError("fixed_steps and max_steps must be >= 1")


@dataclass
class IvpProblem:
    """An initial value problem y' = dynamics(y, t), y(t0) = y0, solved to t1."""

    dynamics: Callable[[np.ndarray, float], np.ndarray]
    y0: np.ndarray = field(default_factory=lambda: np.zeros(1))
    t0: float = 0.0
    t1: float = 1.0


def _check_finite(y, step, what="state"):
    if not np.all(np.isfinite(y)):
        bad = np.flatnonzero(~np.isfinite(np.atleast_1d(y)))
        raise DivergenceError(
            f"non-finite {what} at step {step} (components {bad.tolist()})",
            step=step,
            component_indices=bad,
        )


def _rk4_step(f, y, t, h):
    k1 = f(y, t)
    k2 = f(y + 0.5 * h * k1, t + 0.5 * h)
    k3 = f(y + 0.5 * h * k2, t + 0.5 * h)
    k4 = f(y + h * k3, t + h)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rk4_span(f, y, t0, t1, steps, step_offset=0):
    h = (t1 - t0) / steps
    for i in range(steps):
        y = _rk4_step(f, y, t0 + i * h, h)
        _check_finite(y, step_offset + i + 1)
    return y


def solve_ivp_fixed(problem: IvpProblem, steps: int) -> np.ndarray:
    """Classical RK4 with ``steps`` uniform steps from t0 to t1.

    Deterministic; raises DivergenceError naming the step if the state goes
    non-finite.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    y = np.array(problem.y0, dtype=float)
    t0, t1 = float(problem.t0), float(problem.t1)
    if t1 == t0:
        return y
    return _rk4_span(problem.dynamics, y, t0, t1, int(steps))


def _rms_norm(v):
    return float(np.sqrt(np.mean(np.square(v))))


def _initial_step(f, y0, t0, f0, direction, rtol, atol, norm_len=None):
    """Standard norm-based starting step from the state and its derivative."""
    m = slice(None) if norm_len is None else slice(0, norm_len)
    scale = atol + rtol * np.abs(y0[m])
    d0 = _rms_norm(y0[m] / scale)
    d1 = _rms_norm(f0[m] / scale)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    y1 = y0 + h0 * direction * f0
    f1 = f(y1, t0 + h0 * direction)
    d2 = _rms_norm((f1 - f0)[m] / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 6.0)
    return min(100.0 * h0, h1)


def _dopri5(f, y0, t0, t1, rtol, atol, max_steps, record_times=None, norm_len=None):
    """Adaptive Dormand-Prince integration from t0 to t1 (either direction).

    A step is accepted when the weighted rms of the embedded error estimate,
    err = sqrt(mean((e_i / (atol + rtol * max(|y_i|, |y_new_i|)))^2)), is at
    most 1; the next step is scaled by 0.9 * err^(-1/5) clamped to [0.2, 10].
    ``record_times`` (sorted, inside [t0, t1], forward solves only) forces the
    integrator to land exactly on each listed time and collect the state
    there, so no interpolation is involved.

    ``norm_len`` restricts the error norm to the first ``norm_len`` state
    components (a seminorm). The backward augmented solve uses this to keep
    step control on the re-integrated hazard and the adjoint, whose accuracy
    drives the gradient, instead of on the gradient accumulator itself, whose
    components are plain integrals of already-controlled quantities.

    Returns (y_final, recorded) where recorded is a list of states aligned
    with record_times.
    """
    y = np.array(y0, dtype=float)
    t = float(t0)
    t1 = float(t1)
    recorded = []
    rec = np.asarray(record_times, dtype=float) if record_times is not None else None
    rec_i = 0

    if rec is not None:
        while rec_i < len(rec) and rec[rec_i] == t:
            recorded.append(y.copy())
            rec_i += 1
    if t1 == t:
        return y, recorded

    direction = 1.0 if t1 > t else -1.0
    f0 = f(y, t)
    _check_finite(f0, 0, what="derivative")
    h_prop = _initial_step(f, y, t, f0, direction, rtol, atol, norm_len)
    k = [None] * 7
    k[0] = f0
    n_attempted = 0

    while (t1 - t) * direction > 0.0:
        if n_attempted >= max_steps:
            raise ConvergenceError(
                f"adaptive solver exceeded max_steps={max_steps} before reaching t={t1}"
            )
        # Land exactly on the end time and every recording time: the step is
        # shortened when it would overshoot (grid recording without dense
        # output), while the controller's proposal survives the clamp.
        target = t1
        if rec is not None and rec_i < len(rec):
            target = rec[rec_i]
        clamped = h_prop >= (target - t) * direction
        h_abs = (target - t) * direction if clamped else h_prop
        h = h_abs * direction
        if t + h == t:
            raise ConvergenceError(f"step size underflow at t={t} (step {n_attempted})")

        for i in range(1, 6):
            a = _DP_A[i - 1]
            y_stage = y + h * sum(a[j] * k[j] for j in range(i))
            k[i] = f(y_stage, t + _DP_C[i] * h)
        y_new = y + h * sum(_DP_A[5][j] * k[j] for j in range(6))
        k[6] = f(y_new, t + h)  # FSAL stage, evaluated at the 5th-order solution
        err_vec = h * sum(_DP_ERR[j] * k[j] for j in range(7))

        n_attempted += 1
        _check_finite(y_new, n_attempted)
        m = slice(None) if norm_len is None else slice(0, norm_len)
        scale = atol + rtol * np.maximum(np.abs(y[m]), np.abs(y_new[m]))
        err = _rms_norm(err_vec[m] / scale)

        if np.isfinite(err) and err <= 1.0:
            y = y_new
            k[0] = k[6]
            t = target if clamped else t + h
            if rec is not None:
                while rec_i < len(rec) and rec[rec_i] == t:
                    recorded.append(y.copy())
                    rec_i += 1
            accepted = True
        else:
            accepted = False
        if not np.isfinite(err):
            factor = _MIN_FACTOR
        elif err == 0.0:
            factor = _MAX_FACTOR
        else:
            factor = min(_MAX_FACTOR, max(_MIN_FACTOR, _SAFETY * err**_ERR_EXPONENT))
        if clamped and accepted:
            # A shortened step says nothing about the natural step size; keep
            # the previous proposal so the solver does not crawl off a grid
            # point it was forced to hit.
            h_prop = max(h_prop, h_abs * factor)
        else:
            h_prop = h_abs * factor

    return y, recorded


def solve_ivp_adaptive(problem: IvpProblem, config: OdeConfig) -> np.ndarray:
    """Dormand-Prince 5(4) solve of the problem at its end time t1."""
    y, _ = _dopri5(
        problem.dynamics,
        np.array(problem.y0, dtype=float),
        problem.t0,
        problem.t1,
        config.rtol,
        config.atol,
        config.max_steps,
    )
    return y


def _integrate_recording(f, y0, t_end, grid, config):
    """One continuous integration 0 -> t_end collecting states at grid times."""
    if config.method == METHOD_ADAPTIVE:
        _, recorded = _dopri5(
            f, y0, 0.0, t_end, config.rtol, config.atol, config.max_steps, record_times=grid
        )
        return recorded
    # Fixed RK4: keep one trajectory by integrating segment by segment with a
    # step close to (t_end / fixed_steps), always landing on grid times.
    target_h = t_end / config.fixed_steps if t_end > 0 else 0.0
    y = np.array(y0, dtype=float)
    t_prev = 0.0
    done = 0
    recorded = []
    for t_next in grid:
        if t_next > t_prev:
            seg = t_next - t_prev
            n = max(1, int(np.ceil(seg / target_h - 1e-12))) if target_h > 0 else 1
            y = _rk4_span(f, y, t_prev, t_next, n, step_offset=done)
            done += n
            t_prev = t_next
        recorded.append(y.copy())
    return recorded


def _validate_grid(t_eval):
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.ndim != 1:
        raise ValueError(f"time grid must be 1-D, got shape {t_eval.shape}")
    if t_eval.size and (not np.all(np.isfinite(t_eval)) or t_eval[0] < 0.0):
        raise ValueError("time grid must be finite and nonnegative")
    if np.any(np.diff(t_eval) < 0.0):
        raise ValueError("time grid must be nondecreasing")
    return t_eval


def solve_cumhaz_grid(model, features, t_eval, config: OdeConfig) -> np.ndarray:
    """Cumulative hazard of several individuals on a shared time grid.

    ``features`` is (n, p) raw (unstandardized) features. All individuals are
    integrated together as one state vector from 0 to max(t_eval); the result
    is an (n, len(t_eval)) matrix with column k holding the cumulative hazard
    at t_eval[k]. Grid values start at zero and are nondecreasing because the
    hazard is strictly positive.
    """
    t_eval = _validate_grid(t_eval)
    features = np.asarray(features, dtype=float)
    n = features.shape[0]
    if t_eval.size == 0:
        return np.zeros((n, 0))
    z = model.prep(features)

    def f(lam, t):
        return model.hazard(lam, t, z)

    recorded = _integrate_recording(f, np.zeros(n), float(t_eval[-1]), t_eval, config)
    return np.stack(recorded, axis=1)


def solve_cumhaz(model, features, t_eval, config: OdeConfig) -> np.ndarray:
    """Cumulative hazard of one individual at each time in ``t_eval``.

    The grid must be nondecreasing and nonnegative; integration runs once to
    the largest requested time, recording the state at every grid point.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"expected a single feature vector, got shape {x.shape}")
    return solve_cumhaz_grid(model, x[None, :], t_eval, config)[0]


def solve_cumhaz_batch(model, batch, config: OdeConfig) -> np.ndarray:
    """Cumulative hazard of every observation at its own observed time.

    Rescales each observation's interval onto s in [0, 1] via
    H_i(s) = cumhaz_i(s * y_i), whose dynamics pick up a factor y_i, then
    solves the concatenated system once from s=0 to s=1 and reads off H_i(1).
    Observations with y_i = 0 never enter the solve: their value is exactly 0.

    ``batch`` is anything with ``features`` (n, p) and ``times`` (n,) arrays
    (e.g. ``data.Dataset``).
    """
    features = np.asarray(batch.features, dtype=float)
    times = np.asarray(batch.times, dtype=float)
    if np.any(times < 0.0) or not np.all(np.isfinite(times)):
        raise ValueError("observed times must be finite and nonnegative")
    out = np.zeros(times.shape[0])
    mask = times > 0.0
    if not np.any(mask):
        return out
    z = model.prep(features[mask])
    y = times[mask]

    def f(state, s):
        return model.hazard(state, s * y, z) * y

    try:
        if config.method == METHOD_ADAPTIVE:
            final, _ = _dopri5(
                f, np.zeros(y.shape[0]), 0.0, 1.0, config.rtol, config.atol, config.max_steps
            )
        else:
            final = _rk4_span(f, np.zeros(y.shape[0]), 0.0, 1.0, config.fixed_steps)
    except DivergenceError as exc:
        if exc.component_indices is not None:
            orig = np.flatnonzero(mask)[exc.component_indices]
            raise DivergenceError(
                f"cumulative-hazard solve diverged for batch indices {orig.tolist()}",
                step=exc.step,
                component_indices=orig,
            ) from exc
        raise
    out[mask] = final
    return out
