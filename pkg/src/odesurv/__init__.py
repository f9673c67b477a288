"""Continuous-time survival analysis with ODE-defined cumulative hazards.

The cumulative hazard of an individual is the solution of an initial value
problem whose right-hand side is a neural network taking the current
cumulative hazard, the time and the features. Solving that problem gives the
survival function exactly (no discretization of time), training maximizes
the censored likelihood with gradients from a backward adjoint solve, and
evaluation uses censoring-aware metrics throughout.
"""

from .adjoint import LossReport, grad_cumhaz, loss, loss_grad, mean_loss
from .data import (
    Dataset,
    Observation,
    Standardization,
    load_csv,
    save_csv,
    simulate_crossing,
    split,
    standardize,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DataLoadError,
    DivergenceError,
    OdesurvError,
    ShapeError,
    UndefinedMetricError,
)
from .metrics import (
    MetricReport,
    RiskSplit,
    StepFunction,
    binomial_log_likelihood,
    brier_score,
    c_index_td,
    censor_km,
    evaluate,
    integrated_metric,
    km_survival,
    logrank_test,
    nll_metric,
    risk_split,
    tau_for_level,
)
from .models import (
    ModelSpec,
    SurvivalCurve,
    SurvivalModel,
    build_model,
    load_model,
    predict_curves_many,
    predict_hazard,
    predict_survival,
    predict_survival_many,
    save_model,
)
from .nnet import (
    Architecture,
    ParamSet,
    net_forward,
    net_forward_batch,
    net_init,
    net_vjp,
    softplus_eval,
)
from .odeint import (
    IvpProblem,
    OdeConfig,
    solve_cumhaz,
    solve_cumhaz_batch,
    solve_cumhaz_grid,
    solve_ivp_adaptive,
    solve_ivp_fixed,
)
from .training import OptState, TrainConfig, TrainHistory, fit, rmsprop_step

__version__ = "0.1.0"
