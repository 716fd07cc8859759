"""Likelihood inference for partially observed epidemic jump processes.

The package covers the full workflow: exact stochastic simulation of
compartmental epidemics, a discrete Gaussian state-space approximation of
the scaled process, Kalman-filter likelihood evaluation, and maximum
likelihood estimation with profile confidence intervals and post-fit
predictive checks.
"""

from .datasets import boarding_school
from .errors import (
    BlowUpError,
    ConfigError,
    DegenerateDataError,
    DomainError,
    EpiKalmanError,
    NumericsError,
    SimulationError,
    SingularMatrixError,
)
from .inference import (
    DEGENERATE_LOGLIK,
    PROFILE_THRESHOLD,
    FitResult,
    NMResult,
    ParamSpace,
    PostPredictive,
    ProfileResult,
    ThetaFull,
    band_coverage,
    fit,
    loglik_at,
    make_objective,
    make_space,
    nelder_mead,
    param_universe,
    post_predictive,
    profile_ci,
)
from .io import (
    read_json,
    read_series,
    read_trajectory,
    write_json,
    write_series,
    write_trajectory,
)
from .kalman import (
    FilterStep,
    LogLikResult,
    align_observations,
    filter_forward,
    filter_innovation,
    gaussian_condition,
    log_likelihood,
)
from .model import (
    CompartmentalModel,
    Jump,
    diffusion_factor,
    diffusion_matrix,
    drift,
    drift_jacobian,
    get_model,
    seir_model,
    sir_model,
)
from .simulate import (
    ObservationSeries,
    Trajectory,
    design_grid,
    extinction_time,
    final_size,
    gillespie,
    is_nonextinct,
    nonextinction_probability,
    observe,
    proportions_to_counts,
    simulate_nonextinct,
)
from .state_space import (
    ApproxSettings,
    DiscreteSystem,
    OdeSolution,
    build_obs,
    build_small_delta,
    build_system,
    resolvent,
    solve_ode,
)

__version__ = "0.1.0"
