"""Fluid and diffusion value-function bases for TD learning in a speed-scaling queue."""

from .errors import (
    ConfigError,
    DivergenceError,
    DomainError,
    EvaluationError,
    FeasibilityError,
    NumericError,
    ParameterError,
    SingularityError,
    SpeedscaleError,
)
from .kernels import BACKEND
from .model import (
    ArrivalPmf,
    CoinMixture,
    CostModel,
    ScaledGeometric,
    StateGrid,
    TabularFunction,
    arrival_pmf,
    cost,
    generator_apply,
    mixture_for_variance,
    step,
)
from .rng import Streams, substream
from .solver import (
    Policy,
    ViaResult,
    bellman_error_mdp,
    direct_error,
    direct_error_bounds_mc,
    error_report,
    evaluate_policy,
    myopic_policy,
    normalized_error,
    perturbed_cost,
    value_iteration,
)
from .td import (
    LinearBasis,
    fluid_diffusion_basis,
    lstd_average_cost,
    min_one_policy,
    polynomial_basis,
    policy_improvement,
    simulate_chain,
    tdpia,
)

__version__ = "0.1.0"
