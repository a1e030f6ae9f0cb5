"""Platoon string-stability delay bounds and IEEE 802.11p EDCA access delay."""

from .analytic import FixedPointSolution, delay_pgf, solve_fixed_point
from .config import ScenarioConfig, load_config, validate_config
from .des import SimConfig, SimStats, replicate, run_simulation
from .distribution import DelayDistribution, access_delay_distribution
from .edca import EdcaParams, contender_count, transmission_time
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateRegimeError,
    FitError,
    InvalidEquilibriumError,
    NoRealRootError,
    NumericError,
    PlatoonEdcaError,
    RootFindingError,
    TruncationError,
)
from .fitting import CdfFit, cdf_fit, headway_rate_regression, reliability
from .pipeline import ScenarioResult, run_pipeline
from .platoon import (
    Convergence,
    PlatoonModel,
    characteristic_roots,
    critical_delay,
    equilibrium,
    oscillation_detector,
    packet_delay_budget,
    simulate_dde,
)
from .traffic import RateModel, TrafficMix, gap_probability, lambda0

__all__ = [name for name in dir() if not name.startswith("_")]
