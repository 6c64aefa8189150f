"""Optimal threshold AQM from impulsive control of saw-tooth TCP flows."""

from .average import (
    AverageSolution,
    RelativeValueProfile,
    bellman_residual_avg,
    relative_value,
    threshold_avg,
)
from .discounted import (
    PAPER_PARAMS,
    DiscountedParams,
    DiscountedSolution,
    ValueFunctionW,
    H,
    W_star,
    W_tilde,
    bellman_residual_disc,
    diagnostic_curves,
    exp_power_integral,
    incomplete_gamma_upper,
    limit_threshold,
    no_impulse_boundary,
    solve_threshold_disc,
)
from .model import (
    CriterionParams,
    FlowParams,
    NetworkSpec,
    ThresholdPolicy,
    apply_impulse,
    grow,
    reward_rate,
    segment_reward,
    time_to_reach,
)
from .netsim import (
    FixedPeriod,
    NoImpulse,
    Red,
    SimConfig,
    SimReport,
    Threshold,
    compare_policies,
    decouple_prices,
    simulate,
)

__version__ = "0.1.0"
