"""Optimal make-take fee contracts between an exchange and a market maker:
quasi-explicit contract/spread solver plus an event-driven market simulator
for validating it against the no-contract benchmark."""

from .params import (
    DerivedConstants,
    ModelParams,
    ValidatedParams,
    ValidationError,
    derived_constants,
    hamiltonian,
    intensity,
    load_params,
    parse_params,
    payoff_rate,
    spread_map,
    validate,
)
from .solver import (
    LogRatioGrid,
    SolverError,
    ValueGrid,
    solve_log_ratios,
    solve_matrix_exp,
    solve_mc,
    solve_series,
    solve_series_grid,
    value_v,
)
from .contract import (
    AccrualState,
    ContractPolicy,
    FillEvent,
    FirstBestSolution,
    accrue,
    benchmark_policy,
    constant_policy,
    contracted_policy,
    first_best,
    indifference_y0,
    nash_policy,
    reservation_y0,
    risk_neutral_policy,
    taker_fee_heuristic,
)
from .simulator import (
    ExperimentStats,
    PathRecord,
    SimulationError,
    UtilityCheck,
    path_seed,
    run_experiment,
    simulate_path,
    trading_cost_experiment,
    utility_check,
)

__version__ = "0.1.0"
