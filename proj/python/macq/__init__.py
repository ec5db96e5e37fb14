"""Python bindings for the macq library."""

from ._macq import (
    ConvergenceError,
    InstabilityError,
    ValidationError,
    count_exceedances,
    distributed_capacity,
    expected_max,
    gumbel_constants,
    run_sim,
    sample_max_capacity,
    solve_model1,
    solve_model3,
    solve_pcoll,
    threshold_for_one,
)

__all__ = [
    "ConvergenceError",
    "InstabilityError",
    "ValidationError",
    "count_exceedances",
    "distributed_capacity",
    "expected_max",
    "gumbel_constants",
    "run_sim",
    "sample_max_capacity",
    "solve_model1",
    "solve_model3",
    "solve_pcoll",
    "threshold_for_one",
]
