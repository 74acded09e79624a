"""Asynchronous multi-objective evolutionary optimization (NSGA-II based)."""

from .nsga2 import (
    ObjectiveError,
    crowding_distance,
    crowding_of,
    non_dominated_sort,
    sort_objectives,
    tournament_select,
)
from .operators import (
    Genome,
    GenomeError,
    polynomial_mutation,
    random_genome,
    sbx_crossover,
)
from .optimizer import (
    AsyncNsga2,
    GenerationStats,
    Individual,
    MoeaConfig,
    MoeaConfigError,
    OptimizationLog,
    async_optimize,
    write_log_csv,
)

__all__ = [
    "AsyncNsga2",
    "GenerationStats",
    "Genome",
    "GenomeError",
    "Individual",
    "MoeaConfig",
    "MoeaConfigError",
    "ObjectiveError",
    "OptimizationLog",
    "async_optimize",
    "crowding_distance",
    "crowding_of",
    "non_dominated_sort",
    "polynomial_mutation",
    "random_genome",
    "sbx_crossover",
    "sort_objectives",
    "tournament_select",
    "write_log_csv",
]
