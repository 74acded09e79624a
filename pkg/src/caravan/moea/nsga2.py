"""NSGA-II selection machinery: non-dominated sorting, crowding distance,
binary tournaments. All objectives are minimized; a vector dominates another
iff it is <= in every component and < in at least one.
"""

from __future__ import annotations

import numpy as np

from ..core import CaravanError


class ObjectiveError(CaravanError):
    """Invalid objective vector (NaN or shape mismatch)."""


def sort_objectives(objectives: np.ndarray) -> list[list[int]]:
    """Non-dominated fronts of a (n, k) objective matrix, as index lists.

    Front 0 holds individuals dominated by none; front j only those dominated
    exclusively by members of earlier fronts.
    """
    F = np.asarray(objectives, dtype=float)
    if F.ndim != 2:
        raise ObjectiveError(f"expected a 2-D objective matrix, got shape {F.shape}")
    bad = np.isnan(F).any(axis=1)
    if bad.any():
        raise ObjectiveError(f"NaN objective for individual(s) {np.nonzero(bad)[0].tolist()}")
    n = len(F)
    if n == 0:
        return []
    le = (F[:, None, :] <= F[None, :, :]).all(axis=2)
    lt = (F[:, None, :] < F[None, :, :]).any(axis=2)
    dominates = le & lt  # dominates[i, j]: i dominates j
    dominator_count = dominates.sum(axis=0).astype(np.int64)
    fronts: list[list[int]] = []
    remaining = np.ones(n, dtype=bool)
    while remaining.any():
        current = remaining & (dominator_count == 0)
        if not current.any():
            raise AssertionError("domination graph is cyclic; this cannot happen")
        idx = np.nonzero(current)[0]
        fronts.append(idx.tolist())
        remaining[idx] = False
        dominator_count -= dominates[idx].sum(axis=0)
    return fronts


def non_dominated_sort(population) -> list[list[int]]:
    """Fronts for a population of evaluated individuals (minimization)."""
    return sort_objectives(np.array([ind.objectives for ind in population], dtype=float))


def crowding_of(objectives: np.ndarray) -> np.ndarray:
    """Crowding distances for one front's (m, k) objective matrix.

    Boundary individuals per objective get +inf; interior ones accumulate
    neighbor-gap / objective-range; a zero range contributes nothing.
    """
    F = np.asarray(objectives, dtype=float)
    m, k = F.shape
    distance = np.zeros(m)
    if m <= 2:
        return np.full(m, np.inf)
    for j in range(k):
        order = np.argsort(F[:, j], kind="stable")
        lo, hi = F[order[0], j], F[order[-1], j]
        distance[order[0]] = distance[order[-1]] = np.inf
        span = hi - lo
        if span == 0:
            continue
        gaps = (F[order[2:], j] - F[order[:-2], j]) / span
        distance[order[1:-1]] += gaps
    return distance


def crowding_distance(front) -> list[float]:
    """Crowding distances for a front of evaluated individuals."""
    if not front:
        raise ValueError("crowding_distance of an empty front")
    return crowding_of(np.array([ind.objectives for ind in front], dtype=float)).tolist()


def better(rank_a: int, crowd_a: float, a: int, rank_b: int, crowd_b: float, b: int) -> bool:
    """Tournament comparator: lower rank, then larger crowding, then lower index."""
    if rank_a != rank_b:
        return rank_a < rank_b
    if crowd_a != crowd_b:
        return crowd_a > crowd_b
    return a < b


def tournament_select(population, rng: np.random.Generator):
    """Binary tournament on rank, crowding, then index."""
    n = len(population)
    if n == 0:
        raise ValueError("tournament on an empty population")
    if n == 1:
        return population[0]
    i, j = rng.choice(n, size=2, replace=False)
    i, j = int(i), int(j)
    a, b = population[i], population[j]
    return a if better(a.rank, a.crowding, i, b.rank, b.crowding, j) else b
