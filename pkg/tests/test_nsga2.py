"""NSGA-II sorting and crowding against independent brute-force oracles.

The oracles below are deliberately naive (O(n^2 k) pairwise scans and direct
transcription of the crowding formula) and share no code with the library.
"""

import math
from dataclasses import dataclass

import numpy as np
import pytest

from caravan.moea.nsga2 import (
    ObjectiveError,
    crowding_distance,
    crowding_of,
    non_dominated_sort,
    sort_objectives,
    tournament_select,
)

# -- oracles -------------------------------------------------------------------


def oracle_dominates(a, b):
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def oracle_fronts(vectors):
    remaining = set(range(len(vectors)))
    fronts = []
    while remaining:
        front = sorted(
            i
            for i in remaining
            if not any(oracle_dominates(vectors[j], vectors[i]) for j in remaining if j != i)
        )
        fronts.append(front)
        remaining -= set(front)
    return fronts


def oracle_crowding(vectors):
    m, k = len(vectors), len(vectors[0])
    if m <= 2:
        return [math.inf] * m
    d = [0.0] * m
    for j in range(k):
        order = sorted(range(m), key=lambda i: vectors[i][j])
        span = vectors[order[-1]][j] - vectors[order[0]][j]
        d[order[0]] = d[order[-1]] = math.inf
        if span == 0:
            continue
        for pos in range(1, m - 1):
            d[order[pos]] += (vectors[order[pos + 1]][j] - vectors[order[pos - 1]][j]) / span
    return d


@dataclass
class Ind:
    objectives: tuple
    rank: int = 0
    crowding: float = 0.0


# -- sorting -------------------------------------------------------------------


def test_singleton_front():
    assert sort_objectives(np.array([[1.0, 1.0]])) == [[0]]


def test_three_point_example():
    assert sort_objectives(np.array([[1, 2], [2, 1], [2, 2]], dtype=float)) == [[0, 1], [2]]


def test_non_dominated_sort_on_individuals():
    pop = [Ind((1.0, 2.0)), Ind((2.0, 1.0)), Ind((2.0, 2.0))]
    assert non_dominated_sort(pop) == [[0, 1], [2]]


def test_nan_objective_names_individual():
    with pytest.raises(ObjectiveError, match="1"):
        sort_objectives(np.array([[1.0, 1.0], [np.nan, 0.0]]))


@pytest.mark.parametrize("k", [2, 3])
@pytest.mark.parametrize("seed", range(10))
def test_sorting_matches_bruteforce_oracle(k, seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 200))
    F = rng.random((n, k))
    assert sort_objectives(F) == oracle_fronts(F.tolist())


def test_sorting_with_duplicates_matches_oracle():
    rng = np.random.default_rng(7)
    F = rng.integers(0, 4, size=(60, 3)).astype(float)
    assert sort_objectives(F) == oracle_fronts(F.tolist())


# -- crowding -------------------------------------------------------------------


def test_crowding_singleton():
    assert crowding_distance([Ind((1.0, 2.0))]) == [math.inf]


def test_crowding_pair_both_boundaries():
    assert crowding_distance([Ind((0.0, 1.0)), Ind((1.0, 0.0))]) == [math.inf, math.inf]


def test_crowding_hand_example():
    # middle point: (2-0)/2 + (2-0)/2 = 2.0
    got = crowding_distance([Ind((0.0, 2.0)), Ind((1.0, 1.0)), Ind((2.0, 0.0))])
    assert got[0] == math.inf and got[2] == math.inf
    assert got[1] == pytest.approx(2.0, abs=1e-12)


def test_crowding_zero_range_objective_contributes_zero():
    F = np.array([[0.0, 5.0], [1.0, 5.0], [2.0, 5.0]])
    got = crowding_of(F)
    assert got[1] == pytest.approx(1.0, abs=1e-12)  # only the first objective counts


@pytest.mark.parametrize("k", [2, 3])
@pytest.mark.parametrize("seed", range(8))
def test_crowding_matches_bruteforce_oracle(k, seed):
    rng = np.random.default_rng(100 + seed)
    m = int(rng.integers(1, 40))
    F = rng.random((m, k))
    got = crowding_of(F)
    want = oracle_crowding(F.tolist())
    for g, w in zip(got, want):
        if math.isinf(w):
            assert math.isinf(g)
        else:
            assert g == pytest.approx(w, abs=1e-12)


# -- tournament -----------------------------------------------------------------


class PairRng:
    """Scripted stand-in for a Generator: always draws the given index pair."""

    def __init__(self, i, j):
        self.pair = np.array([i, j])

    def choice(self, n, size, replace):
        return self.pair


def test_tournament_lower_rank_wins():
    pop = [Ind((0, 0), rank=0, crowding=1.0), Ind((0, 0), rank=1, crowding=9.0)]
    assert tournament_select(pop, PairRng(0, 1)) is pop[0]
    assert tournament_select(pop, PairRng(1, 0)) is pop[0]


def test_tournament_crowding_breaks_rank_tie():
    pop = [Ind((0, 0), rank=0, crowding=3.0), Ind((0, 0), rank=0, crowding=1.0)]
    assert tournament_select(pop, PairRng(0, 1)) is pop[0]


def test_tournament_full_tie_lower_index_wins():
    pop = [Ind((0, 0), rank=0, crowding=1.0), Ind((0, 0), rank=0, crowding=1.0)]
    assert tournament_select(pop, PairRng(1, 0)) is pop[0]


def test_tournament_single_individual():
    pop = [Ind((0, 0), rank=0, crowding=1.0)]
    assert tournament_select(pop, np.random.default_rng(0)) is pop[0]
