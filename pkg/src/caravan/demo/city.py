"""Desk-scale evacuation planning model.

A city of K sub-areas and S shelters. An evacuation plan splits each
sub-area's population between two destination shelters in ratio r and 1-r.
Three objectives, all minimized:

  f1  evacuation completion time (minutes), from an analytic surrogate:
      per shelter, the worst group travel time plus the shelter's intake
      backlog load/service_rate; f1 is the worst shelter.
  f2  plan complexity: total split entropy, -sum(r ln r + (1-r) ln(1-r)),
      with 0 ln 0 = 0. Zero for plans that never split a sub-area.
  f3  excess evacuees: total shelter overflow beyond capacity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from ..core import CaravanError

K_SUBAREAS = 16
S_SHELTERS = 4


class DemoError(CaravanError):
    pass


@dataclass(frozen=True)
class CityModel:
    populations: tuple[int, ...]
    capacities: tuple[int, ...]
    distances: tuple[tuple[float, ...], ...]  # sub-area x shelter, minutes
    service_rate: float  # evacuees absorbed per shelter per minute

    def __post_init__(self) -> None:
        k, s = len(self.populations), len(self.capacities)
        if len(self.distances) != k or any(len(row) != s for row in self.distances):
            raise DemoError("distance matrix shape must be sub-areas x shelters")
        if min(self.populations) < 0 or min(self.capacities) < 0:
            raise DemoError("populations and capacities must be non-negative")
        if self.service_rate <= 0 or not all(
            math.isfinite(d) and d >= 0 for row in self.distances for d in row
        ):
            raise DemoError("rates must be positive and distances finite")

    @property
    def num_subareas(self) -> int:
        return len(self.populations)

    @property
    def num_shelters(self) -> int:
        return len(self.capacities)


@dataclass(frozen=True)
class EvacuationPlan:
    ratios: tuple[float, ...]
    destinations: tuple[tuple[int, int], ...]  # (primary, secondary) per sub-area

    def __post_init__(self) -> None:
        if len(self.ratios) != len(self.destinations):
            raise DemoError("one destination pair per sub-area required")
        for r in self.ratios:
            if not 0.0 <= r <= 1.0:
                raise DemoError(f"ratio {r} outside [0, 1]")


def default_city() -> CityModel:
    """16 sub-areas, 4 shelters, 1000 evacuees.

    Intake is slow relative to the population, so completion time is governed
    by how evenly a plan spreads load across shelters; spreading requires
    splitting sub-areas, which raises plan complexity. Capacities still
    overflow when a plan crowds a single shelter.
    """
    populations = (95, 80, 75, 70, 70, 65, 65, 60, 60, 55, 55, 50, 50, 50, 50, 50)
    capacities = (500, 400, 350, 250)
    distances = tuple(
        tuple(5.0 + ((3 * i + 7 * s) % 8) * 5.0 for s in range(S_SHELTERS))
        for i in range(K_SUBAREAS)
    )
    return CityModel(populations, capacities, distances, service_rate=2.5)


def load_city(path: str | Path) -> CityModel:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        return CityModel(
            populations=tuple(int(p) for p in obj["populations"]),
            capacities=tuple(int(c) for c in obj["capacities"]),
            distances=tuple(tuple(float(d) for d in row) for row in obj["distances"]),
            service_rate=float(obj["service_rate"]),
        )
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DemoError(f"cannot load city model from {path}: {exc}") from exc


def save_city(city: CityModel, path: str | Path) -> None:
    obj = {
        "populations": list(city.populations),
        "capacities": list(city.capacities),
        "distances": [list(row) for row in city.distances],
        "service_rate": city.service_rate,
    }
    Path(path).write_text(json.dumps(obj, indent=2), encoding="utf-8")


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def group_sizes(plan: EvacuationPlan, city: CityModel, subarea: int) -> tuple[int, int]:
    pop = city.populations[subarea]
    first = _round_half_up(plan.ratios[subarea] * pop)
    return first, pop - first


def shelter_loads(plan: EvacuationPlan, city: CityModel) -> list[int]:
    loads = [0] * city.num_shelters
    for i in range(city.num_subareas):
        primary, secondary = plan.destinations[i]
        g1, g2 = group_sizes(plan, city, i)
        loads[primary] += g1
        loads[secondary] += g2
    return loads


def objective_f2(plan: EvacuationPlan) -> float:
    """Plan complexity: split entropy, minimal (zero) when nothing is split."""
    total = 0.0
    for r in plan.ratios:
        if not 0.0 <= r <= 1.0:
            raise DemoError(f"ratio {r} outside [0, 1]")
        for p in (r, 1.0 - r):
            if p > 0.0:
                total += p * math.log(p)
    return -total


def objective_f3(plan: EvacuationPlan, city: CityModel) -> float:
    """Excess evacuees: total overflow past shelter capacities."""
    return float(
        sum(max(0, load - cap) for load, cap in zip(shelter_loads(plan, city), city.capacities))
    )


def surrogate_f1(plan: EvacuationPlan, city: CityModel) -> float:
    """Evacuation completion time in minutes.

    Each shelter finishes after its farthest-travelling assigned group has
    arrived and its whole load has been absorbed at service_rate; empty
    shelters contribute nothing.
    """
    worst = 0.0
    loads = [0] * city.num_shelters
    max_travel = [0.0] * city.num_shelters
    for i in range(city.num_subareas):
        primary, secondary = plan.destinations[i]
        g1, g2 = group_sizes(plan, city, i)
        if g1 > 0:
            loads[primary] += g1
            max_travel[primary] = max(max_travel[primary], city.distances[i][primary])
        if g2 > 0:
            loads[secondary] += g2
            max_travel[secondary] = max(max_travel[secondary], city.distances[i][secondary])
    for s in range(city.num_shelters):
        if loads[s] > 0:
            worst = max(worst, max_travel[s] + loads[s] / city.service_rate)
    return worst


def evaluate(plan: EvacuationPlan, city: CityModel) -> tuple[float, float, float]:
    return surrogate_f1(plan, city), objective_f2(plan), objective_f3(plan, city)


# -- genome encoding -----------------------------------------------------------------


def genome_bounds(city: CityModel) -> list[tuple[float, float]]:
    """K ratio genes in [0, 1] plus 2K destination genes in [0, S)."""
    k, s = city.num_subareas, city.num_shelters
    return [(0.0, 1.0)] * k + [(0.0, float(s))] * (2 * k)


def plan_from_values(values, city: CityModel) -> EvacuationPlan:
    """Decode a real-valued genome: destination genes are floored to shelter
    indices so real-coded operators apply uniformly to every gene."""
    k, s = city.num_subareas, city.num_shelters
    if len(values) != 3 * k:
        raise DemoError(f"expected {3 * k} genome values, got {len(values)}")
    ratios = tuple(float(v) for v in values[:k])
    pairs = []
    for i in range(k):
        primary = min(int(values[k + 2 * i]), s - 1)
        secondary = min(int(values[k + 2 * i + 1]), s - 1)
        if not (0 <= primary < s and 0 <= secondary < s):
            raise DemoError(f"destination gene out of range for sub-area {i}")
        pairs.append((primary, secondary))
    return EvacuationPlan(ratios, tuple(pairs))


def values_from_plan(plan: EvacuationPlan) -> list[float]:
    values = [float(r) for r in plan.ratios]
    for primary, secondary in plan.destinations:
        values.extend((float(primary), float(secondary)))
    return values


def evaluator_template(city: CityModel, executable: str = "caravan-demo-sim") -> str:
    """Command template for one simulator run of this city's genome layout."""
    n = 3 * city.num_subareas
    placeholders = " ".join("{%d}" % i for i in range(n))
    return f"{executable} {placeholders} {{seed}}"
