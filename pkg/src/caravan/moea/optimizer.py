"""Asynchronous NSGA-II on top of the engine's task API.

An initial wave of individuals starts evaluating immediately; whenever a
fixed number of them have completed (a *generation*), the completed pool is
merged into an elite archive, the archive is truncated, and the same number
of offspring are bred and submitted — all without waiting for the remaining
evaluations, so the workers never drain between generations.

Every individual is evaluated as a ParameterSet of ``replicates`` runs with
consecutive seeds; its objective vector is the element-wise mean of the runs.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from ..core import CaravanError, TaskState
from .nsga2 import better, crowding_of, sort_objectives, tournament_select
from .operators import Genome, polynomial_mutation, random_genome, sbx_crossover

TRUNCATION_RANK_CROWDING = "rank_crowding"
TRUNCATION_TOURNAMENT = "tournament"


class MoeaConfigError(CaravanError):
    pass


@dataclass(frozen=True)
class MoeaConfig:
    generations: int
    p_ini: int = 1000
    p_n: int = 500
    p_archive: int = 1000
    replicates: int = 5
    crossover_rate: float = 1.0
    eta_b: float = 15.0
    mutation_rate: float = 0.01
    eta_p: float = 20.0
    rng_seed: int = 0
    truncation: str = TRUNCATION_RANK_CROWDING

    def __post_init__(self) -> None:
        if self.p_n >= self.p_ini:
            raise MoeaConfigError("p_n must be smaller than p_ini")
        if min(self.p_ini, self.p_n, self.p_archive, self.replicates) < 1:
            raise MoeaConfigError("population sizes and replicates must be >= 1")
        if self.generations < 0:
            raise MoeaConfigError("generations must be >= 0")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise MoeaConfigError(f"{name} must be in [0, 1]")
        if self.truncation not in (TRUNCATION_RANK_CROWDING, TRUNCATION_TOURNAMENT):
            raise MoeaConfigError(f"unknown truncation policy {self.truncation!r}")


@dataclass
class Individual:
    genome: Genome
    objectives: tuple[float, ...] = ()
    rank: int = 0
    crowding: float = 0.0
    parameter_set: object = None
    generation: int = -1  # merge event that archived it


@dataclass
class GenerationStats:
    index: int
    at: float
    completed_total: int
    submitted_total: int
    in_flight: int
    archive_size: int
    offspring_generated: int
    best: tuple[float, ...]


@dataclass
class OptimizationLog:
    evaluated: list[Individual] = field(default_factory=list)
    generations: list[GenerationStats] = field(default_factory=list)
    archive_snapshots: list[np.ndarray] = field(default_factory=list)
    final_archive: list[Individual] = field(default_factory=list)
    discarded: int = 0
    wall_time: float = 0.0

    def rows(self) -> list[tuple]:
        return [
            (ind.generation, *ind.genome.values, *ind.objectives, ind.rank)
            for ind in self.evaluated
        ]


class AsyncNsga2:
    """Driver object; submit/merge state lives inside the engine loop."""

    def __init__(self, config: MoeaConfig, evaluator: str, engine, bounds):
        self.config = config
        self.evaluator = evaluator
        self.engine = engine
        self.bounds = [(float(lo), float(hi)) for lo, hi in bounds]
        self.rng = np.random.default_rng(config.rng_seed)
        self.archive: list[Individual] = []
        self.pool: list[Individual] = []
        self.log = OptimizationLog()
        self.submitted = 0
        self.completed = 0
        self.generations_done = 0
        self.merges = 0
        self._next_seed = 0
        self._pending: dict[int, dict] = {}

    # -- submission -------------------------------------------------------------

    def start(self) -> None:
        for _ in range(self.config.p_ini):
            self._submit(random_genome(self.bounds, self.rng))

    def _submit(self, genome: Genome) -> None:
        seed_base = self._next_seed
        self._next_seed += self.config.replicates
        ps = self.engine.parameter_set_create(
            genome.values, self.evaluator, self.config.replicates, seed_base
        )
        entry = {
            "genome": genome,
            "ps": ps,
            "remaining": set(ps.task_ids()),
            "failed": False,
        }
        self._pending[ps.id] = entry
        self.submitted += 1
        for tid in ps.task_ids():
            self.engine.add_callback(tid, lambda rec, ps_id=ps.id: self._on_run_done(ps_id, rec))

    def _on_run_done(self, ps_id: int, record) -> None:
        entry = self._pending[ps_id]
        entry["remaining"].discard(record.spec.id)
        if record.state is TaskState.FAILED:
            entry["failed"] = True
        if entry["remaining"]:
            return
        del self._pending[ps_id]
        self.completed += 1
        if entry["failed"]:
            # Discard and keep the population flowing with one replacement.
            self.log.discarded += 1
            self._submit(self._replacement_genome())
            return
        objectives = tuple(self.engine.parameter_set_average_results(entry["ps"]))
        reference = self.archive or self.pool
        if reference and len(objectives) != len(reference[0].objectives):
            raise CaravanError(
                f"evaluator produced {len(objectives)} objectives, expected "
                f"{len(reference[0].objectives)}"
            )
        self.pool.append(
            Individual(genome=entry["genome"], objectives=objectives, parameter_set=entry["ps"])
        )
        if len(self.pool) >= self.config.p_n and self.generations_done < self.config.generations:
            self._next_generation()

    def _replacement_genome(self) -> Genome:
        if self.archive:
            return self._breed_one()
        return random_genome(self.bounds, self.rng)

    # -- generation update --------------------------------------------------------

    def _next_generation(self) -> None:
        self.generations_done += 1
        in_flight = self.submitted - self.completed
        self._merge_pool()
        offspring = self._breed(self.config.p_n)
        for child in offspring:
            self._submit(child)
        self._record_generation(in_flight, len(offspring))

    def _merge_pool(self) -> None:
        self.merges += 1
        merged = self.archive + self.pool
        self.pool = []
        self.archive = self._truncate(merged, self.config.p_archive)
        for ind in merged:
            if ind.generation < 0:
                ind.generation = self.merges
                self.log.evaluated.append(ind)
        self.log.archive_snapshots.append(
            np.array([ind.objectives for ind in self.archive], dtype=float)
        )

    def _truncate(self, merged: list[Individual], cap: int) -> list[Individual]:
        fronts = sort_objectives(np.array([ind.objectives for ind in merged], dtype=float))
        for rank, front in enumerate(fronts):
            crowding = crowding_of(np.array([merged[i].objectives for i in front], dtype=float))
            for pos, i in enumerate(front):
                merged[i].rank = rank
                merged[i].crowding = float(crowding[pos])
        if self.config.truncation == TRUNCATION_TOURNAMENT:
            return self._truncate_tournament(merged, cap)
        kept: list[Individual] = []
        for front in fronts:
            if len(kept) + len(front) <= cap:
                kept.extend(merged[i] for i in front)
            else:
                room = cap - len(kept)
                by_crowding = sorted(front, key=lambda i: (-merged[i].crowding, i))
                kept.extend(merged[i] for i in by_crowding[:room])
                break
            if len(kept) == cap:
                break
        return kept

    def _truncate_tournament(self, merged: list[Individual], cap: int) -> list[Individual]:
        """Variant: fill the archive by binary tournaments without replacement."""
        if len(merged) <= cap:
            return list(merged)
        remaining = list(range(len(merged)))
        kept: list[Individual] = []
        while len(kept) < cap:
            pick = self.rng.choice(len(remaining), size=2, replace=False)
            i, j = sorted(int(p) for p in pick)
            a, b = merged[remaining[i]], merged[remaining[j]]
            winner = i if better(a.rank, a.crowding, remaining[i], b.rank, b.crowding, remaining[j]) else j
            kept.append(merged[remaining[winner]])
            remaining.pop(winner)
        return kept

    def _breed_one(self) -> Genome:
        p1 = tournament_select(self.archive, self.rng)
        p2 = tournament_select(self.archive, self.rng)
        c1, _ = sbx_crossover(
            p1.genome, p2.genome, self.config.eta_b, self.config.crossover_rate, self.rng
        )
        return polynomial_mutation(c1, self.config.eta_p, self.config.mutation_rate, self.rng)

    def _breed(self, n: int) -> list[Genome]:
        children: list[Genome] = []
        while len(children) < n:
            p1 = tournament_select(self.archive, self.rng)
            p2 = tournament_select(self.archive, self.rng)
            c1, c2 = sbx_crossover(
                p1.genome, p2.genome, self.config.eta_b, self.config.crossover_rate, self.rng
            )
            children.append(polynomial_mutation(c1, self.config.eta_p, self.config.mutation_rate, self.rng))
            if len(children) < n:  # odd n: the last pair contributes one child
                children.append(
                    polynomial_mutation(c2, self.config.eta_p, self.config.mutation_rate, self.rng)
                )
        return children

    def _record_generation(self, in_flight: int, offspring: int) -> None:
        objectives = np.array([ind.objectives for ind in self.archive], dtype=float)
        self.log.generations.append(
            GenerationStats(
                index=self.merges,
                at=self.engine.transport.now(),
                completed_total=self.completed,
                submitted_total=self.submitted,
                in_flight=in_flight,
                archive_size=len(self.archive),
                offspring_generated=offspring,
                best=tuple(objectives.min(axis=0)),
            )
        )

    # -- finishing ------------------------------------------------------------------

    def finalize(self) -> OptimizationLog:
        if self.pool:
            in_flight = self.submitted - self.completed
            self._merge_pool()
            self._record_generation(in_flight, 0)
        self.log.final_archive = list(self.archive)
        return self.log


def async_optimize(config: MoeaConfig, evaluator: str, engine, bounds) -> OptimizationLog:
    """Run the full asynchronous optimization inside the engine loop.

    ``evaluator`` is a command template for one run (placeholders ``{0}``...
    for genome values and ``{seed}``); it must write the objective vector to
    ``_results.txt``.
    """
    driver = AsyncNsga2(config, evaluator, engine, bounds)
    t0 = time.perf_counter()
    report = engine.server_start(driver.start)
    if report.user_error is not None:
        raise CaravanError(f"optimization driver failed: {report.user_error}")
    if report.worker_errors:
        raise CaravanError(f"optimization callbacks failed: {report.worker_errors[:3]}")
    log = driver.finalize()
    log.wall_time = time.perf_counter() - t0
    return log


def write_log_csv(log: OptimizationLog, prefix: str) -> tuple[str, str]:
    """Write per-individual and per-generation CSVs; returns the two paths."""
    if not log.evaluated:
        raise CaravanError("refusing to write an empty optimization log")
    n_genes = len(log.evaluated[0].genome.values)
    n_obj = len(log.evaluated[0].objectives)
    individuals_path = f"{prefix}_individuals.csv"
    generations_path = f"{prefix}_generations.csv"
    with open(individuals_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["generation"]
            + [f"gene{i}" for i in range(n_genes)]
            + [f"objective{i}" for i in range(n_obj)]
            + ["rank"]
        )
        for row in log.rows():
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    with open(generations_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "generation",
                "at",
                "completed_total",
                "submitted_total",
                "in_flight",
                "archive_size",
                "offspring_generated",
            ]
            + [f"best{i}" for i in range(n_obj)]
        )
        for g in log.generations:
            writer.writerow(
                [
                    g.index,
                    repr(g.at),
                    g.completed_total,
                    g.submitted_total,
                    g.in_flight,
                    g.archive_size,
                    g.offspring_generated,
                ]
                + [repr(v) for v in g.best]
            )
    return individuals_path, generations_path
