"""ParameterSet/Run convenience layer for Monte Carlo replication.

A ParameterSet is one point in parameter space evaluated by several runs that
differ only in their random seed; results are averaged element-wise.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import count

from ..core import CaravanError, TaskId, TaskState, render_command

_ps_ids = count(0)


class ParameterSetError(CaravanError):
    pass


@dataclass(frozen=True)
class Run:
    seed: int
    task: TaskId


@dataclass(frozen=True)
class ParameterSet:
    id: int
    params: tuple[float, ...]
    runs: tuple[Run, ...]

    def task_ids(self) -> list[TaskId]:
        return [run.task for run in self.runs]


def create_parameter_set(engine, params, command_template: str, num_runs: int, seed_base: int = 0) -> ParameterSet:
    """Create num_runs tasks with seeds seed_base..seed_base+num_runs-1.

    Identical params in two calls still yield two distinct ParameterSets.
    """
    if num_runs < 1:
        raise ParameterSetError("num_runs must be >= 1")
    params = tuple(float(p) for p in params)
    runs = []
    for i in range(num_runs):
        seed = seed_base + i
        command = render_command(command_template, params, seed)
        runs.append(Run(seed=seed, task=engine.task_create(command, input=params)))
    return ParameterSet(id=next(_ps_ids), params=params, runs=tuple(runs))


def average_results(engine, ps: ParameterSet) -> list[float]:
    """Element-wise mean of the runs' results; all runs must have finished
    with equal-length result vectors."""
    vectors = []
    width = None
    for run in ps.runs:
        record = engine.record(run.task)
        if record.state is not TaskState.FINISHED:
            raise ParameterSetError(
                f"run seed={run.seed} task={run.task} is {record.state.value}, not finished"
            )
        if width is None:
            width = len(record.results)
        elif len(record.results) != width:
            raise ParameterSetError(
                f"run seed={run.seed} task={run.task} has {len(record.results)} results, expected {width}"
            )
        vectors.append(record.results)
    n = len(vectors)
    return [sum(col) / n for col in zip(*vectors)] if width else []
