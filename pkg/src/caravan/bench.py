"""Scheduling benchmarks: dummy sleep workloads and the job filling rate.

Three cases: TC1 submits every task upfront with near-uniform durations;
TC2 the same with heavy-tailed (power law, exponent -2) durations; TC3
starts with a quarter of the tasks and chains one new task per completion,
so load depends on results arriving. The filling rate is total task busy
time divided by makespan times process count: 1.0 means perfect packing.

Durations are in seconds and shrunk by ``time_scale`` for desk-scale runs;
tasks are real spawned sleep processes on the threaded transport and
simulated sleeps on the virtual one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .core import CaravanError, TaskRecord, render_command
from .topology import Topology

T_MIN = 5.0
T_MAX = 100.0
UNIFORM_LOW = 20.0
UNIFORM_HIGH = 30.0


class Case(Enum):
    TC1 = "tc1"
    TC2 = "tc2"
    TC3 = "tc3"


class BenchmarkError(CaravanError):
    pass


@dataclass(frozen=True)
class Workload:
    kind: Case
    n_processes: int
    n_total: int = 0  # 0 -> the default 100 tasks per process
    time_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.n_processes < 1:
            raise BenchmarkError("n_processes must be >= 1")
        if self.n_total == 0:
            object.__setattr__(self, "n_total", 100 * self.n_processes)
        if self.n_total < 1:
            raise BenchmarkError("n_total must be >= 1")
        if self.time_scale <= 0:
            raise BenchmarkError("time_scale must be positive")

    @property
    def initial_batch(self) -> int:
        return self.n_total // 4 if self.kind is Case.TC3 else self.n_total


def duration_from_uniform(kind: Case, u: float) -> float:
    """Map one uniform [0,1] draw to a task duration in seconds.

    TC1: uniform on [20, 30]. TC2/TC3: inverse transform of the power-law
    density ~ t^-2 truncated to [5, 100]:
    t = 1 / (1/t_min - u * (1/t_min - 1/t_max)).
    """
    if kind is Case.TC1:
        return UNIFORM_LOW + u * (UNIFORM_HIGH - UNIFORM_LOW)
    return 1.0 / (1.0 / T_MIN - u * (1.0 / T_MIN - 1.0 / T_MAX))


def sample_duration(kind: Case, rng: np.random.Generator) -> float:
    return duration_from_uniform(kind, rng.random())


def power_law_mean() -> float:
    """Analytic mean of the truncated t^-2 distribution."""
    return T_MIN * T_MAX * np.log(T_MAX / T_MIN) / (T_MAX - T_MIN)


@dataclass
class FillingRateReport:
    r_consumers: float
    r_all: float
    numerator: float
    makespan: float
    n_tasks: int
    num_consumers: int
    num_processes_all: int
    per_worker_busy: dict[int, float] = field(default_factory=dict)
    timeline: list[tuple[int, int, float, float]] = field(default_factory=list)
    valid: bool = True


def filling_rate_report(
    records: list[TaskRecord], topology: Topology, valid: bool = True
) -> FillingRateReport:
    """Eq.-style filling rate from completed task records.

    Reports two denominators: consumers only (primary — buffers and the
    producer execute no tasks) and all processes (consumers + buffers +
    producer) for comparability with process-counted figures.
    """
    if not records:
        raise BenchmarkError("no completed tasks; nothing to report")
    timeline = sorted(
        (int(r.spec.id), int(r.place), float(r.start_at), float(r.finish_at)) for r in records
    )
    return _report_from_timeline(timeline, topology, valid)


def _report_from_timeline(timeline, topology: Topology, valid: bool = True) -> FillingRateReport:
    starts = [row[2] for row in timeline]
    ends = [row[3] for row in timeline]
    numerator = float(sum(e - s for s, e in zip(starts, ends)))
    makespan = max(ends) - min(starts)
    c = topology.num_consumers
    n_all = topology.num_consumers + topology.num_buffers + 1
    busy: dict[int, float] = {}
    for _, worker, start, end in timeline:
        busy[worker] = busy.get(worker, 0.0) + (end - start)
    if makespan == 0:
        raise BenchmarkError("zero makespan; timestamps are degenerate")
    return FillingRateReport(
        r_consumers=numerator / (makespan * c),
        r_all=numerator / (makespan * n_all),
        numerator=numerator,
        makespan=makespan,
        n_tasks=len(timeline),
        num_consumers=c,
        num_processes_all=n_all,
        per_worker_busy=busy,
        timeline=timeline,
        valid=valid,
    )


SLEEP_TEMPLATE = "sleep {0}"


def run_benchmark(workload: Workload, topology: Topology, engine, seed: int = 0) -> FillingRateReport:
    """Submit the workload through the engine, drain, and report.

    TC1/TC2 submit all tasks upfront; TC3 submits a quarter and chains one
    new task per completion until the total is reached.
    """
    rng = np.random.default_rng(seed)
    created = {"n": 0}

    def make_task():
        t = sample_duration(workload.kind, rng) * workload.time_scale
        created["n"] += 1
        return engine.task_create(render_command(SLEEP_TEMPLATE, [t], 0), input=(t,))

    def chain(_record):
        if created["n"] < workload.n_total:
            engine.add_callback(make_task(), chain)

    def program():
        if workload.kind is Case.TC3:
            for _ in range(workload.initial_batch):
                engine.add_callback(make_task(), chain)
        else:
            for _ in range(workload.n_total):
                make_task()

    report = engine.server_start(program)
    records = [r for r in engine.records.values() if r.complete]
    return filling_rate_report(records, topology, valid=report.failed == 0)


# -- reporting ---------------------------------------------------------------------


def emit_report(report: FillingRateReport, path_prefix: str, svg: bool = False) -> list[str]:
    """Write timeline and summary CSVs (and optionally a Gantt SVG)."""
    if not report.timeline:
        raise BenchmarkError("refusing to emit an empty timeline")
    prefix = Path(path_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    timeline_path = f"{path_prefix}_timeline.csv"
    summary_path = f"{path_prefix}_summary.csv"
    with open(timeline_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task", "worker", "start", "end"])
        for task, worker, start, end in report.timeline:
            writer.writerow([task, worker, repr(start), repr(end)])
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["r_consumers", "r_all", "n_tasks", "num_consumers", "makespan"])
        writer.writerow(
            [
                repr(report.r_consumers),
                repr(report.r_all),
                report.n_tasks,
                report.num_consumers,
                repr(report.makespan),
            ]
        )
    written = [timeline_path, summary_path]
    if svg:
        svg_path = f"{path_prefix}_gantt.svg"
        _write_gantt_svg(report, svg_path)
        written.append(svg_path)
    return written


def read_timeline_csv(path: str) -> list[tuple[int, int, float, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        return [(int(t), int(w), float(s), float(e)) for t, w, s, e in reader]


def recompute_from_timeline(path: str, topology: Topology) -> FillingRateReport:
    """Independent recomputation of the filling rate from an emitted CSV."""
    return _report_from_timeline(read_timeline_csv(path), topology)


def _write_gantt_svg(report: FillingRateReport, path: str) -> None:
    workers = sorted({row[1] for row in report.timeline})
    row_of = {w: i for i, w in enumerate(workers)}
    t0 = min(row[2] for row in report.timeline)
    span = report.makespan or 1.0
    width, row_height, margin = 900.0, 14.0, 4.0
    height = len(workers) * (row_height + margin) + margin
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    for task, worker, start, end in report.timeline:
        x = (start - t0) / span * width
        w = max((end - start) / span * width, 0.5)
        y = row_of[worker] * (row_height + margin) + margin
        parts.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{row_height:.2f}" '
            f'fill="hsl({(task * 47) % 360},60%,60%)"><title>task {task}</title></rect>'
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts), encoding="utf-8")
