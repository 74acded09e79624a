"""Single driver binary: parameter sweeps, scheduling benchmarks, the MOEA
demo, and hosting an external engine over stdio.

Exit codes: 0 ok, 1 task failures or abnormal termination, 64 usage error,
65 configuration contradiction.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import Case, Workload, emit_report, run_benchmark
from .core import render_command
from .demo import default_city, demo_task_fn, evaluator_template, genome_bounds, load_city, save_city
from .demo.simulator import CITY_ENV
from .engine import Engine
from .moea import MoeaConfig, async_optimize, write_log_csv
from .scheduler import start_topology, transport_inprocess
from .scheduler.tcp import transport_tcp
from .stdio_bridge import bridge_run
from .topology import Topology

EXIT_OK = 0
EXIT_TASK_FAILURES = 1
EXIT_USAGE = 64
EXIT_CONFIG = 65

CONFIG_KEYS = {
    "transport", "consumers", "fanout", "work_root", "seed", "out", "virtual",
    "listen", "case", "scale", "n_total", "svg", "cmd", "values", "engine_cmd",
    "p_ini", "p_n", "p_archive", "generations", "replicates", "city",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


class ConfigContradiction(Exception):
    pass


def _common_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--transport", choices=["inproc", "tcp"], default="inproc",
                        help="message transport between scheduler roles")
    parser.add_argument("--consumers", type=int, default=4, help="number of consumer workers")
    parser.add_argument("--fanout", type=int, default=384,
                        help="consumers served per buffer process")
    parser.add_argument("--work-root", default="caravan_work",
                        help="directory receiving one w<id> subdirectory per task")
    parser.add_argument("--seed", type=int, default=0, help="random seed")
    parser.add_argument("--out", default="caravan_out", help="output path prefix")
    parser.add_argument("--virtual", action="store_true",
                        help="simulate task durations in deterministic virtual time")
    parser.add_argument("--listen", default=None, metavar="HOST:PORT",
                        help="producer listen address (tcp transport)")
    parser.add_argument("--config", default=None, metavar="FILE",
                        help="key=value file supplying flag defaults (flags override)")


def build_parser() -> _Parser:
    parser = _Parser(prog="caravan", description=__doc__)
    parser.add_argument("--version", action="version", version=f"caravan {__version__}")
    sub = parser.add_subparsers(dest="mode", required=True)

    p_sweep = sub.add_parser("sweep", parents=[], help="run one task per input value",
                             description="Run a command template once per value; {0} is the value.")
    _common_options(p_sweep)
    p_sweep.add_argument("--cmd", required=True, help="command template with {0} placeholder")
    p_sweep.add_argument("--values", required=True, help="comma-separated numeric values")

    p_bench = sub.add_parser("bench", help="run a scheduling benchmark",
                             description="Generate a dummy sleep workload and report the job filling rate.")
    _common_options(p_bench)
    p_bench.add_argument("--case", choices=["tc1", "tc2", "tc3"], required=True)
    p_bench.add_argument("--scale", type=float, default=0.001,
                         help="multiplier shrinking sampled durations to desk scale")
    p_bench.add_argument("--n-total", type=int, default=0,
                         help="total tasks (default: 100 per consumer)")
    p_bench.add_argument("--svg", action="store_true", help="also emit a Gantt SVG")

    p_moea = sub.add_parser("moea-demo", help="optimize the evacuation demo",
                            description="Asynchronous NSGA-II over the evacuation-planning surrogate.")
    _common_options(p_moea)
    p_moea.add_argument("--p-ini", type=int, default=64, help="initial population")
    p_moea.add_argument("--p-n", type=int, default=32, help="individuals replaced per generation")
    p_moea.add_argument("--p-archive", type=int, default=64, help="archive capacity")
    p_moea.add_argument("--generations", type=int, default=20)
    p_moea.add_argument("--replicates", type=int, default=1,
                        help="independent runs averaged per individual")
    p_moea.add_argument("--city", default=None, metavar="FILE",
                        help="city model JSON (default: built-in desk-scale city)")

    p_serve = sub.add_parser("serve", help="host an external search engine",
                             description="Drive the scheduler from a child process over stdin/stdout.")
    _common_options(p_serve)
    p_serve.add_argument("--engine-cmd", required=True,
                         help="command launching the external engine process")
    return parser


def _load_config_file(path: str) -> dict:
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigContradiction(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise ConfigContradiction(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    for key in ("consumers", "fanout", "seed", "p_ini", "p_n", "p_archive",
                "generations", "replicates", "n_total"):
        if key in values:
            values[key] = int(values[key])
    if "scale" in values:
        values["scale"] = float(values["scale"])
    for key in ("virtual", "svg"):
        if key in values:
            values[key] = values[key].lower() in ("1", "true", "yes", "on")
    return values


def _parse_listen(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigContradiction(f"--listen must be HOST:PORT, got {text!r}")
    return host or "127.0.0.1", int(port)


def _make_topology_and_transport(args, task_fn=None):
    topology = Topology(num_consumers=args.consumers, consumers_per_buffer=args.fanout)
    if args.transport == "tcp":
        if args.virtual:
            raise ConfigContradiction("--virtual requires the inproc transport")
        if not args.listen:
            raise ConfigContradiction("tcp transport requires --listen HOST:PORT")
        transport = transport_tcp(topology, _parse_listen(args.listen), work_root=args.work_root)
    else:
        transport = transport_inprocess(
            topology, virtual=args.virtual, task_fn=task_fn, work_root=args.work_root
        )
    return topology, transport


def _report_exit(report) -> int:
    if report.failed or report.abnormal or report.user_error or report.worker_errors:
        return EXIT_TASK_FAILURES
    return EXIT_OK


def _run_sweep(args) -> int:
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigContradiction(f"--values must be comma-separated numbers: {exc}")
    topology, transport = _make_topology_and_transport(args)
    sched = start_topology(topology, transport)
    engine = Engine(sched)

    def program():
        for value in values:
            engine.task_create(render_command(args.cmd, [value], args.seed), input=(value,))

    report = engine.server_start(program)
    print(f"sweep: {report.finished} finished, {report.failed} failed "
          f"in {report.wall_time:.2f}s")
    return _report_exit(report)


def _run_bench(args) -> int:
    topology, transport = _make_topology_and_transport(args)
    workload = Workload(
        kind=Case(args.case),
        n_processes=args.consumers,
        n_total=args.n_total,
        time_scale=args.scale,
    )
    sched = start_topology(topology, transport)
    engine = Engine(sched)
    report = run_benchmark(workload, topology, engine, seed=args.seed)
    files = emit_report(report, args.out, svg=args.svg)
    print(f"bench {args.case}: {report.n_tasks} tasks on {report.num_consumers} consumers, "
          f"r_consumers={report.r_consumers:.4f} r_all={report.r_all:.4f} "
          f"makespan={report.makespan:.3f}s")
    for path in files:
        print(f"  wrote {path}")
    return EXIT_OK if report.valid else EXIT_TASK_FAILURES


def _run_moea_demo(args) -> int:
    city = load_city(args.city) if args.city else default_city()
    Path(args.work_root).mkdir(parents=True, exist_ok=True)
    city_path = Path(args.work_root) / "city.json"
    save_city(city, city_path)
    os.environ[CITY_ENV] = str(city_path)

    task_fn = demo_task_fn(city) if args.virtual else None
    topology, transport = _make_topology_and_transport(args, task_fn=task_fn)
    sched = start_topology(topology, transport)
    engine = Engine(sched)
    config = MoeaConfig(
        p_ini=args.p_ini,
        p_n=args.p_n,
        p_archive=args.p_archive,
        generations=args.generations,
        replicates=args.replicates,
        rng_seed=args.seed,
    )
    log = async_optimize(config, evaluator_template(city), engine, genome_bounds(city))
    ind_path, gen_path = write_log_csv(log, args.out)
    front = np.array([ind.objectives for ind in log.final_archive if ind.rank == 0])
    corr = np.corrcoef(front[:, 0], front[:, 1])[0, 1] if len(front) > 2 else float("nan")
    print(f"moea-demo: {len(log.evaluated)} individuals evaluated over "
          f"{len(log.generations)} merges; final archive {len(log.final_archive)}, "
          f"front-0 size {len(front)}, corr(f1,f2)={corr:.3f}")
    print(f"  wrote {ind_path}\n  wrote {gen_path}")
    return EXIT_OK


def _run_serve(args) -> int:
    topology, transport = _make_topology_and_transport(args)
    sched = start_topology(topology, transport)
    report = bridge_run(args.engine_cmd, sched)
    print(f"serve: {report.finished} finished, {report.failed} failed, "
          f"abnormal={report.abnormal}")
    return _report_exit(report)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    # resolve --config before the real parse so flags override file values
    probe = _Parser(add_help=False)
    probe.add_argument("--config", default=None)
    known, _ = probe.parse_known_args(argv)
    try:
        if known.config:
            parser.set_defaults(**_load_config_file(known.config))
        args = parser.parse_args(argv)
        runner = {
            "sweep": _run_sweep,
            "bench": _run_bench,
            "moea-demo": _run_moea_demo,
            "serve": _run_serve,
        }[args.mode]
        return runner(args)
    except ConfigContradiction as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
