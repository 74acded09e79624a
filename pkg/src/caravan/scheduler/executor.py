"""External-process task execution.

Each task runs via the platform shell in its own working directory
``<work_root>/w<10-digit id>``, with stdout/stderr captured to files and the
optional ``_results.txt`` parsed into a list of floats. Directories are
retained after the run: simulation outputs are the user's data.
"""

from __future__ import annotations

import os
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

from ..core import CaravanError, TaskSpec

RESULTS_FILENAME = "_results.txt"
STDOUT_FILENAME = "_stdout.txt"
STDERR_FILENAME = "_stderr.txt"
SPAWN_FAILURE_RC = -1
TASK_ID_ENV = "CARAVAN_TASK_ID"


class ResultsParseError(CaravanError):
    """``_results.txt`` contained a non-numeric token."""


class WorkDirError(CaravanError):
    """The task working directory could not be created."""


@dataclass(slots=True)
class ExecutionOutcome:
    rc: int
    results: list[float] = field(default_factory=list)
    workdir: Path | None = None
    stdout_path: Path | None = None
    stderr_path: Path | None = None
    warning: str | None = None


def task_workdir(work_root: Path, spec: TaskSpec) -> Path:
    return Path(work_root) / f"w{int(spec.id):010d}"


def parse_results(path: Path | str) -> list[float]:
    """Parse whitespace-separated floats from a results file.

    A missing file yields an empty list (the file is optional); a non-numeric
    token raises ResultsParseError.
    """
    path = Path(path)
    if not path.exists():
        return []
    values = []
    for token in path.read_text(encoding="utf-8").split():
        try:
            values.append(float(token))
        except ValueError:
            raise ResultsParseError(f"non-numeric token {token!r} in {path}") from None
    return values


def execute_task(spec: TaskSpec, work_root: Path | str, env: dict[str, str] | None = None) -> ExecutionOutcome:
    """Run one task command in a fresh working directory.

    The command inherits the caller's environment plus CARAVAN_TASK_ID. A
    spawn-level failure is reported as rc = -1; a malformed results file does
    not fail the task, it clears results and attaches a warning.
    """
    work_root = Path(work_root)
    workdir = task_workdir(work_root, spec)
    try:
        workdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise WorkDirError(f"cannot create task directory {workdir}: {exc}") from exc

    stdout_path = workdir / STDOUT_FILENAME
    stderr_path = workdir / STDERR_FILENAME
    child_env = dict(os.environ if env is None else env)
    child_env[TASK_ID_ENV] = str(int(spec.id))

    try:
        with open(stdout_path, "wb") as out, open(stderr_path, "wb") as err:
            proc = subprocess.run(
                spec.command,
                shell=True,
                cwd=workdir,
                stdout=out,
                stderr=err,
                env=child_env,
            )
        rc = proc.returncode
    except OSError as exc:
        return ExecutionOutcome(
            rc=SPAWN_FAILURE_RC,
            workdir=workdir,
            stdout_path=stdout_path,
            stderr_path=stderr_path,
            warning=f"spawn failure: {exc}",
        )

    warning = None
    try:
        results = parse_results(workdir / RESULTS_FILENAME)
    except ResultsParseError as exc:
        results = []
        warning = str(exc)

    return ExecutionOutcome(
        rc=rc,
        results=results,
        workdir=workdir,
        stdout_path=stdout_path,
        stderr_path=stderr_path,
        warning=warning,
    )
