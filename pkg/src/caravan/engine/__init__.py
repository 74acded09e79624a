"""Search-engine runtime: event loop, callbacks, awaits, activities."""

from .engine import DeadlockError, Engine, EngineStateError, ExitReport, server_start
from .parameter_set import ParameterSet, ParameterSetError, Run

__all__ = [
    "DeadlockError",
    "Engine",
    "EngineStateError",
    "ExitReport",
    "ParameterSet",
    "ParameterSetError",
    "Run",
    "server_start",
]
