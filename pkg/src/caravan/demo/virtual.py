"""In-process demo evaluator for virtual-time runs: same objectives and noise
model as the simulator executable, without spawning processes."""

from __future__ import annotations

import random

from ..core import TaskSpec
from ..scheduler import VirtualOutcome
from .city import CityModel, evaluate, plan_from_values
from .simulator import NOISE_SD_FRACTION


def demo_task_fn(city: CityModel, time_scale: float = 0.0, noisy: bool = True):
    """Virtual executor evaluating demo genomes carried in spec.input.

    The replicate seed is the last command-line token; the simulated duration
    is time_scale * f1, mirroring the executable's sleep.
    """

    def task_fn(spec: TaskSpec) -> VirtualOutcome:
        plan = plan_from_values(spec.input, city)
        f1, f2, f3 = evaluate(plan, city)
        if noisy and f1 > 0:
            seed = int(spec.command.split()[-1])
            f1 += random.Random(seed).gauss(0.0, NOISE_SD_FRACTION * f1)
        return VirtualOutcome(duration=time_scale * max(f1, 0.0), results=(f1, f2, f3))

    return task_fn
