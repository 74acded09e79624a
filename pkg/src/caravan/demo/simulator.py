"""Standalone evacuation-surrogate simulator.

Honors the scheduler's simulator contract: genome values and a seed as
command line arguments, outputs in the current directory, objectives in
``_results.txt``. The city model is read from the file named by the
CARAVAN_DEMO_CITY environment variable. Seeded Gaussian noise (sd = 1% of
f1) is added to f1 only, so replicate averaging has something to average;
f2 and f3 are exact. Set CARAVAN_DEMO_TIMESCALE to make each run sleep
time_scale * f1 seconds, mimicking duration-dependent scheduling load.

Exit codes: 0 ok, 1 bad argument arity, 2 unreadable city model.
"""

from __future__ import annotations

import os
import random
import sys
import time
from pathlib import Path

from .city import DemoError, evaluate, load_city, plan_from_values

CITY_ENV = "CARAVAN_DEMO_CITY"
TIMESCALE_ENV = "CARAVAN_DEMO_TIMESCALE"
NOISE_SD_FRACTION = 0.01


def _render(value: float) -> str:
    text = repr(float(value))
    return text[:-2] if text.endswith(".0") else text


def run(argv: list[str]) -> int:
    if len(argv) < 4 or (len(argv) - 1) % 3 != 0:
        print("usage: caravan-demo-sim <3K genome values> <seed>", file=sys.stderr)
        return 1
    city_path = os.environ.get(CITY_ENV)
    if not city_path:
        print(f"{CITY_ENV} must name a city model file", file=sys.stderr)
        return 2
    try:
        city = load_city(city_path)
    except DemoError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    if len(argv) != 3 * city.num_subareas + 1:
        print(
            f"expected {3 * city.num_subareas} genome values plus a seed, got {len(argv)} args",
            file=sys.stderr,
        )
        return 1
    try:
        values = [float(v) for v in argv[:-1]]
        seed = int(argv[-1])
        plan = plan_from_values(values, city)
    except (ValueError, DemoError) as exc:
        print(str(exc), file=sys.stderr)
        return 1

    f1, f2, f3 = evaluate(plan, city)
    noise = random.Random(seed).gauss(0.0, NOISE_SD_FRACTION * f1) if f1 > 0 else 0.0
    f1_noisy = f1 + noise

    Path("_results.txt").write_text(
        f"{_render(f1_noisy)} {_render(f2)} {_render(f3)}\n", encoding="utf-8"
    )
    lines = [
        f"seed: {seed}",
        f"f1 (completion minutes, noisy): {_render(f1_noisy)}",
        f"f2 (plan complexity): {_render(f2)}",
        f"f3 (excess evacuees): {_render(f3)}",
        "subarea  pop  ratio  primary  secondary",
    ]
    for i, (r, (p, s)) in enumerate(zip(plan.ratios, plan.destinations)):
        lines.append(f"{i:7d}  {city.populations[i]:3d}  {r:5.3f}  {p:7d}  {s:9d}")
    Path("plan_summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    time_scale = float(os.environ.get(TIMESCALE_ENV, "0") or 0)
    if time_scale > 0:
        time.sleep(time_scale * max(f1_noisy, 0.0))
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
