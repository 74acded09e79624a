"""Cross-component sweep: 100 demo-simulator runs, each yielding 3 objectives.

Expects CARAVAN_DEMO_CITY in the environment (inherited by the simulator via
the host's consumers) and the demo simulator command in SWEEP_SIM_CMD.
"""

import os
import random
import sys

from caravan_client import Server, Task

sim = os.environ["SWEEP_SIM_CMD"]
rng = random.Random(7)

with Server.start() as server:
    tasks = []
    for i in range(100):
        ratios = " ".join("%.4f" % rng.random() for _ in range(16))
        dests = " ".join("%d %d" % (rng.randrange(4), rng.randrange(4)) for _ in range(16))
        tasks.append(Task.create(f"{sim} {ratios} {dests} {i}"))
    server.await_all_tasks(tasks)
    bad = [t.id for t in tasks if len(t.results) != 3]
    if bad:
        print(f"tasks without 3-element results: {bad}", file=sys.stderr)
        raise SystemExit(3)
print("sweep ok", file=sys.stderr)
