"""Three concurrent activities, each running five tasks sequentially."""

from caravan_client import Server, Task

with Server.start() as server:

    def run_sequential_tasks(n):
        for t in range(5):
            task = Task.create("sleep 0.%d" % (n + 1))
            server.await_task(task)

    for n in range(3):
        server.async_(lambda n=n: run_sequential_tasks(n))
