"""Ten initial tasks, each completion creating one follow-up task."""

from caravan_client import Server, Task

with Server.start():
    for i in range(10):
        task = Task.create("sleep 0.0%d" % (i + 1))
        task.add_callback(lambda t, ii=i: Task.create("sleep 0.00%d" % (ii + 1)))
