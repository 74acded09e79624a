"""Ten independent echo tasks."""

from caravan_client import Server, Task

with Server.start():
    for i in range(10):
        Task.create("echo hello caravan %d" % i)
