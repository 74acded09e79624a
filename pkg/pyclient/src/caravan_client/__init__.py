"""Client SDK for external search engines driven by a caravan host process.

The host launches this process with the newline-delimited JSON protocol wired
to stdin/stdout: the client writes commands ({"cmd":"create_task",...},
{"cmd":"flush"}, {"cmd":"finish"}) and reads events ({"event":"task_created"},
{"event":"task_done"}, {"event":"exit"}, {"event":"protocol_error"}).

On top of that wire this module reconstructs the task-orchestration surface:
create tasks, register completion callbacks, await single tasks or sets, and
spawn cooperative activities. Everything is single-context: exactly one piece
of user code runs at a time, and activities interleave only at await points.

    from caravan_client import Server, Task

    with Server.start():
        for i in range(10):
            Task.create("echo hello caravan %d" % i)

Set CARAVAN_CLIENT_TRANSCRIPT=<prefix> to record the session's sent and
received bytes to <prefix>.out and <prefix>.in.
"""

from .client import ClientError, Server, Task, client_session

__version__ = "0.1.0"

__all__ = ["ClientError", "Server", "Task", "client_session", "__version__"]
