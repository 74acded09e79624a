from hypothesis import given
from hypothesis import strategies as st

from caravan.core import TaskRecord, TaskSpec, TaskState
from caravan.messages import (
    Dispatch,
    EnqueueTasks,
    Hello,
    NoMoreTasks,
    RequestTasks,
    ResultBatch,
    TaskDone,
    TaskStarted,
    WorkerDeath,
    decode_message,
    encode_message,
)

finite = st.floats(allow_nan=False, allow_infinity=False)


def specs(ids=st.integers(0, 2**32)):
    return st.builds(
        TaskSpec,
        id=ids,
        command=st.text(min_size=1, max_size=40),
        input=st.tuples() | st.tuples(finite) | st.tuples(finite, finite),
    )


def records():
    return st.builds(
        TaskRecord,
        spec=specs(),
        state=st.sampled_from([TaskState.FINISHED, TaskState.FAILED]),
        rc=st.integers(-1, 255),
        results=st.lists(finite, max_size=4),
        start_at=finite,
        finish_at=finite,
        place=st.integers(1, 1000),
        warning=st.none() | st.text(max_size=20),
    )


messages = st.one_of(
    st.builds(EnqueueTasks, tasks=st.lists(specs(), max_size=4).map(tuple)),
    st.builds(RequestTasks, buffer_id=st.integers(1, 400), capacity=st.integers(1, 10**6)),
    st.builds(Dispatch, task=specs()),
    st.builds(TaskStarted, task_id=st.integers(0, 2**32), worker=st.integers(1, 10**5), start_at=finite),
    st.builds(TaskDone, record=records()),
    st.builds(
        ResultBatch,
        records=st.lists(records(), min_size=1, max_size=3).map(tuple),
        flush_reason=st.sampled_from(["size_threshold", "time_threshold", "shutdown"]),
    ),
    st.just(NoMoreTasks()),
    st.builds(Hello, worker=st.integers(0, 10**5)),
    st.builds(WorkerDeath, worker=st.integers(1, 10**5)),
)


@given(messages)
def test_codec_roundtrip_identity(msg):
    assert decode_message(encode_message(msg)) == msg


def test_result_batch_must_be_nonempty():
    import pytest

    with pytest.raises(ValueError):
        ResultBatch(records=(), flush_reason="shutdown")


def test_unknown_type_rejected():
    import pytest

    with pytest.raises(ValueError):
        decode_message(b'{"type":"nope"}')
    with pytest.raises(ValueError):
        decode_message(b"[1,2]")
