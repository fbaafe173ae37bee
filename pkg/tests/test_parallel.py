import os
import subprocess
import sys
import threading

import pytest

from parasplit import parallel


def test_results_in_submission_order():
    with parallel.budget(4):
        out = parallel.parallel_map(lambda x: x * x, range(50))
    assert out == [x * x for x in range(50)]


def test_nested_work_runs_serially():
    seen = []

    def inner(x):
        seen.append((threading.current_thread().name, parallel.in_worker()))
        return x

    def outer(x):
        return sum(parallel.parallel_map(inner, range(3)))

    with parallel.budget(3):
        assert parallel.parallel_map(outer, range(4)) == [3] * 4
    # every inner call ran on the outer worker's own thread
    assert all(flag for _, flag in seen)
    assert not parallel.in_worker()


def test_budget_one_stays_on_caller_thread():
    names = parallel.parallel_map(lambda _: threading.current_thread().name, range(3), 1)
    assert set(names) == {threading.current_thread().name}


def test_budget_context_restores():
    old = parallel.thread_budget()
    with parallel.budget(5):
        assert parallel.thread_budget() == 5
    assert parallel.thread_budget() == old
    with parallel.budget(None):
        assert parallel.thread_budget() == old


@pytest.mark.parametrize("n", [0, -1, 1.5])
def test_invalid_budget(n):
    with pytest.raises(ValueError):
        parallel.set_thread_budget(n)


def test_exceptions_propagate():
    def boom(x):
        if x == 2:
            raise RuntimeError("bad item")
        return x

    with parallel.budget(2), pytest.raises(RuntimeError, match="bad item"):
        parallel.parallel_map(boom, range(4))


@pytest.mark.parametrize("value,ok", [("3", True), ("zero", False), ("0", False)])
def test_env_budget(value, ok):
    env = dict(os.environ, PARASPLIT_THREADS=value)
    out = subprocess.run([sys.executable, "-c",
                          "from parasplit import parallel; print(parallel.thread_budget())"],
                         env=env, capture_output=True, text=True)
    if ok:
        assert out.stdout.strip() == value
    else:
        assert out.returncode != 0 and "PARASPLIT_THREADS" in out.stderr


def test_chunks_cover_range():
    assert parallel.chunks(10, 3) == [(0, 3), (3, 6), (6, 10)]
    assert parallel.chunks(2, 5) == [(0, 1), (1, 2)]
