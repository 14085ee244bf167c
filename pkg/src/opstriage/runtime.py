"""Execution substrate: clock, task spawning, and wait cells.

Three interchangeable runtimes drive the same synchronous agent code:

* ``WallRuntime``    — real threads and the wall clock (serve mode).
* ``SimRuntime``     — virtual-time scheduler for deterministic replay. User
  code runs on real threads but exactly one is runnable at any instant; the
  scheduler advances simulated time only when every task is asleep or waiting,
  and always resumes work in (wake_time, sequence) order.
* ``InlineRuntime``  — no concurrency at all; ``sleep`` advances a manual
  clock and ``spawn`` runs the task body immediately. Used by the single-step
  workflow driver and by bulk property tests.
"""

from __future__ import annotations

import heapq
import math
import threading
import time
from typing import Any, Callable, List, Optional

from .errors import RuntimeDeadlock

# Returned by WaitCell.wait() when the timeout elapses before set().
TIMEOUT = object()


def ms(seconds: float) -> int:
    """Duration in seconds -> whole milliseconds, rounded up so a caller told
    to wait ``retry_after`` never wakes before the granted instant."""
    return int(math.ceil(seconds * 1000.0 - 1e-9))


class Task:
    def join(self, timeout: Optional[float] = None) -> bool:
        raise NotImplementedError

    @property
    def result(self) -> Any:
        raise NotImplementedError


class WaitCell:
    def set(self, value: Any = None) -> None:
        raise NotImplementedError

    def wait(self, timeout: Optional[float] = None) -> Any:
        raise NotImplementedError

    def peek(self) -> Any:
        raise NotImplementedError

    @property
    def is_set(self) -> bool:
        raise NotImplementedError


class Runtime:
    def now_ms(self) -> int:
        raise NotImplementedError

    def sleep(self, seconds: float) -> None:
        raise NotImplementedError

    def spawn(self, fn: Callable[[], Any], name: str = "task") -> Task:
        raise NotImplementedError

    def new_cell(self) -> WaitCell:
        raise NotImplementedError


# --------------------------------------------------------------------------
# Wall-clock runtime
# --------------------------------------------------------------------------

class _WallTask(Task):
    def __init__(self, fn: Callable[[], Any], name: str):
        self._result: Any = None
        self.error: Optional[BaseException] = None

        def runner() -> None:
            try:
                self._result = fn()
            except BaseException as exc:  # surfaced via .result
                self.error = exc

        self._thread = threading.Thread(target=runner, name=name, daemon=True)
        self._thread.start()

    def join(self, timeout: Optional[float] = None) -> bool:
        self._thread.join(timeout)
        return not self._thread.is_alive()

    @property
    def result(self) -> Any:
        self._thread.join()
        if self.error is not None:
            raise self.error
        return self._result


class _WallCell(WaitCell):
    def __init__(self) -> None:
        self._event = threading.Event()
        self._value: Any = None

    def set(self, value: Any = None) -> None:
        self._value = value
        self._event.set()

    def wait(self, timeout: Optional[float] = None) -> Any:
        if self._event.wait(timeout):
            return self._value
        return TIMEOUT

    def peek(self) -> Any:
        return self._value if self._event.is_set() else TIMEOUT

    @property
    def is_set(self) -> bool:
        return self._event.is_set()


class WallRuntime(Runtime):
    def now_ms(self) -> int:
        return int(time.time() * 1000)

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)

    def spawn(self, fn: Callable[[], Any], name: str = "task") -> Task:
        return _WallTask(fn, name)

    def new_cell(self) -> WaitCell:
        return _WallCell()


# --------------------------------------------------------------------------
# Simulated-time runtime
# --------------------------------------------------------------------------

class _SimTask(Task):
    def __init__(self, rt: "SimRuntime", fn: Callable[[], Any], name: str):
        self.rt = rt
        self.fn = fn
        self.name = name
        self.go = threading.Event()
        self.done = False
        # Incremented on every wakeup; scheduled resumes carry the epoch they
        # target so stale heap entries (e.g. an expired join timeout) are
        # ignored instead of waking the task out of an unrelated block.
        self.epoch = 0
        self._result: Any = None
        self.error: Optional[BaseException] = None
        self.waiters: List["_SimTask"] = []
        self.thread = threading.Thread(target=self._main, name=name, daemon=True)

    def _main(self) -> None:
        self.go.wait()
        self.go.clear()
        self.epoch += 1
        try:
            self._result = self.fn()
        except BaseException as exc:
            self.error = exc
        self.rt._task_finished(self)

    def join(self, timeout: Optional[float] = None) -> bool:
        return self.rt._join(self, timeout)

    @property
    def result(self) -> Any:
        self.rt._join(self, None)
        if self.error is not None:
            raise self.error
        return self._result


class _SimCell(WaitCell):
    def __init__(self, rt: "SimRuntime"):
        self.rt = rt
        self._set = False
        self._value: Any = None
        self.waiters: List[_SimTask] = []

    def set(self, value: Any = None) -> None:
        if self._set:
            return
        self._set = True
        self._value = value
        for task in self.waiters:
            self.rt._schedule_resume(task, self.rt._now)
        self.waiters.clear()

    def wait(self, timeout: Optional[float] = None) -> Any:
        if self._set:
            return self._value
        task = self.rt._current_task()
        self.waiters.append(task)
        if timeout is not None:
            self.rt._schedule_resume(task, self.rt._now + ms(timeout))
        self.rt._block(task, waiting_on=self)
        if self._set:
            return self._value
        if task in self.waiters:  # woken by the timeout entry
            self.waiters.remove(task)
        return TIMEOUT

    def peek(self) -> Any:
        return self._value if self._set else TIMEOUT

    @property
    def is_set(self) -> bool:
        return self._set


class SimRuntime(Runtime):
    """Deterministic virtual-time scheduler.

    Restrictions: all user code must run inside spawned tasks and may only
    block through this runtime's primitives. ``run()`` executes in the driver
    thread and returns when the event heap drains.
    """

    def __init__(self, start_ms: int = 0):
        self._now = start_ms
        self._seq = 0
        self._heap: List[tuple] = []  # (time_ms, seq, task, epoch)
        self._current: Optional[_SimTask] = None
        self._sched_wake = threading.Event()
        self._live = 0
        self._blocked: dict = {}  # task -> what it waits on (diagnostics)

    # -- public API ---------------------------------------------------------

    def now_ms(self) -> int:
        return self._now

    def sleep(self, seconds: float) -> None:
        task = self._current_task()
        self._schedule_resume(task, self._now + ms(max(seconds, 0.0)))
        self._block(task, waiting_on="sleep")

    def spawn(self, fn: Callable[[], Any], name: str = "task") -> Task:
        task = _SimTask(self, fn, name)
        self._live += 1
        task.thread.start()
        self._schedule_resume(task, self._now)
        return task

    def new_cell(self) -> WaitCell:
        return _SimCell(self)

    def run(self) -> None:
        """Drive spawned tasks until nothing remains scheduled."""
        while self._heap:
            t, _seq, task, epoch = heapq.heappop(self._heap)
            if task.done or epoch != task.epoch:
                continue  # stale wakeup
            if t > self._now:
                self._now = t
            self._current = task
            self._sched_wake.clear()
            task.go.set()
            self._sched_wake.wait()
            self._current = None
        if self._live > 0:
            names = [t.name for t in self._blocked]
            raise RuntimeDeadlock(f"{self._live} task(s) blocked with no scheduled work: {names}")

    # -- internals ----------------------------------------------------------

    def _schedule_resume(self, task: _SimTask, at_ms: int) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (at_ms, self._seq, task, task.epoch))

    def _current_task(self) -> _SimTask:
        task = self._current
        if task is None or threading.current_thread() is not task.thread:
            raise RuntimeError("sim runtime primitives may only be used from a spawned task")
        return task

    def _block(self, task: _SimTask, waiting_on: Any) -> None:
        self._blocked[task] = waiting_on
        self._sched_wake.set()
        task.go.wait()
        task.go.clear()
        task.epoch += 1
        self._blocked.pop(task, None)

    def _task_finished(self, task: _SimTask) -> None:
        task.done = True
        self._live -= 1
        for waiter in task.waiters:
            self._schedule_resume(waiter, self._now)
        task.waiters.clear()
        self._sched_wake.set()

    def _join(self, task: _SimTask, timeout: Optional[float]) -> bool:
        if task.done:
            return True
        me = self._current_task()
        task.waiters.append(me)
        if timeout is not None:
            self._schedule_resume(me, self._now + ms(timeout))
        self._block(me, waiting_on=task)
        if not task.done and me in task.waiters:
            task.waiters.remove(me)
        return task.done


# --------------------------------------------------------------------------
# Inline runtime (manual clock, no concurrency)
# --------------------------------------------------------------------------

class _InlineTask(Task):
    def __init__(self, fn: Callable[[], Any]):
        self.error: Optional[BaseException] = None
        try:
            self._result = fn()
        except BaseException as exc:
            self._result = None
            self.error = exc

    def join(self, timeout: Optional[float] = None) -> bool:
        return True

    @property
    def result(self) -> Any:
        if self.error is not None:
            raise self.error
        return self._result


class _InlineCell(WaitCell):
    def __init__(self, rt: "InlineRuntime"):
        self.rt = rt
        self._set = False
        self._value: Any = None

    def set(self, value: Any = None) -> None:
        if not self._set:
            self._set = True
            self._value = value

    def wait(self, timeout: Optional[float] = None) -> Any:
        if self._set:
            return self._value
        if timeout is None:
            raise RuntimeDeadlock("inline wait on a cell nothing can set")
        self.rt.advance(timeout)
        return self._value if self._set else TIMEOUT

    def peek(self) -> Any:
        return self._value if self._set else TIMEOUT

    @property
    def is_set(self) -> bool:
        return self._set


class InlineRuntime(Runtime):
    def __init__(self, start_ms: int = 0):
        self._now = start_ms

    def now_ms(self) -> int:
        return self._now

    def advance(self, seconds: float) -> None:
        self._now += ms(max(seconds, 0.0))

    def set_now_ms(self, at_ms: int) -> None:
        self._now = max(self._now, at_ms)

    def sleep(self, seconds: float) -> None:
        self.advance(seconds)

    def spawn(self, fn: Callable[[], Any], name: str = "task") -> Task:
        return _InlineTask(fn)

    def new_cell(self) -> WaitCell:
        return _InlineCell(self)


class Semaphore:
    """Counting semaphore with FIFO wakeups, usable on any runtime."""

    def __init__(self, rt: Runtime, count: int):
        self.rt = rt
        self._count = count
        self._lock = threading.Lock()
        self._queue: List[WaitCell] = []

    def acquire(self) -> None:
        with self._lock:
            if self._count > 0:
                self._count -= 1
                return
            cell = self.rt.new_cell()
            self._queue.append(cell)
        cell.wait()

    def release(self) -> None:
        with self._lock:
            if self._queue:
                cell = self._queue.pop(0)
            else:
                self._count += 1
                return
        cell.set()
