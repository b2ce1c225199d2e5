"""Per-thread work loop and the block-level entry point (pure-Python engine).

`execute_block_pure` spawns workers that loop over scheduler tasks until the
done marker fires, then asserts post-join quiescence (every transaction
EXECUTED, zero active tasks) and returns the memory snapshot. The result is
bit-identical to executing the block sequentially in its preset order, for
any thread count.
"""
from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from .core import (
    EXECUTED,
    EXECUTION_TASK,
    VALIDATION_TASK,
    VM_READ_ERROR,
    EventLog,
    invariant,
)
from .mvmemory import READ_ERROR, MVMemory
from .scheduler import Scheduler
from .vm import Storage, vm_execute


@dataclass
class BlockExecutionConfig:
    """Inputs for one block run.

    engine: "auto" picks the native core when it is available and the block
    is eligible, otherwise the pure-Python engine; "pure"/"native" force one.
    delay_injector: test-only callable invoked at named interleaving points.
    """

    block: list
    num_threads: int = 1
    storage: Optional[Storage] = None
    instrumentation: bool = False
    engine: str = "auto"
    spin_ns: int = 0
    delay_injector: Optional[Callable[[str], None]] = None

    def __post_init__(self) -> None:
        if self.num_threads < 1:
            raise ValueError("num_threads must be >= 1")


@dataclass
class BlockExecutionOutput:
    final_state: dict
    incarnations: list = field(default_factory=list)
    aborts: int = 0
    engine: str = "pure"
    events: Optional[list] = None


class _BlockRun:
    """Shared state for one block execution; one instance, many workers."""

    def __init__(self, block, storage, mvmemory, scheduler, spin_ns, delay_injector):
        self.block = block
        self.storage = storage
        self.mvmemory = mvmemory
        self.scheduler = scheduler
        self.spin_ns = spin_ns
        self.delay = delay_injector
        self.failure: Optional[BaseException] = None
        self._failure_lock = threading.Lock()

    def _fail(self, exc: BaseException) -> None:
        with self._failure_lock:
            if self.failure is None:
                self.failure = exc

    def run(self) -> None:
        """Worker loop: chain tasks handed back by finish_* before asking the
        scheduler for fresh work; exit once the done marker is up."""
        try:
            task = None
            idle_streak = 0
            while not self.scheduler.done():
                if self.failure is not None:
                    return  # another worker hit an engine bug; bail out
                if task is not None and task.kind == EXECUTION_TASK:
                    task = self.try_execute(task.version)
                if task is not None and task.kind == VALIDATION_TASK:
                    task = self.needs_reexecution(task.version)
                if task is None:
                    task = self.scheduler.next_task()
                    if task is None:
                        # Yield, then back off: starved threads must not crowd
                        # the scheduler (or the GIL) the working threads need.
                        idle_streak += 1
                        time.sleep(0.0002 if idle_streak > 16 else 0)
                    else:
                        idle_streak = 0
        except BaseException as exc:  # engine bug: poison the whole run
            self._fail(exc)

    def _prior_read_blocker(self, txn_idx: int) -> Optional[int]:
        """Re-execution shortcut: if any location the previous finished
        incarnation read currently resolves to an ESTIMATE, report that
        blocker instead of running the transaction at all."""
        for location, _observed in self.mvmemory.last_recorded_reads(txn_idx):
            result = self.mvmemory.read(location, txn_idx)
            if result.status == READ_ERROR:
                return result.blocking_txn_idx
        return None

    def try_execute(self, version):
        txn_idx, incarnation = version
        scheduler = self.scheduler
        while True:
            blocker = self._prior_read_blocker(txn_idx)
            if blocker is not None:
                if scheduler.add_dependency(txn_idx, blocker):
                    return None
                continue  # dependency resolved in the meantime; re-check
            vm_result = vm_execute(txn_idx, self.block[txn_idx], self.mvmemory,
                                   self.storage, self.spin_ns)
            if vm_result.status == VM_READ_ERROR:
                if scheduler.add_dependency(txn_idx, vm_result.blocking_txn_idx):
                    return None
                continue  # dependency resolved in the meantime; re-execute
            if self.delay is not None:
                self.delay("before_record")
            wrote_new_location = self.mvmemory.record(
                version, vm_result.read_set, vm_result.write_set)
            if self.delay is not None:
                self.delay("before_finish_execution")
            return scheduler.finish_execution(txn_idx, incarnation, wrote_new_location)

    def needs_reexecution(self, version):
        txn_idx, incarnation = version
        read_set_valid = self.mvmemory.validate_read_set(txn_idx)
        if self.delay is not None:
            self.delay("between_validate_and_abort")
        aborted = (not read_set_valid
                   and self.scheduler.try_validation_abort(txn_idx, incarnation))
        if aborted:
            self.mvmemory.convert_writes_to_estimates(txn_idx)
        return self.scheduler.finish_validation(txn_idx, aborted)


def execute_block_pure(config: BlockExecutionConfig) -> BlockExecutionOutput:
    """Run one block on the pure-Python engine and snapshot the final state."""
    block = config.block
    block_size = len(block)
    storage = config.storage if config.storage is not None else Storage()
    event_log = EventLog() if config.instrumentation else None
    mvmemory = MVMemory(block_size)
    scheduler = Scheduler(block_size, event_log=event_log)
    run = _BlockRun(block, storage, mvmemory, scheduler,
                    config.spin_ns, config.delay_injector)

    workers = [threading.Thread(target=run.run, name="parexec-worker-%d" % i,
                                daemon=True)
               for i in range(config.num_threads)]
    for worker in workers:
        worker.start()
    for worker in workers:
        worker.join()

    if run.failure is not None:
        raise run.failure

    # Post-join quiescence: joining is only sound if the whole block committed.
    invariant(scheduler.done(), "workers joined without the done marker")
    invariant(scheduler.num_active_tasks.load() == 0,
              "active tasks remain after join")
    incarnations = []
    for txn_idx in range(block_size):
        incarnation, state = scheduler.status_of(txn_idx)
        invariant(state == EXECUTED, "txn %d not EXECUTED after join" % txn_idx)
        incarnations.append(incarnation)

    return BlockExecutionOutput(
        final_state=mvmemory.snapshot(),
        incarnations=incarnations,
        aborts=sum(incarnations),
        engine="pure",
        events=event_log.snapshot() if event_log is not None else None,
    )
