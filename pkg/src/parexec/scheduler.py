"""Collaborative task scheduler.

Dispatches execution and validation tasks across worker threads using two
monotone-except-for-decreases index counters plus a per-transaction status
array; detects block completion with a double-collect over `decrease_cnt`.

The counter discipline: `num_active_tasks` is incremented on the way into a
pre-execution/pre-validation (right before the fetch-and-increment of the
corresponding index) and decremented exactly once when the attempt dies
without producing a task, or when the produced task finishes — unless the
finish hands a follow-up task back to the caller, in which case the count is
carried forward unchanged. Every operation below preserves that conservation
law; `check_done` is only sound because of it.
"""
from __future__ import annotations

import threading
from typing import Optional

from .core import (
    ABORTING,
    EXECUTED,
    EXECUTING,
    EXECUTION_TASK,
    READY_TO_EXECUTE,
    STATE_NAMES,
    VALIDATION_TASK,
    AtomicCounter,
    AtomicFlag,
    StatusEvent,
    Task,
    Version,
    invariant,
)


class _StatusEntry:
    """Lock-protected (incarnation, state) pair; starts at (0, READY)."""

    __slots__ = ("lock", "incarnation", "state")

    def __init__(self) -> None:
        self.lock = threading.Lock()
        self.incarnation = 0
        self.state = READY_TO_EXECUTE


class _DependencyEntry:
    """Lock-protected set of transaction indices waiting on this one."""

    __slots__ = ("lock", "indices")

    def __init__(self) -> None:
        self.lock = threading.Lock()
        self.indices: set = set()


class Scheduler:
    def __init__(self, block_size: int, event_log=None) -> None:
        self.block_size = block_size
        self.execution_idx = AtomicCounter(0)
        self.validation_idx = AtomicCounter(0)
        self.decrease_cnt = AtomicCounter(0)
        self.num_active_tasks = AtomicCounter(0)
        self.done_marker = AtomicFlag()
        self.txn_status = [_StatusEntry() for _ in range(block_size)]
        self.txn_dependency = [_DependencyEntry() for _ in range(block_size)]
        self._event_log = event_log
        # Test seam: called between the two decrease_cnt collects in check_done.
        self._between_collects = None

    # -- instrumentation ----------------------------------------------------

    def _transition(self, txn_idx: int, entry: _StatusEntry, to_state: int,
                    to_incarnation: Optional[int] = None) -> None:
        """Apply a status transition; caller holds entry.lock."""
        if to_incarnation is None:
            to_incarnation = entry.incarnation
        if self._event_log is not None:
            self._event_log.append(StatusEvent(
                txn_idx, entry.state, entry.incarnation, to_state, to_incarnation))
        entry.state = to_state
        entry.incarnation = to_incarnation

    # -- utility -------------------------------------------------------------

    def done(self) -> bool:
        return self.done_marker.load()

    def decrease_execution_idx(self, target_idx: int) -> None:
        self.execution_idx.min_update(target_idx)
        self.decrease_cnt.increment()

    def decrease_validation_idx(self, target_idx: int) -> None:
        self.validation_idx.min_update(target_idx)
        self.decrease_cnt.increment()

    def check_done(self) -> None:
        """Double-collect: the conjunction (both indices past the block, zero
        active tasks) certifiably held at one instant iff decrease_cnt did not
        move between the first read and the re-read after the condition reads."""
        observed_cnt = self.decrease_cnt.load()
        execution_idx = self.execution_idx.load()
        validation_idx = self.validation_idx.load()
        active = self.num_active_tasks.load()
        if self._between_collects is not None:  # test seam
            self._between_collects()
        if (min(execution_idx, validation_idx) >= self.block_size
                and active == 0
                and self.decrease_cnt.load() == observed_cnt):
            self.done_marker.set()

    # -- picking work ----------------------------------------------------------

    def try_incarnate(self, txn_idx: int) -> Optional[Version]:
        """Claim the right to execute txn_idx's current incarnation.

        On failure restores the caller's num_active_tasks increment; on
        success the returned version carries the count forward.
        """
        if txn_idx < self.block_size:
            entry = self.txn_status[txn_idx]
            with entry.lock:
                if entry.state == READY_TO_EXECUTE:
                    self._transition(txn_idx, entry, EXECUTING)
                    return Version(txn_idx, entry.incarnation)
        self.num_active_tasks.decrement()
        return None

    def next_version_to_execute(self) -> Optional[Version]:
        if self.execution_idx.load() >= self.block_size:
            self.check_done()
            return None
        self.num_active_tasks.increment()
        idx_to_execute = self.execution_idx.fetch_and_increment()
        return self.try_incarnate(idx_to_execute)

    def next_version_to_validate(self) -> Optional[Version]:
        if self.validation_idx.load() >= self.block_size:
            self.check_done()
            return None
        self.num_active_tasks.increment()
        idx_to_validate = self.validation_idx.fetch_and_increment()
        if idx_to_validate < self.block_size:
            entry = self.txn_status[idx_to_validate]
            with entry.lock:
                incarnation, state = entry.incarnation, entry.state
            if state == EXECUTED:
                return Version(idx_to_validate, incarnation)
        self.num_active_tasks.decrement()
        return None

    def next_task(self) -> Optional[Task]:
        """Lower index first; a tie goes to execution (strict comparison)."""
        if self.validation_idx.load() < self.execution_idx.load():
            version = self.next_version_to_validate()
            if version is not None:
                return Task(VALIDATION_TASK, version)
        else:
            version = self.next_version_to_execute()
            if version is not None:
                return Task(EXECUTION_TASK, version)
        return None

    # -- dependencies ------------------------------------------------------------

    def add_dependency(self, txn_idx: int, blocking_txn_idx: int) -> bool:
        """Record txn_idx as waiting on blocking_txn_idx.

        Returns False (no state change) if the blocking transaction reached
        EXECUTED before the dependency lock was taken: the caller should just
        re-execute. Otherwise aborts the caller's execution (EXECUTING ->
        ABORTING), parks it in the blocker's dependency set and gives up the
        active-task count.

        Lock order: dependency lock of the blocker, then status locks one at
        a time. This is the engine's only nested lock acquisition.
        """
        dep = self.txn_dependency[blocking_txn_idx]
        with dep.lock:
            blocking = self.txn_status[blocking_txn_idx]
            with blocking.lock:
                resolved = blocking.state == EXECUTED
            if resolved:
                return False  # dependency resolved before locking
            entry = self.txn_status[txn_idx]
            with entry.lock:
                invariant(entry.state == EXECUTING,
                          "add_dependency from state %s" % STATE_NAMES[entry.state])
                self._transition(txn_idx, entry, ABORTING)
            dep.indices.add(txn_idx)
        self.num_active_tasks.decrement()  # execution task aborted
        return True

    def set_ready_status(self, txn_idx: int) -> None:
        entry = self.txn_status[txn_idx]
        with entry.lock:
            invariant(entry.state == ABORTING,
                      "set_ready_status from state %s" % STATE_NAMES[entry.state])
            self._transition(txn_idx, entry, READY_TO_EXECUTE, entry.incarnation + 1)

    def resume_dependencies(self, dependent_txn_indices) -> None:
        for dep_txn_idx in dependent_txn_indices:
            self.set_ready_status(dep_txn_idx)
        if dependent_txn_indices:
            self.decrease_execution_idx(min(dependent_txn_indices))

    # -- finishing work -----------------------------------------------------------

    def finish_execution(self, txn_idx: int, incarnation: int,
                         wrote_new_location: bool) -> Optional[Task]:
        """Publish EXECUTED, wake dependents, and schedule validation.

        When only re-validation of this very transaction is needed (no new
        location written) and the validation index is already past it, the
        validation task is handed straight back to the caller, keeping the
        active-task count attached to it.
        """
        entry = self.txn_status[txn_idx]
        with entry.lock:
            invariant(entry.state == EXECUTING and entry.incarnation == incarnation,
                      "finish_execution of (%d,%d) in state (%d,%s)"
                      % (txn_idx, incarnation, entry.incarnation, STATE_NAMES[entry.state]))
            self._transition(txn_idx, entry, EXECUTED)
        dep = self.txn_dependency[txn_idx]
        with dep.lock:
            dependents = dep.indices
            dep.indices = set()
        self.resume_dependencies(dependents)
        if self.validation_idx.load() > txn_idx:  # otherwise index already small enough
            if wrote_new_location:
                self.decrease_validation_idx(txn_idx)
            else:
                return Task(VALIDATION_TASK, Version(txn_idx, incarnation))
        self.num_active_tasks.decrement()
        return None

    def try_validation_abort(self, txn_idx: int, incarnation: int) -> bool:
        """Only the thread that flips exactly (incarnation, EXECUTED) to
        ABORTING wins the abort; stale validation tasks lose here."""
        entry = self.txn_status[txn_idx]
        with entry.lock:
            if entry.incarnation == incarnation and entry.state == EXECUTED:
                self._transition(txn_idx, entry, ABORTING)
                return True
        return False

    def finish_validation(self, txn_idx: int, aborted: bool) -> Optional[Task]:
        """After an abort: bump to the next incarnation, pull the validation
        index back for higher transactions, and, when possible, hand the
        re-execution task straight back to the caller.

        Exactly one num_active_tasks decrement happens on every path that does
        not return a task (try_incarnate performs it itself when it fails).
        """
        if aborted:
            self.set_ready_status(txn_idx)
            self.decrease_validation_idx(txn_idx + 1)
            if self.execution_idx.load() > txn_idx:
                new_version = self.try_incarnate(txn_idx)
                if new_version is not None:
                    return Task(EXECUTION_TASK, new_version)
                return None  # try_incarnate already gave up the count
        self.num_active_tasks.decrement()
        return None

    # -- introspection -------------------------------------------------------------

    def status_of(self, txn_idx: int) -> tuple:
        entry = self.txn_status[txn_idx]
        with entry.lock:
            return entry.incarnation, entry.state

    def dependencies_of(self, txn_idx: int) -> frozenset:
        dep = self.txn_dependency[txn_idx]
        with dep.lock:
            return frozenset(dep.indices)
