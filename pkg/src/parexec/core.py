"""Shared vocabulary for the speculative block executor.

Everything here is a plain immutable value except the small atomic helpers
(`AtomicCounter`, `AtomicFlag`, `EventLog`), which are lock-protected so the
same code is correct on free-threaded interpreters as well as under the GIL.
"""
from __future__ import annotations

import threading
from typing import NamedTuple, Optional

# Transaction status states. A transaction's status walks the automaton
#   READY_TO_EXECUTE(i) -> EXECUTING(i) -> EXECUTED(i) | ABORTING(i)
#   EXECUTED(i)         -> ABORTING(i)
#   ABORTING(i)         -> READY_TO_EXECUTE(i+1)
# and nothing else, ever.
READY_TO_EXECUTE = 0
EXECUTING = 1
EXECUTED = 2
ABORTING = 3

STATE_NAMES = ("READY_TO_EXECUTE", "EXECUTING", "EXECUTED", "ABORTING")

# Task kinds handed out by the scheduler.
EXECUTION_TASK = 0
VALIDATION_TASK = 1

# VmResult statuses.
VM_SUCCESS = 0
VM_READ_ERROR = 1


class Version(NamedTuple):
    """Identity of one speculative execution attempt of one transaction.

    Orders lexicographically: transaction index first, then incarnation.
    """

    txn_idx: int
    incarnation: int


class Task(NamedTuple):
    kind: int  # EXECUTION_TASK or VALIDATION_TASK
    version: Version


class ReadDescriptor(NamedTuple):
    """One recorded read: the location and the version observed.

    ``observed`` is None when the value was resolved from pre-block storage
    (the shared memory had no entry below the reader).
    """

    location: bytes
    observed: Optional[Version]


# A read set is an ordered list of ReadDescriptor (repeated reads of the same
# location each get their own entry). A write set is a dict mapping location
# to value: the last write during an execution wins.
ReadSet = list
WriteSet = dict


class VmResult(NamedTuple):
    status: int  # VM_SUCCESS or VM_READ_ERROR
    read_set: Optional[list]
    write_set: Optional[dict]
    blocking_txn_idx: Optional[int]


def vm_success(read_set: list, write_set: dict) -> VmResult:
    return VmResult(VM_SUCCESS, read_set, write_set, None)


def vm_read_error(blocking_txn_idx: int) -> VmResult:
    return VmResult(VM_READ_ERROR, None, None, blocking_txn_idx)


def version_compare(a: Version, b: Version) -> int:
    """Lexicographic order on (txn_idx, incarnation): -1, 0 or 1."""
    if a == b:
        return 0
    return -1 if a < b else 1


class EngineInvariantError(AssertionError):
    """An internal invariant of the engine was violated: a bug, never input."""


def invariant(condition: bool, message: str) -> None:
    # Explicit raise (not `assert`) so invariants survive python -O.
    if not condition:
        raise EngineInvariantError(message)


class StatusEvent(NamedTuple):
    """One status transition, recorded under the status lock."""

    txn_idx: int
    from_state: int
    from_incarnation: int
    to_state: int
    to_incarnation: int


class EventLog:
    """Thread-safe append-only log used when instrumentation is on."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._events: list = []

    def append(self, event) -> None:
        with self._lock:
            self._events.append(event)

    def snapshot(self) -> list:
        with self._lock:
            return list(self._events)

    def __len__(self) -> int:
        with self._lock:
            return len(self._events)


class AtomicCounter:
    """A lock-protected integer counter with the read-modify-write ops the
    scheduler needs. The lock gives every op a single linearization point."""

    __slots__ = ("_lock", "_value")

    def __init__(self, value: int = 0) -> None:
        self._lock = threading.Lock()
        self._value = value

    def load(self) -> int:
        with self._lock:
            return self._value

    def store(self, value: int) -> None:
        with self._lock:
            self._value = value

    def increment(self) -> None:
        with self._lock:
            self._value += 1

    def decrement(self) -> None:
        with self._lock:
            self._value -= 1

    def fetch_and_increment(self) -> int:
        with self._lock:
            value = self._value
            self._value = value + 1
            return value

    def min_update(self, target: int) -> None:
        with self._lock:
            if target < self._value:
                self._value = target


class AtomicFlag:
    """A one-way false->true flag."""

    __slots__ = ("_lock", "_value")

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._value = False

    def load(self) -> bool:
        with self._lock:
            return self._value

    def set(self) -> None:
        with self._lock:
            self._value = True
