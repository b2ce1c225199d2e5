"""Shared test helpers: scripted transactions and scheduler driving."""
from __future__ import annotations

import pytest

from parexec.scheduler import Scheduler


class RWTransaction:
    """Scripted transaction logic: read some locations, then write.

    `writes` maps location -> static value; `compute(values) -> dict` derives
    the write set from the values read (in `reads` order) instead.
    """

    def __init__(self, reads=(), writes=None, compute=None):
        self.reads = tuple(reads)
        self.writes = dict(writes or {})
        self.compute = compute

    def apply(self, read, write):
        values = [read(location) for location in self.reads]
        out = self.compute(values) if self.compute is not None else self.writes
        for location, value in out.items():
            write(location, value)


class FaultyTransaction:
    """Reads one location then raises: models logic faulting on its input."""

    def __init__(self, location):
        self.location = location

    def apply(self, read, write):
        read(self.location)
        raise ValueError("boom")


def claim_execution(scheduler: Scheduler, txn_idx: int):
    """Claim a specific transaction for execution, the way a pre-execution
    would (num_active_tasks incremented before try_incarnate)."""
    scheduler.num_active_tasks.increment()
    version = scheduler.try_incarnate(txn_idx)
    assert version is not None, "transaction %d not READY" % txn_idx
    return version


def claim_validation_slot(scheduler: Scheduler) -> None:
    """Account for a manually held validation task (pre-validation increment)."""
    scheduler.num_active_tasks.increment()


@pytest.fixture
def two_txn_scheduler():
    return Scheduler(2)
