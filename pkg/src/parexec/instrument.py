"""Audits over instrumentation event logs.

With instrumentation on, every status transition is recorded under the status
lock, so the per-transaction subsequence of the log is exactly the order the
transitions happened. The audit replays each transaction's chain against the
status automaton and counts per-version execution starts and aborts.
"""
from __future__ import annotations

from collections import defaultdict

from .core import (
    ABORTING,
    EXECUTED,
    EXECUTING,
    READY_TO_EXECUTE,
    STATE_NAMES,
    StatusEvent,
)

# (from_state -> allowed (to_state, incarnation delta)) of the automaton.
_ALLOWED = {
    READY_TO_EXECUTE: {(EXECUTING, 0)},
    EXECUTING: {(EXECUTED, 0), (ABORTING, 0)},
    EXECUTED: {(ABORTING, 0)},
    ABORTING: {(READY_TO_EXECUTE, 1)},
}


def audit_status_events(events: list, block_size: int) -> list:
    """Check a status-event log; returns a list of problem strings (empty ==
    clean). Verifies automaton membership, chain continuity from the initial
    (0, READY_TO_EXECUTE), and the at-most-once rules per version."""
    problems: list = []
    state = {j: (READY_TO_EXECUTE, 0) for j in range(block_size)}
    execution_starts: dict = defaultdict(int)
    aborts: dict = defaultdict(int)

    for event in events:
        if not isinstance(event, StatusEvent):
            continue
        j = event.txn_idx
        if not 0 <= j < block_size:
            problems.append("event for out-of-range txn %r" % (event,))
            continue
        expect_state, expect_inc = state[j]
        if (event.from_state, event.from_incarnation) != (expect_state, expect_inc):
            problems.append(
                "txn %d transition from (%s,%d) but tracked state is (%s,%d)"
                % (j, STATE_NAMES[event.from_state], event.from_incarnation,
                   STATE_NAMES[expect_state], expect_inc))
        delta = event.to_incarnation - event.from_incarnation
        if (event.to_state, delta) not in _ALLOWED[event.from_state]:
            problems.append(
                "txn %d illegal transition (%s,%d) -> (%s,%d)"
                % (j, STATE_NAMES[event.from_state], event.from_incarnation,
                   STATE_NAMES[event.to_state], event.to_incarnation))
        state[j] = (event.to_state, event.to_incarnation)
        if event.from_state == READY_TO_EXECUTE and event.to_state == EXECUTING:
            execution_starts[(j, event.from_incarnation)] += 1
        if event.to_state == ABORTING:
            aborts[(j, event.from_incarnation)] += 1

    for version, count in execution_starts.items():
        if count > 1:
            problems.append("version %r started execution %d times" % (version, count))
    for version, count in aborts.items():
        if count > 1:
            problems.append("version %r aborted %d times" % (version, count))
    return problems


def count_execution_starts(events: list) -> dict:
    """Per-version execution-start counts from an event log."""
    counts: dict = defaultdict(int)
    for event in events:
        if isinstance(event, StatusEvent) and \
                event.from_state == READY_TO_EXECUTE and event.to_state == EXECUTING:
            counts[(event.txn_idx, event.from_incarnation)] += 1
    return dict(counts)
