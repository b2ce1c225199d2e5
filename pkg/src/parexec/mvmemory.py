"""Multi-version shared memory.

Stores, per memory location, the latest write of every transaction that wrote
it (or an ESTIMATE marker standing in for an aborted incarnation's write), and
serves reads with "the value written by the highest transaction strictly below
the reader". Also keeps, per transaction, the location set and read set of the
last finished execution, swapped in atomically as whole snapshots so that
concurrent validators always see a consistent view.

Concurrency contract: all operations are safe to call concurrently for
distinct transactions. The scheduler guarantees a unique writer per version,
so `record` / `convert_writes_to_estimates` for one transaction never race
with themselves. A cell is only ever observed absent, as a complete
(incarnation, value) pair, or as ESTIMATE — never torn, because every cell
mutation and every ordered lookup happens under that location's lock.
"""
from __future__ import annotations

import threading
from bisect import bisect_left, insort
from typing import NamedTuple, Optional

from .core import Version, invariant


class _Estimate:
    """Marker replacing an aborted incarnation's write at one location."""

    __slots__ = ()

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return "ESTIMATE"


ESTIMATE = _Estimate()

# ReadResult statuses.
READ_OK = 0
READ_NOT_FOUND = 1
READ_ERROR = 2


class ReadResult(NamedTuple):
    status: int
    version: Optional[Version]  # set when status == READ_OK
    value: Optional[bytes]  # set when status == READ_OK
    blocking_txn_idx: Optional[int]  # set when status == READ_ERROR


_NOT_FOUND = ReadResult(READ_NOT_FOUND, None, None, None)


class _LocationHistory:
    """Per-location ordered versions: cells keyed by writer index.

    `order` is the sorted list of writer indices present in `cells`; both are
    only touched under `lock`, which is what makes "highest index strictly
    below a bound" an atomic lookup.
    """

    __slots__ = ("lock", "cells", "order")

    def __init__(self) -> None:
        self.lock = threading.Lock()
        self.cells: dict = {}  # txn_idx -> (incarnation, value) | ESTIMATE
        self.order: list = []  # sorted txn indices present in cells


class MVMemory:
    def __init__(self, block_size: int) -> None:
        self.block_size = block_size
        self._data: dict = {}  # location -> _LocationHistory
        self._data_lock = threading.Lock()  # guards insertion of new histories
        self._last_written: list = [frozenset()] * block_size
        self._last_read_set: list = [()] * block_size

    # -- internal ---------------------------------------------------------

    def _history(self, location) -> "_LocationHistory":
        hist = self._data.get(location)
        if hist is None:
            with self._data_lock:
                hist = self._data.setdefault(location, _LocationHistory())
        return hist

    # -- recording --------------------------------------------------------

    def apply_write_set(self, txn_idx: int, incarnation: int, write_set: dict) -> None:
        """Store every (location, value) of the write set at (location, txn_idx),
        overwriting any prior cell there (including an ESTIMATE)."""
        for location, value in write_set.items():
            hist = self._history(location)
            with hist.lock:
                if txn_idx not in hist.cells:
                    insort(hist.order, txn_idx)
                hist.cells[txn_idx] = (incarnation, value)

    def rcu_update_written_locations(self, txn_idx: int, new_locations: frozenset) -> bool:
        """Replace the transaction's written-location snapshot.

        Removes cells at locations the previous execution wrote but this one
        did not. Returns True iff a location was written that the previous
        execution did not write.
        """
        prev_locations = self._last_written[txn_idx]
        for location in prev_locations - new_locations:
            hist = self._data.get(location)
            invariant(hist is not None, "written location has no history")
            with hist.lock:
                if hist.cells.pop(txn_idx, None) is not None:
                    del hist.order[bisect_left(hist.order, txn_idx)]
        self._last_written[txn_idx] = new_locations  # atomic slot swap
        return bool(new_locations - prev_locations)

    def record(self, version: Version, read_set: list, write_set: dict) -> bool:
        """Publish one finished execution: writes, then the location snapshot,
        then (last) the read set. Returns the wrote-new-location indicator."""
        txn_idx, incarnation = version
        self.apply_write_set(txn_idx, incarnation, write_set)
        new_locations = frozenset(write_set)
        wrote_new_location = self.rcu_update_written_locations(txn_idx, new_locations)
        self._last_read_set[txn_idx] = tuple(read_set)  # atomic slot swap
        return wrote_new_location

    def convert_writes_to_estimates(self, txn_idx: int) -> None:
        """Replace every cell of the transaction's last finished write set with
        ESTIMATE. Cells are guaranteed to exist; a miss is an engine bug."""
        for location in self._last_written[txn_idx]:
            hist = self._data.get(location)
            invariant(hist is not None, "estimate target location missing")
            with hist.lock:
                invariant(txn_idx in hist.cells, "estimate target cell missing")
                hist.cells[txn_idx] = ESTIMATE

    # -- reads ------------------------------------------------------------

    def read(self, location, reader_idx: int) -> ReadResult:
        """Read on behalf of transaction `reader_idx`: the cell written by the
        highest transaction strictly below it, or NOT_FOUND, or READ_ERROR if
        that cell is an ESTIMATE."""
        hist = self._data.get(location)
        if hist is None:
            return _NOT_FOUND
        with hist.lock:
            pos = bisect_left(hist.order, reader_idx) - 1
            if pos < 0:
                return _NOT_FOUND
            writer_idx = hist.order[pos]
            cell = hist.cells[writer_idx]
            if cell is ESTIMATE:
                return ReadResult(READ_ERROR, None, None, writer_idx)
            return ReadResult(READ_OK, Version(writer_idx, cell[0]), cell[1], None)

    def validate_read_set(self, txn_idx: int) -> bool:
        """Re-read the last recorded read set and compare observed versions.

        A prior storage read (descriptor None) passing as NOT_FOUND again is
        valid; anything else that differs — a current READ_ERROR, a vanished
        entry, or a different version — fails validation.
        """
        prior_reads = self._last_read_set[txn_idx]
        for location, observed in prior_reads:
            cur = self.read(location, txn_idx)
            if cur.status == READ_ERROR:
                return False  # previously read entry is now an ESTIMATE
            if cur.status == READ_NOT_FOUND:
                if observed is not None:
                    return False  # previously read entry has vanished
            elif cur.version != observed:
                return False  # read some entry, but not the same as before
        return True

    def snapshot(self) -> dict:
        """Final state after the engine is done: for every location ever
        present, the value a read below `block_size` resolves to."""
        result: dict = {}
        for location in list(self._data):
            cur = self.read(location, self.block_size)
            if cur.status == READ_OK:
                result[location] = cur.value
        return result

    # -- introspection (tests, executor optimizations) ---------------------

    def last_recorded_reads(self, txn_idx: int) -> tuple:
        return self._last_read_set[txn_idx]

    def last_written_locations(self, txn_idx: int) -> frozenset:
        return self._last_written[txn_idx]

    def cell(self, location, txn_idx: int):
        """The raw cell at (location, txn_idx): (incarnation, value), ESTIMATE
        or None. Test helper; not part of the engine's hot path."""
        hist = self._data.get(location)
        if hist is None:
            return None
        with hist.lock:
            return hist.cells.get(txn_idx)
