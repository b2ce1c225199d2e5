"""Pluggable transaction logic and the read/write interception layer.

A transaction is any object with ``apply(read, write)`` that is a
deterministic, terminating function of its read responses: identical values
returned by ``read`` must produce the identical sequence of reads and the
identical final write set. The engine never interprets values; they are
opaque byte strings.

``vm_execute`` runs one transaction speculatively: reads are served from the
transaction's own pending writes first, then from multi-version memory, then
from pre-block storage; writes only accumulate locally and are never applied
here. Hitting an ESTIMATE marker stops the run immediately and surfaces the
blocking transaction index.
"""
from __future__ import annotations

import struct
import time
from dataclasses import dataclass
from typing import Callable, Optional

from .core import ReadDescriptor, VmResult, vm_read_error, vm_success
from .mvmemory import READ_NOT_FOUND, READ_OK, MVMemory


class Storage:
    """Immutable map of pre-block state; absent locations read as None."""

    def __init__(self, entries=None) -> None:
        self._entries = dict(entries) if entries else {}

    def get(self, location) -> Optional[bytes]:
        return self._entries.get(location)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, location) -> bool:
        return location in self._entries


class _ReadAbort(Exception):
    """Internal control flow: the current read hit an ESTIMATE marker."""

    def __init__(self, blocking_txn_idx: int) -> None:
        self.blocking_txn_idx = blocking_txn_idx


def synthetic_compute(duration_ns: int) -> None:
    """Busy-wait emulating per-transaction VM cost. No-op when <= 0."""
    if duration_ns <= 0:
        return
    deadline = time.perf_counter_ns() + duration_ns
    while time.perf_counter_ns() < deadline:
        pass


class ComputeMeter:
    """Spreads a transaction's synthetic compute across its reads.

    Transaction logic that advertises `read_count_hint` gets one compute
    slice before each read and the remainder when it finishes, so an attempt
    aborted at an early read only burned the corresponding fraction. Logic
    without a hint pays the whole budget up front. A completed attempt always
    spends exactly the full budget either way.
    """

    __slots__ = ("slice_ns", "remaining")

    def __init__(self, spin_ns: int, read_count_hint) -> None:
        if spin_ns <= 0:
            self.slice_ns = 0
            self.remaining = 0
        elif read_count_hint:
            self.slice_ns = spin_ns // (read_count_hint + 1)
            self.remaining = spin_ns
        else:
            synthetic_compute(spin_ns)
            self.slice_ns = 0
            self.remaining = 0

    def before_read(self) -> None:
        if self.slice_ns and self.remaining >= 2 * self.slice_ns:
            synthetic_compute(self.slice_ns)
            self.remaining -= self.slice_ns

    def finish(self) -> None:
        if self.remaining > 0:
            synthetic_compute(self.remaining)
            self.remaining = 0


def vm_execute(txn_idx: int, txn, mvmemory: MVMemory, storage: Storage,
               spin_ns: int = 0) -> VmResult:
    """Run one transaction with interception, returning its captured read and
    write sets, or a read error naming the blocking transaction.

    Any other exception escaping the transaction logic is treated as a fault
    arising from speculatively inconsistent reads: the captured read set is
    kept (so validation can catch the inconsistency) and the effect becomes
    deterministically empty. The sequential baseline applies the same rule,
    so genuinely faulting transactions stay equivalent.
    """
    read_set: list = []
    write_set: dict = {}
    meter = ComputeMeter(spin_ns, getattr(txn, "read_count_hint", None))

    def read(location):
        meter.before_read()
        if location in write_set:
            return write_set[location]  # value written by this txn; not recorded
        result = mvmemory.read(location, txn_idx)
        if result.status == READ_OK:
            read_set.append(ReadDescriptor(location, result.version))
            return result.value
        if result.status == READ_NOT_FOUND:
            read_set.append(ReadDescriptor(location, None))
            return storage.get(location)
        raise _ReadAbort(result.blocking_txn_idx)

    def write(location, value):
        write_set[location] = value

    try:
        txn.apply(read, write)
    except _ReadAbort as abort:
        return vm_read_error(abort.blocking_txn_idx)
    except Exception:
        return vm_success(read_set, {})
    meter.finish()
    return vm_success(read_set, write_set)


# --------------------------------------------------------------------------
# Built-in peer-to-peer transfer workload.
#
# Account state lives at two locations (balance, sequence number); the
# "aptos"-profile additionally writes a per-sender marker. Verification-style
# reads target a small shared pool of read-only locations.
# --------------------------------------------------------------------------

AUX_POOL_SIZE = 32

_I64 = struct.Struct("<q")


def encode_value(number: int) -> bytes:
    return _I64.pack(number)


def decode_value(raw: Optional[bytes]) -> int:
    return 0 if raw is None else _I64.unpack(raw)[0]


def balance_key(account: int) -> bytes:
    return b"acct/%d/bal" % account


def seqnum_key(account: int) -> bytes:
    return b"acct/%d/seq" % account


def marker_key(account: int) -> bytes:
    return b"acct/%d/out" % account


def aux_key(slot: int) -> bytes:
    return b"meta/%d" % slot


def aux_slot(sender: int, receiver: int, i: int) -> int:
    # Deterministic mix so each transaction hits a spread of the shared pool.
    return (sender * 1103515245 + receiver * 12345 + i * 2654435761) % AUX_POOL_SIZE


@dataclass(frozen=True)
class P2PShape:
    """Read/write profile of one transfer. diem-like: 21 reads / 4 writes;
    aptos-like: 8 reads / 5 writes (the extra write is the sender marker)."""

    name: str
    aux_reads: int
    write_marker: bool


DIEM_SHAPE = P2PShape("diem", aux_reads=17, write_marker=False)
APTOS_SHAPE = P2PShape("aptos", aux_reads=4, write_marker=True)

SHAPES = {shape.name: shape for shape in (DIEM_SHAPE, APTOS_SHAPE)}


@dataclass(frozen=True)
class P2PTransaction:
    sender: int
    receiver: int
    amount: int
    shape: P2PShape = APTOS_SHAPE

    def __post_init__(self) -> None:
        if self.sender == self.receiver:
            raise ValueError("sender and receiver must differ")

    @property
    def read_count_hint(self) -> int:
        return self.shape.aux_reads + 4

    def apply(self, read: Callable, write: Callable) -> None:
        p2p_apply(self, read, write)


def p2p_apply(txn: P2PTransaction, read: Callable, write: Callable) -> None:
    """Transfer, clamped to the available balance; sender sequence number
    advances even for a clamped-to-zero transfer."""
    for i in range(txn.shape.aux_reads):
        read(aux_key(aux_slot(txn.sender, txn.receiver, i)))
    sender_bal = decode_value(read(balance_key(txn.sender)))
    sender_seq = decode_value(read(seqnum_key(txn.sender)))
    receiver_bal = decode_value(read(balance_key(txn.receiver)))
    receiver_seq = decode_value(read(seqnum_key(txn.receiver)))
    amount = min(txn.amount, sender_bal)
    write(balance_key(txn.sender), encode_value(sender_bal - amount))
    write(seqnum_key(txn.sender), encode_value(sender_seq + 1))
    write(balance_key(txn.receiver), encode_value(receiver_bal + amount))
    write(seqnum_key(txn.receiver), encode_value(receiver_seq))
    if txn.shape.write_marker:
        write(marker_key(txn.sender), encode_value(sender_seq + 1))


class P2PStorage(Storage):
    """Pre-block storage for the transfer workload: funded balances plus the
    shared read-only pool. Remembers its parameters so prepared/native runs
    can reconstruct the same universe of locations."""

    def __init__(self, num_accounts: int, initial_balance: int) -> None:
        entries = {balance_key(a): encode_value(initial_balance)
                   for a in range(num_accounts)}
        for slot in range(AUX_POOL_SIZE):
            entries[aux_key(slot)] = encode_value(slot * 7919 + 1)
        super().__init__(entries)
        self.num_accounts = num_accounts
        self.initial_balance = initial_balance
