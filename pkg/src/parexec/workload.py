"""Workload generation, the sequential baseline, and equivalence checking.

The sequential baseline is the correctness oracle: whatever it writes, the
parallel engine must reproduce byte for byte, for every thread count.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Tuple

from .vm import (
    SHAPES,
    ComputeMeter,
    P2PStorage,
    P2PTransaction,
    Storage,
)

MAX_TRANSFER = 1000


@dataclass(frozen=True)
class WorkloadSpec:
    """One reproducible workload: identical specs generate identical blocks."""

    block_size: int
    num_accounts: int
    shape: str = "aptos"  # "diem" (21r/4w) or "aptos" (8r/5w)
    seed: int = 0
    initial_balance: int = 1_000_000

    def __post_init__(self) -> None:
        if self.block_size < 0:
            raise ValueError("block_size must be >= 0")
        if self.num_accounts < 2:
            raise ValueError("num_accounts must be >= 2")
        if self.shape not in SHAPES:
            raise ValueError("unknown shape %r (expected one of %s)"
                             % (self.shape, sorted(SHAPES)))


def generate_block(spec: WorkloadSpec) -> list:
    """Deterministic pseudo-random block of transfers between distinct
    accounts."""
    rng = random.Random(spec.seed)
    shape = SHAPES[spec.shape]
    block = []
    for _ in range(spec.block_size):
        sender = rng.randrange(spec.num_accounts)
        receiver = rng.randrange(spec.num_accounts - 1)
        if receiver >= sender:
            receiver += 1
        amount = rng.randrange(1, MAX_TRANSFER)
        block.append(P2PTransaction(sender, receiver, amount, shape))
    return block


def build_storage(spec: WorkloadSpec) -> P2PStorage:
    return P2PStorage(spec.num_accounts, spec.initial_balance)


def execute_sequential(block: list, storage: Storage, spin_ns: int = 0) -> dict:
    """Run the block one transaction at a time against a single overlay of
    storage; returns the overlay (every location written at least once, with
    its final value).

    Faulting transaction logic contributes no writes the same way the
    speculative engine's interception converts faults, so the two stay
    equivalent even for faulty workloads.
    """
    overlay: dict = {}
    for txn in block:
        meter = ComputeMeter(spin_ns, getattr(txn, "read_count_hint", None))
        pending: dict = {}

        def read(location):
            meter.before_read()
            if location in pending:
                return pending[location]
            if location in overlay:
                return overlay[location]
            return storage.get(location)

        def write(location, value):
            pending[location] = value

        try:
            txn.apply(read, write)
        except Exception:
            continue  # deterministic fault: no effect
        meter.finish()
        overlay.update(pending)
    return overlay


def check_equivalence(parallel_out: dict, sequential_out: dict) -> Tuple[bool, list]:
    """Byte-exact comparison of two final states.

    Returns (ok, diff) where diff lists (location, expected, got) tuples with
    None standing in for a missing location.
    """
    diff = []
    for location in sorted(set(parallel_out) | set(sequential_out)):
        expected = sequential_out.get(location)
        got = parallel_out.get(location)
        if expected != got:
            diff.append((location, expected, got))
    return (not diff), diff
