"""Engine selection: native compiled core when available, pure Python otherwise.

The native core only understands the built-in p2p transfer workload (its
transaction logic is compiled), so "auto" dispatch requires a uniform p2p
block over a ``P2PStorage``; anything else — custom transaction logic,
instrumentation, injected delays — runs on the pure engine. ``PAREXEC_ENGINE``
overrides the default choice (values: auto, pure, native).
"""
from __future__ import annotations

import os
from array import array
from typing import Optional

from .executor import BlockExecutionConfig, BlockExecutionOutput, execute_block_pure
from .vm import (
    P2PStorage,
    P2PTransaction,
    aux_key,
    balance_key,
    encode_value,
    marker_key,
    seqnum_key,
)

try:
    from . import _native
except ImportError:  # pure-Python fallback
    _native = None

HAVE_NATIVE = _native is not None


def native_available() -> bool:
    return HAVE_NATIVE


class PreparedP2PBlock:
    """A p2p block flattened to arrays once, ready for repeated native runs."""

    def __init__(self, block: list, storage: P2PStorage) -> None:
        if not isinstance(storage, P2PStorage):
            raise TypeError("native engine needs a P2PStorage")
        shape = block[0].shape if block else None
        senders = array("i")
        receivers = array("i")
        amounts = array("q")
        for txn in block:
            if not isinstance(txn, P2PTransaction) or (shape is not None and txn.shape != shape):
                raise TypeError("native engine needs a uniform p2p block")
            senders.append(txn.sender)
            receivers.append(txn.receiver)
            amounts.append(txn.amount)
        self.block_size = len(block)
        self.senders = senders
        self.receivers = receivers
        self.amounts = amounts
        self.num_accounts = storage.num_accounts
        self.initial_balance = storage.initial_balance
        self.aux_reads = shape.aux_reads if shape else 0
        self.write_marker = shape.write_marker if shape else False

    def _decode_state(self, locs: list, values: list) -> dict:
        """Map native location ids back to the byte keys the pure workload
        uses, so final states are directly comparable across engines."""
        account_cells = 3 * self.num_accounts
        keys = (balance_key, seqnum_key, marker_key)
        state = {}
        for loc, value in zip(locs, values):
            if loc < account_cells:
                key = keys[loc % 3](loc // 3)
            else:
                key = aux_key(loc - account_cells)
            state[key] = encode_value(value)
        return state

    def run_parallel(self, num_threads: int, spin_ns: int = 0) -> BlockExecutionOutput:
        if num_threads < 1:
            raise ValueError("num_threads must be >= 1")
        locs, values, aborts = _native.p2p_parallel(
            self.senders, self.receivers, self.amounts, self.num_accounts,
            self.aux_reads, self.write_marker, self.initial_balance,
            spin_ns, num_threads)
        return BlockExecutionOutput(
            final_state=self._decode_state(locs, values),
            incarnations=[], aborts=aborts, engine="native")

    def run_sequential(self, spin_ns: int = 0) -> dict:
        locs, values, _ = _native.p2p_sequential(
            self.senders, self.receivers, self.amounts, self.num_accounts,
            self.aux_reads, self.write_marker, self.initial_balance, spin_ns)
        return self._decode_state(locs, values)


def _native_eligible(config: BlockExecutionConfig) -> bool:
    if not HAVE_NATIVE:
        return False
    if config.instrumentation or config.delay_injector is not None:
        return False
    if not isinstance(config.storage, P2PStorage):
        return False
    if not all(isinstance(txn, P2PTransaction) for txn in config.block):
        return False
    shape = config.block[0].shape if config.block else None
    return all(txn.shape == shape for txn in config.block)


def execute_block(config: BlockExecutionConfig) -> BlockExecutionOutput:
    """Block-level entry point; dispatches to the selected engine."""
    choice = config.engine
    if choice == "auto":
        choice = os.environ.get("PAREXEC_ENGINE", "auto")
    if choice == "auto":
        choice = "native" if _native_eligible(config) else "pure"
    if choice == "native":
        if not HAVE_NATIVE:
            raise RuntimeError("native engine requested but the extension is not built")
        if not _native_eligible(config):
            raise RuntimeError("native engine requested but the block is not "
                               "a uniform p2p block over P2PStorage (or "
                               "instrumentation/delays were requested)")
        prepared = PreparedP2PBlock(config.block, config.storage)
        return prepared.run_parallel(config.num_threads, config.spin_ns)
    if choice != "pure":
        raise ValueError("unknown engine %r" % (config.engine,))
    return execute_block_pure(config)


def prepare_block(block: list, storage) -> Optional[PreparedP2PBlock]:
    """Pre-flatten a block for repeated native runs; None when ineligible."""
    if not HAVE_NATIVE or not isinstance(storage, P2PStorage):
        return None
    try:
        return PreparedP2PBlock(block, storage)
    except TypeError:
        return None
