"""parexec: a parallel in-memory block execution engine.

Executes a block of transactions speculatively across threads and produces a
final state bit-identical to executing the block sequentially in its preset
order. Ships a pure-Python engine and an optional compiled core (used
automatically for the built-in p2p workload when the extension is available).
"""

from .core import (
    ABORTING,
    EXECUTED,
    EXECUTING,
    EXECUTION_TASK,
    READY_TO_EXECUTE,
    VALIDATION_TASK,
    EngineInvariantError,
    ReadDescriptor,
    Task,
    Version,
    version_compare,
)
from .engine import HAVE_NATIVE, execute_block, native_available, prepare_block
from .executor import BlockExecutionConfig, BlockExecutionOutput, execute_block_pure
from .mvmemory import ESTIMATE, MVMemory
from .scheduler import Scheduler
from .vm import P2PShape, P2PStorage, P2PTransaction, Storage, vm_execute
from .workload import (
    WorkloadSpec,
    build_storage,
    check_equivalence,
    execute_sequential,
    generate_block,
)

__version__ = "0.1.0"

__all__ = [
    "ABORTING", "EXECUTED", "EXECUTING", "EXECUTION_TASK", "READY_TO_EXECUTE",
    "VALIDATION_TASK", "EngineInvariantError", "ReadDescriptor", "Task",
    "Version", "version_compare", "HAVE_NATIVE", "execute_block",
    "native_available", "prepare_block", "BlockExecutionConfig",
    "BlockExecutionOutput", "execute_block_pure", "ESTIMATE", "MVMemory",
    "Scheduler", "P2PShape", "P2PStorage", "P2PTransaction", "Storage",
    "vm_execute", "WorkloadSpec", "build_storage", "check_equivalence",
    "execute_sequential", "generate_block",
]
