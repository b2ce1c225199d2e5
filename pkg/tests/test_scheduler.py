"""Scheduler contract tests, including the scripted races the contracts pin."""
import threading

import pytest

from conftest import claim_execution, claim_validation_slot
from parexec.core import (
    ABORTING,
    EXECUTED,
    EXECUTING,
    EXECUTION_TASK,
    READY_TO_EXECUTE,
    VALIDATION_TASK,
    EngineInvariantError,
    Version,
)
from parexec.scheduler import Scheduler


def drive_to_executed(scheduler, txn_idx, wrote_new_location=True):
    """Execute txn_idx start-to-finish through the public ops."""
    claim_execution(scheduler, txn_idx)
    task = scheduler.finish_execution(
        txn_idx, scheduler.status_of(txn_idx)[0], wrote_new_location)
    return task


# -- done / check_done ---------------------------------------------------------


def test_done_false_on_fresh_scheduler():
    assert Scheduler(3).done() is False


def test_check_done_success_sets_marker():
    scheduler = Scheduler(1)
    drive_to_executed(scheduler, 0)
    scheduler.execution_idx.store(1)
    scheduler.validation_idx.store(1)
    scheduler.check_done()
    assert scheduler.done() is True


def test_check_done_requires_zero_active_tasks():
    scheduler = Scheduler(1)
    scheduler.execution_idx.store(1)
    scheduler.validation_idx.store(1)
    scheduler.num_active_tasks.increment()
    scheduler.check_done()
    assert scheduler.done() is False


def test_check_done_detects_decrease_between_collects():
    # Scripted interleaving: a decrease lands between the two counter reads.
    scheduler = Scheduler(1)
    scheduler.execution_idx.store(5)
    scheduler.validation_idx.store(5)

    fired = []

    def inject_once():
        if not fired:
            fired.append(True)
            scheduler.decrease_validation_idx(5)  # min() no-op, counter still bumps

    scheduler._between_collects = inject_once
    scheduler.check_done()
    assert scheduler.done() is False  # double collect failed
    scheduler.check_done()
    assert scheduler.done() is True  # stable second time around


def test_empty_block_done_after_first_check():
    scheduler = Scheduler(0)
    assert scheduler.done() is False
    assert scheduler.next_task() is None  # triggers check_done on the way out
    assert scheduler.done() is True


# -- decrease ops -----------------------------------------------------------


def test_decrease_execution_idx_takes_min_and_counts():
    scheduler = Scheduler(10)
    scheduler.execution_idx.store(7)
    scheduler.decrease_execution_idx(3)
    assert scheduler.execution_idx.load() == 3
    assert scheduler.decrease_cnt.load() == 1


def test_decrease_execution_idx_noop_min_still_counts():
    scheduler = Scheduler(10)
    scheduler.execution_idx.store(2)
    scheduler.decrease_execution_idx(5)
    assert scheduler.execution_idx.load() == 2
    assert scheduler.decrease_cnt.load() == 1


def test_decrease_execution_idx_concurrent_min():
    # Two-thread stress: final value is the min of all targets.
    scheduler = Scheduler(10)
    scheduler.execution_idx.store(9)
    barrier = threading.Barrier(2)

    def decrease(target):
        barrier.wait()
        scheduler.decrease_execution_idx(target)

    threads = [threading.Thread(target=decrease, args=(t,)) for t in (4, 2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert scheduler.execution_idx.load() == 2
    assert scheduler.decrease_cnt.load() == 2


def test_decrease_validation_idx_contract():
    scheduler = Scheduler(10)
    scheduler.validation_idx.store(9)
    scheduler.decrease_validation_idx(4)
    assert scheduler.validation_idx.load() == 4
    scheduler.decrease_validation_idx(9)
    assert scheduler.validation_idx.load() == 4
    assert scheduler.decrease_cnt.load() == 2  # exactly once per call


# -- try_incarnate / next_version_* ------------------------------------------


def test_try_incarnate_fresh_txn():
    scheduler = Scheduler(3)
    scheduler.num_active_tasks.increment()
    assert scheduler.try_incarnate(0) == Version(0, 0)
    assert scheduler.status_of(0) == (0, EXECUTING)
    assert scheduler.num_active_tasks.load() == 1  # carried by the version


def test_try_incarnate_already_executing_restores_count():
    scheduler = Scheduler(3)
    claim_execution(scheduler, 0)
    scheduler.num_active_tasks.increment()
    assert scheduler.try_incarnate(0) is None
    assert scheduler.num_active_tasks.load() == 1  # only the first claim remains


def test_try_incarnate_out_of_bounds():
    scheduler = Scheduler(3)
    scheduler.num_active_tasks.increment()
    assert scheduler.try_incarnate(3) is None
    assert scheduler.num_active_tasks.load() == 0


def test_next_version_to_execute_fresh():
    scheduler = Scheduler(3)
    assert scheduler.next_version_to_execute() == Version(0, 0)
    assert scheduler.execution_idx.load() == 1


def test_next_version_to_execute_exhausted_invokes_check_done():
    scheduler = Scheduler(1)
    drive_to_executed(scheduler, 0)
    scheduler.execution_idx.store(1)
    scheduler.validation_idx.store(1)
    assert scheduler.next_version_to_execute() is None
    assert scheduler.done() is True  # check_done ran and the conditions held


def test_next_version_to_execute_skips_executed_txn():
    # Pre-drive txn 0 to EXECUTED, then point the index back at it.
    scheduler = Scheduler(2)
    drive_to_executed(scheduler, 0)
    scheduler.decrease_execution_idx(0)
    assert scheduler.next_version_to_execute() is None
    assert scheduler.num_active_tasks.load() == 0
    assert scheduler.execution_idx.load() == 1


def test_next_version_to_validate_executed_txn():
    scheduler = Scheduler(3)
    drive_to_executed(scheduler, 0)
    assert scheduler.next_version_to_validate() == Version(0, 0)
    assert scheduler.num_active_tasks.load() == 1


def test_next_version_to_validate_executing_txn_gives_nothing():
    scheduler = Scheduler(3)
    claim_execution(scheduler, 0)
    assert scheduler.next_version_to_validate() is None
    assert scheduler.num_active_tasks.load() == 1  # just the claimed execution


def test_next_version_to_validate_exhausted():
    scheduler = Scheduler(1)
    drive_to_executed(scheduler, 0)
    scheduler.validation_idx.store(1)
    scheduler.execution_idx.store(1)
    assert scheduler.next_version_to_validate() is None
    assert scheduler.done() is True


# -- next_task ---------------------------------------------------------------


def test_next_task_prefers_validation_when_behind():
    scheduler = Scheduler(3)
    drive_to_executed(scheduler, 0)  # execution_idx advanced to 1 by the claim
    scheduler.execution_idx.store(3)
    task = scheduler.next_task()
    assert task.kind == VALIDATION_TASK
    assert task.version == Version(0, 0)


def test_next_task_tie_goes_to_execution():
    scheduler = Scheduler(3)
    task = scheduler.next_task()
    assert task.kind == EXECUTION_TASK
    assert task.version == Version(0, 0)


def test_next_task_exhausted_returns_nothing():
    scheduler = Scheduler(1)
    drive_to_executed(scheduler, 0)
    scheduler.execution_idx.store(1)
    scheduler.validation_idx.store(1)
    assert scheduler.next_task() is None


def test_drive_to_executed_uses_execution_index():
    scheduler = Scheduler(2)
    task = scheduler.next_task()
    assert task == (EXECUTION_TASK, Version(0, 0))
    result = scheduler.finish_execution(0, 0, True)
    assert result is None
    assert scheduler.status_of(0) == (0, EXECUTED)


# -- dependencies ------------------------------------------------------------


def test_add_dependency_blocking_not_executed():
    scheduler = Scheduler(3)
    claim_execution(scheduler, 0)
    claim_execution(scheduler, 2)
    assert scheduler.add_dependency(2, 0) is True
    assert scheduler.dependencies_of(0) == {2}
    assert scheduler.status_of(2) == (0, ABORTING)
    assert scheduler.num_active_tasks.load() == 1  # txn 2's claim released


def test_add_dependency_blocking_already_executed():
    scheduler = Scheduler(3)
    drive_to_executed(scheduler, 0)
    claim_execution(scheduler, 2)
    assert scheduler.add_dependency(2, 0) is False
    assert scheduler.dependencies_of(0) == frozenset()
    assert scheduler.status_of(2) == (0, EXECUTING)  # caller retries immediately


def test_add_dependency_two_dependents_both_parked():
    scheduler = Scheduler(4)
    claim_execution(scheduler, 0)
    claim_execution(scheduler, 2)
    claim_execution(scheduler, 3)
    assert scheduler.add_dependency(2, 0) is True
    assert scheduler.add_dependency(3, 0) is True
    assert scheduler.dependencies_of(0) == {2, 3}


# -- set_ready_status / resume_dependencies ----------------------------------


def test_set_ready_status_bumps_incarnation():
    scheduler = Scheduler(2)
    claim_execution(scheduler, 0)
    claim_execution(scheduler, 1)
    scheduler.add_dependency(1, 0)
    assert scheduler.status_of(1) == (0, ABORTING)
    scheduler.set_ready_status(1)
    assert scheduler.status_of(1) == (1, READY_TO_EXECUTE)


def test_set_ready_status_higher_incarnation():
    scheduler = Scheduler(1)
    for expected_incarnation in range(5):
        version = claim_execution(scheduler, 0)
        assert version.incarnation == expected_incarnation
        scheduler.finish_execution(0, expected_incarnation, True)
        assert scheduler.try_validation_abort(0, expected_incarnation) is True
        scheduler.set_ready_status(0)
    assert scheduler.status_of(0) == (5, READY_TO_EXECUTE)


def test_set_ready_status_requires_aborting():
    scheduler = Scheduler(1)
    drive_to_executed(scheduler, 0)
    with pytest.raises(EngineInvariantError):
        scheduler.set_ready_status(0)


def test_resume_dependencies_empty_is_noop():
    scheduler = Scheduler(3)
    scheduler.execution_idx.store(3)
    scheduler.resume_dependencies(set())
    assert scheduler.execution_idx.load() == 3
    assert scheduler.decrease_cnt.load() == 0


def test_resume_dependencies_single():
    scheduler = Scheduler(9)
    claim_execution(scheduler, 0)
    claim_execution(scheduler, 5)
    scheduler.add_dependency(5, 0)
    scheduler.execution_idx.store(9)
    scheduler.resume_dependencies({5})
    assert scheduler.status_of(5) == (1, READY_TO_EXECUTE)
    assert scheduler.execution_idx.load() == 5


def test_resume_dependencies_pair_uses_min():
    scheduler = Scheduler(9)
    claim_execution(scheduler, 0)
    claim_execution(scheduler, 5)
    claim_execution(scheduler, 7)
    scheduler.add_dependency(5, 0)
    scheduler.add_dependency(7, 0)
    scheduler.execution_idx.store(9)
    scheduler.resume_dependencies({5, 7})
    assert scheduler.status_of(5) == (1, READY_TO_EXECUTE)
    assert scheduler.status_of(7) == (1, READY_TO_EXECUTE)
    assert scheduler.execution_idx.load() == 5


# -- finish_execution ----------------------------------------------------------


def test_finish_execution_new_location_pulls_validation_idx():
    scheduler = Scheduler(10)
    claim_execution(scheduler, 4)
    scheduler.validation_idx.store(9)
    assert scheduler.finish_execution(4, 0, True) is None
    assert scheduler.validation_idx.load() == 4
    assert scheduler.num_active_tasks.load() == 0


def test_finish_execution_same_locations_returns_validation_task():
    scheduler = Scheduler(10)
    claim_execution(scheduler, 4)
    scheduler.validation_idx.store(9)
    task = scheduler.finish_execution(4, 0, False)
    assert task == (VALIDATION_TASK, Version(4, 0))
    assert scheduler.validation_idx.load() == 9
    assert scheduler.num_active_tasks.load() == 1  # carried by the task


def test_finish_execution_validation_idx_already_low():
    scheduler = Scheduler(10)
    claim_execution(scheduler, 4)
    scheduler.validation_idx.store(2)
    assert scheduler.finish_execution(4, 0, True) is None
    assert scheduler.validation_idx.load() == 2  # untouched
    assert scheduler.decrease_cnt.load() == 0
    assert scheduler.num_active_tasks.load() == 0


def test_finish_execution_requires_executing():
    scheduler = Scheduler(2)
    with pytest.raises(EngineInvariantError):
        scheduler.finish_execution(0, 0, True)


# -- try_validation_abort ------------------------------------------------------


def test_try_validation_abort_wins_on_matching_version():
    scheduler = Scheduler(5)
    claim_execution(scheduler, 1)
    scheduler.finish_execution(1, 0, True)
    # Drive to incarnation 2 so the interesting version is (1, 2).
    for incarnation in (0, 1):
        assert scheduler.try_validation_abort(1, incarnation) is True
        scheduler.set_ready_status(1)
        claim_execution(scheduler, 1)
        scheduler.finish_execution(1, incarnation + 1, True)
    assert scheduler.try_validation_abort(1, 2) is True
    assert scheduler.status_of(1) == (2, ABORTING)


def test_try_validation_abort_stale_task_loses():
    scheduler = Scheduler(5)
    claim_execution(scheduler, 1)
    scheduler.finish_execution(1, 0, True)
    assert scheduler.try_validation_abort(1, 0) is True
    scheduler.set_ready_status(1)
    claim_execution(scheduler, 1)
    scheduler.finish_execution(1, 1, True)
    # A validation task for incarnation 0 is stale against EXECUTED(1).
    assert scheduler.try_validation_abort(1, 0) is False


def test_try_validation_abort_race_single_winner():
    # Two threads race to abort the same version: exactly one wins.
    for _ in range(20):
        scheduler = Scheduler(2)
        claim_execution(scheduler, 0)
        scheduler.finish_execution(0, 0, True)
        barrier = threading.Barrier(2)
        wins = []

        def race():
            barrier.wait()
            if scheduler.try_validation_abort(0, 0):
                wins.append(1)

        threads = [threading.Thread(target=race) for _ in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sum(wins) == 1


# -- finish_validation -----------------------------------------------------------


def _aborted_txn_scheduler(txn_idx=4, size=10):
    scheduler = Scheduler(size)
    claim_execution(scheduler, txn_idx)
    scheduler.finish_execution(txn_idx, 0, True)
    claim_validation_slot(scheduler)  # the validation task we now "hold"
    assert scheduler.try_validation_abort(txn_idx, 0) is True
    return scheduler


def test_finish_validation_aborted_returns_reexecution_task():
    scheduler = _aborted_txn_scheduler()
    scheduler.execution_idx.store(9)
    task = scheduler.finish_validation(4, True)
    assert task == (EXECUTION_TASK, Version(4, 1))
    assert scheduler.validation_idx.load() <= 5
    assert scheduler.num_active_tasks.load() == 1  # carried by the task


def test_finish_validation_aborted_execution_idx_low():
    scheduler = _aborted_txn_scheduler()
    scheduler.execution_idx.store(2)
    assert scheduler.finish_validation(4, True) is None
    assert scheduler.validation_idx.load() <= 5
    assert scheduler.status_of(4) == (1, READY_TO_EXECUTE)
    assert scheduler.num_active_tasks.load() == 0


def test_finish_validation_not_aborted_only_decrements():
    scheduler = Scheduler(10)
    claim_execution(scheduler, 4)
    scheduler.finish_execution(4, 0, True)
    claim_validation_slot(scheduler)
    counters_before = scheduler.decrease_cnt.load()
    assert scheduler.finish_validation(4, False) is None
    assert scheduler.num_active_tasks.load() == 0
    assert scheduler.decrease_cnt.load() == counters_before
    assert scheduler.status_of(4) == (0, EXECUTED)


def test_finish_validation_lost_incarnate_race_single_decrement():
    # The re-execution slot can be stolen between set_ready and try_incarnate
    # (execution index swept over it); the count must not go negative.
    scheduler = _aborted_txn_scheduler()
    scheduler.execution_idx.store(9)
    stolen = {}

    original = scheduler.set_ready_status

    def steal_after_ready(txn_idx):
        original(txn_idx)
        scheduler.num_active_tasks.increment()
        stolen["version"] = scheduler.try_incarnate(txn_idx)

    scheduler.set_ready_status = steal_after_ready
    assert scheduler.finish_validation(4, True) is None
    assert stolen["version"] == Version(4, 1)
    # One count remains: the stolen execution task; the validation's count
    # was released exactly once.
    assert scheduler.num_active_tasks.load() == 1


# -- conservation under a real concurrent run ---------------------------------


def test_active_tasks_never_negative_under_stress():
    observed = []
    scheduler = Scheduler(50)

    def hammer():
        while not scheduler.done():
            task = scheduler.next_task()
            if task is None:
                observed.append(scheduler.num_active_tasks.load())
                continue
            if task.kind == EXECUTION_TASK:
                scheduler.finish_execution(task.version.txn_idx,
                                           task.version.incarnation, False)
            else:
                scheduler.finish_validation(task.version.txn_idx, False)

    threads = [threading.Thread(target=hammer) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(count >= 0 for count in observed)
    assert scheduler.num_active_tasks.load() == 0
    assert all(scheduler.status_of(j)[1] == EXECUTED for j in range(50))
