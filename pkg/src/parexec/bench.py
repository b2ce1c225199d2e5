"""Benchmark harness and CLI.

`bench run` times execute_block across a matrix of workload specs and thread
counts and reports throughput/speedup against the sequential baseline of the
same lane (pure vs pure, native vs native). `bench verify` fuzzes random
configurations against the sequential oracle under a time budget.

Timing covers execute_block only — storage reads, execution, validation and
snapshot construction — never block generation or report I/O. A watchdog
observes every run; a hang or an equivalence failure makes the process exit
nonzero.

Environment overrides (optional, documented, never required):
  PAREXEC_ENGINE    default engine for --engine auto (auto|pure|native)
  PAREXEC_WATCHDOG  default per-block watchdog seconds (default 60)
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import statistics
import sys
import threading
import time
from typing import Callable, Optional

from . import engine
from .executor import BlockExecutionConfig
from .workload import WorkloadSpec, build_storage, check_equivalence, execute_sequential, generate_block

DEFAULT_WATCHDOG_S = float(os.environ.get("PAREXEC_WATCHDOG", "60"))

EXIT_OK = 0
EXIT_EQUIVALENCE = 1
EXIT_USAGE = 2
EXIT_WATCHDOG = 3

REPORT_FIELDS = ("engine", "shape", "block_size", "num_accounts", "threads",
                 "runs", "mean_tps", "speedup", "mean_aborts")


class WatchdogTimeout(RuntimeError):
    pass


def run_with_watchdog(fn: Callable, timeout_s: float):
    """Run fn() on a watched thread; WatchdogTimeout if it outlives the budget.

    The watchdog only observes — a timed-out run's threads are left behind
    (daemonized), and the CLI turns the timeout into a hard nonzero exit.
    """
    box: dict = {}

    def target():
        try:
            box["value"] = fn()
        except BaseException as exc:  # surfaced on the caller's thread
            box["error"] = exc

    thread = threading.Thread(target=target, daemon=True)
    thread.start()
    thread.join(timeout_s)
    if thread.is_alive():
        raise WatchdogTimeout("block run exceeded %.1f s watchdog" % timeout_s)
    if "error" in box:
        raise box["error"]
    return box.get("value")


def _time_run(fn: Callable, watchdog_s: float):
    start = time.perf_counter()
    value = run_with_watchdog(fn, watchdog_s)
    return time.perf_counter() - start, value


def _bench_cell(spec: WorkloadSpec, block, storage, prepared, lane: str,
                threads: int, runs: int, spin_ns: int, check: bool,
                watchdog_s: float, failures: list) -> dict:
    """One report row: mean over `runs` timed executions after one warmup."""

    if lane == "native":
        def run_parallel():
            return prepared.run_parallel(threads, spin_ns)

        def run_baseline():
            return prepared.run_sequential(spin_ns)
    else:
        config = BlockExecutionConfig(block=block, num_threads=threads,
                                      storage=storage, engine="pure",
                                      spin_ns=spin_ns)

        def run_parallel():
            return engine.execute_block(config)

        def run_baseline():
            return execute_sequential(block, storage, spin_ns)

    baseline_elapsed, expected = _time_run(run_baseline, watchdog_s)
    run_with_watchdog(run_parallel, watchdog_s)  # warmup, untimed
    times, aborts = [], []
    for _ in range(runs):
        elapsed, output = _time_run(run_parallel, watchdog_s)
        times.append(elapsed)
        aborts.append(output.aborts)
        if check:
            ok, diff = check_equivalence(output.final_state, expected)
            if not ok:
                failures.append((spec, threads, lane, diff[:10]))
    mean_time = statistics.fmean(times)
    return {
        "engine": lane,
        "shape": spec.shape,
        "block_size": spec.block_size,
        "num_accounts": spec.num_accounts,
        "threads": threads,
        "runs": runs,
        "mean_tps": (spec.block_size / mean_time) if mean_time > 0 else 0.0,
        "speedup": (baseline_elapsed / mean_time) if mean_time > 0 else 0.0,
        "mean_aborts": statistics.fmean(aborts),
    }


def run_benchmark(specs, thread_counts, runs: int = 10, engine_choice: str = "auto",
                  check: bool = False, spin_ns: int = 0,
                  watchdog_s: float = DEFAULT_WATCHDOG_S):
    """Benchmark the matrix specs x thread_counts; returns (rows, failures)."""
    lanes = _lanes_for(engine_choice)
    rows, failures = [], []
    for spec in specs:
        block = generate_block(spec)
        storage = build_storage(spec)
        prepared = engine.prepare_block(block, storage) if "native" in lanes else None
        for lane in lanes:
            if lane == "native" and prepared is None:
                raise RuntimeError("native engine requested but unavailable")
            for threads in thread_counts:
                rows.append(_bench_cell(spec, block, storage, prepared, lane,
                                        threads, runs, spin_ns, check,
                                        watchdog_s, failures))
    return rows, failures


def _lanes_for(engine_choice: str):
    if engine_choice == "both":
        return ["pure", "native"] if engine.native_available() else ["pure"]
    if engine_choice == "auto":
        return ["native"] if engine.native_available() else ["pure"]
    if engine_choice in ("pure", "native"):
        return [engine_choice]
    raise ValueError("unknown engine %r" % engine_choice)


# -- report formatting -------------------------------------------------------

def format_report(rows, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(rows, indent=2)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=REPORT_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in REPORT_FIELDS})
        return buf.getvalue()
    if fmt == "table":
        widths = {k: max(len(k), *(len(_cell(r[k])) for r in rows)) if rows else len(k)
                  for k in REPORT_FIELDS}
        lines = ["  ".join(k.ljust(widths[k]) for k in REPORT_FIELDS)]
        for row in rows:
            lines.append("  ".join(_cell(row[k]).ljust(widths[k]) for k in REPORT_FIELDS))
        return "\n".join(lines) + "\n"
    raise ValueError("unknown output format %r" % fmt)


def _cell(value) -> str:
    if isinstance(value, float):
        return "%.2f" % value
    return str(value)


def _emit(text: str, out_path: Optional[str]) -> None:
    if out_path:
        with open(out_path, "w") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


# -- CLI ----------------------------------------------------------------------

def _cmd_run(args) -> int:
    spec = WorkloadSpec(block_size=args.block_size, num_accounts=args.accounts,
                        shape=args.shape, seed=args.seed)
    thread_counts = [int(t) for t in args.threads.split(",")]
    try:
        rows, failures = run_benchmark(
            [spec], thread_counts, runs=args.runs, engine_choice=args.engine,
            check=args.check, spin_ns=args.spin_ns, watchdog_s=args.watchdog)
    except WatchdogTimeout as timeout:
        print("watchdog: %s" % timeout, file=sys.stderr)
        os._exit(EXIT_WATCHDOG)  # stuck worker threads cannot be reaped
    _emit(format_report(rows, args.output), args.out)
    for spec_, threads, lane, diff in failures:
        print("equivalence FAILED (%s, %d threads): first diffs %r"
              % (lane, threads, diff), file=sys.stderr)
    return EXIT_EQUIVALENCE if failures else EXIT_OK


def _cmd_verify(args) -> int:
    import random

    rng = random.Random(args.seed)
    deadline = time.monotonic() + args.budget
    lanes = _lanes_for(args.engine)
    checked = 0
    failures = 0
    try:
        while time.monotonic() < deadline:
            spec = WorkloadSpec(
                block_size=rng.choice([10, 50, 200, 1000]),
                num_accounts=rng.choice([2, 3, 10, 100, 1000]),
                shape=rng.choice(["diem", "aptos"]),
                seed=rng.getrandbits(63),
            )
            block = generate_block(spec)
            storage = build_storage(spec)
            expected = execute_sequential(block, storage)
            for lane in lanes:
                threads = rng.choice([1, 2, 4, 8])
                config = BlockExecutionConfig(block=block, num_threads=threads,
                                              storage=storage, engine=lane)
                output = run_with_watchdog(lambda: engine.execute_block(config),
                                           args.watchdog)
                ok, diff = check_equivalence(output.final_state, expected)
                checked += 1
                if not ok:
                    failures += 1
                    print("MISMATCH %s threads=%d spec=%r first-diffs=%r"
                          % (lane, threads, spec, diff[:5]), file=sys.stderr)
    except WatchdogTimeout as timeout:
        print("watchdog: %s" % timeout, file=sys.stderr)
        os._exit(EXIT_WATCHDOG)
    print("verify: %d runs checked, %d failures (lanes: %s)"
          % (checked, failures, ",".join(lanes)))
    return EXIT_EQUIVALENCE if failures else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bench",
        description="Benchmark and verify the parallel block execution engine.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="time a workload matrix and report")
    run_p.add_argument("--block-size", type=int, default=1000)
    run_p.add_argument("--accounts", type=int, default=1000)
    run_p.add_argument("--threads", default="1,2,4,8",
                       help="comma-separated thread counts")
    run_p.add_argument("--shape", choices=["diem", "aptos"], default="aptos")
    run_p.add_argument("--runs", type=int, default=10)
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--check", action="store_true",
                       help="cross-check equivalence on every timed run")
    run_p.add_argument("--engine", choices=["auto", "pure", "native", "both"],
                       default="auto")
    run_p.add_argument("--spin-ns", type=int, default=0,
                       help="synthetic per-transaction compute, nanoseconds")
    run_p.add_argument("--output", choices=["json", "csv", "table"], default="table")
    run_p.add_argument("--out", default=None, help="write the report to a file")
    run_p.add_argument("--watchdog", type=float, default=DEFAULT_WATCHDOG_S)
    run_p.set_defaults(func=_cmd_run)

    verify_p = sub.add_parser("verify", help="equivalence fuzzing under a time budget")
    verify_p.add_argument("--budget", type=float, default=30.0,
                          help="seconds of fuzzing")
    verify_p.add_argument("--seed", type=int, default=0)
    verify_p.add_argument("--engine", choices=["auto", "pure", "native", "both"],
                          default="both" if engine.native_available() else "pure")
    verify_p.add_argument("--watchdog", type=float, default=DEFAULT_WATCHDOG_S)
    verify_p.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
