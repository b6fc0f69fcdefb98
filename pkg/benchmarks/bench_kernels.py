#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the grouped-aggregation primitives on synthetic fact columns and a
realistic end-to-end pivot, printing one table per row count. The same
arrays go through both backends, and results are checked for bit equality
while timing.

    python3 benchmarks/bench_kernels.py [--rows 1000000] [--repeat 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from cibcube import kernels
from cibcube.cube import CubeQuery, build_cube, execute
from cibcube.schema import load_bundled_schema
from cibcube.store import LoadStats, WarehouseSnapshot
from cibcube.synth import generate_snapshot_tables


def time_call(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_primitives(n_rows: int, n_groups: int, repeat: int) -> None:
    rng = np.random.default_rng(0)
    idx = rng.integers(0, n_groups, n_rows).astype(np.int64)
    values = rng.integers(0, 10**9, n_rows).astype(np.int64)
    periods = rng.integers(0, 60, n_rows).astype(np.int64)

    ops = {
        "group_sum": lambda: kernels.group_sum(idx, values, n_groups),
        "group_count": lambda: kernels.group_count(idx, n_groups),
        "group_min": lambda: kernels.group_min(idx, values, n_groups),
        "group_last_period": lambda: kernels.group_last_period(idx, periods, n_groups),
        "group_agg_at_period": lambda: kernels.group_agg_at_period(
            idx, periods, values, kernels.group_last_period(idx, periods, n_groups), n_groups, kernels.AGG_SUM
        ),
    }

    print(f"\nprimitives: {n_rows:,} rows, {n_groups:,} groups (best of {repeat})")
    print(f"{'kernel':<22} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for name, fn in ops.items():
        timings = {}
        baseline = {}
        for backend in ("numpy", "numba") if kernels.HAVE_NUMBA else ("numpy",):
            kernels.set_backend(backend)
            fn()  # warm (JIT compile on first numba call)
            timings[backend] = time_call(fn, repeat)
            baseline[backend] = fn()
        if kernels.HAVE_NUMBA:
            assert np.array_equal(baseline["numpy"], baseline["numba"]), name
            speedup = timings["numpy"] / timings["numba"]
            print(f"{name:<22} {timings['numpy'] * 1e3:>8.2f}ms {timings['numba'] * 1e3:>8.2f}ms {speedup:>7.1f}x")
        else:
            print(f"{name:<22} {timings['numpy'] * 1e3:>8.2f}ms {'n/a':>10} {'':>8}")


def bench_pivot(n_rows: int, repeat: int) -> None:
    schema = load_bundled_schema()
    tables, columns = generate_snapshot_tables(
        schema,
        n_borrowers=10_000,
        n_institutes=50,
        n_guarantors=500,
        n_facts=n_rows,
        n_groups=1_250,
        months=60,
        seed=0,
    )
    snapshot = WarehouseSnapshot(1, schema, tables, columns, LoadStats())
    query = CubeQuery(
        row_axis=(("Borrower", "Group"),),
        column_axis=(("Time", "Year"),),
        measures=("outstanding_amount", "facility_count"),
    )

    print(f"\nend to end: Group x Year pivot over {n_rows:,} facts (best of {repeat})")
    print(f"{'stage':<22} {'numpy':>10} {'numba':>10}")
    timings: dict[str, dict[str, float]] = {"build": {}, "leaf pivot": {}, "warm pivot": {}}
    for backend in ("numpy", "numba") if kernels.HAVE_NUMBA else ("numpy",):
        kernels.set_backend(backend)
        build_cube(WarehouseSnapshot(1, schema, *generate_snapshot_tables(schema, n_facts=100, seed=1), LoadStats()))
        timings["build"][backend] = time_call(
            lambda: build_cube(snapshot, [{"Borrower": "Group", "Time": "Year"}]), 1
        )
        bare = build_cube(snapshot, [])
        execute(bare, query)
        timings["leaf pivot"][backend] = time_call(lambda: execute(bare, query), repeat)
        planned = build_cube(snapshot, [{"Borrower": "Group", "Time": "Year"}])
        execute(planned, query)
        timings["warm pivot"][backend] = time_call(lambda: execute(planned, query), repeat)
    for stage, per_backend in timings.items():
        numpy_ms = per_backend["numpy"] * 1e3
        numba_ms = per_backend.get("numba")
        right = f"{numba_ms * 1e3:>8.2f}ms" if numba_ms is not None else f"{'n/a':>10}"
        print(f"{stage:<22} {numpy_ms:>8.2f}ms {right}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=1_000_000)
    parser.add_argument("--groups", type=int, default=6_000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    print(f"numba available: {kernels.HAVE_NUMBA}")
    bench_primitives(args.rows, args.groups, args.repeat)
    bench_pivot(args.rows, args.repeat)


if __name__ == "__main__":
    main()
