"""Synthetic data generators for benchmarks, load tests, and property suites.

Two levels: raw extract files (driven through the full pipeline) and
ready-made dimension tables plus fact arrays (published straight to a
store when only cube behavior is under test). Everything is seeded and
deterministic.
"""

from __future__ import annotations

import csv
from pathlib import Path
from random import Random

import numpy as np

from .schema import Aggregator, StarSchema
from .store import DimensionRow, DimensionTable

TYPE_CODES = ("B0", "B1", "B2", "RP")
SECTORS = ("A (Agriculture)", "B (Bank)", "C (Commerce)", "E (Energy)", "T (Textile)")
INSTITUTE_TYPES = ("CB", "DFI", "LEASING")


def _month_str(year: int, month: int) -> str:
    return f"{year:04d}-{month:02d}"


def generate_extracts(
    out_dir: str | Path,
    *,
    n_borrowers: int = 50,
    n_institutes: int = 5,
    n_guarantors: int = 8,
    n_borrowings: int = 300,
    n_groups: int = 8,
    months: int = 6,
    start_year: int = 1999,
    seed: int = 0,
    orphan_rows: int = 0,
    duplicate_rows: int = 0,
    garbage_rows: int = 0,
) -> dict[str, int]:
    """Write the four extract files; returns per-file data row counts.

    Injected problems: ``orphan_rows`` borrowings referencing unknown
    borrowers, ``duplicate_rows`` repeated borrower keys, ``garbage_rows``
    borrowings with unparseable amounts or dates.
    """
    rng = Random(seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    # strict hierarchy: a group always sits under one (type, sector) pair
    group_attrs = {
        f"GROUP {g:03d}": (rng.choice(TYPE_CODES), rng.choice(SECTORS)) for g in range(n_groups)
    }
    borrower_rows = []
    for i in range(1, n_borrowers + 1):
        group = f"GROUP {rng.randrange(n_groups):03d}" if rng.random() < 0.8 else ""
        type_code, sector = group_attrs[group] if group else (rng.choice(TYPE_CODES), rng.choice(SECTORS))
        borrower_rows.append(
            [
                f"BRW-{i:05d}",
                f"BORROWER {i:05d} LIMITED",
                type_code,
                sector,
                group,
            ]
        )
    for _ in range(duplicate_rows):
        borrower_rows.append(list(rng.choice(borrower_rows[:n_borrowers])))

    institute_rows = [
        [f"INS-{i:03d}", f"INSTITUTE {i:03d}", rng.choice(INSTITUTE_TYPES)]
        for i in range(1, n_institutes + 1)
    ]
    guarantor_rows = [
        [f"GUA-{i:03d}", f"GUARANTOR {i:03d}"] for i in range(1, n_guarantors + 1)
    ]

    borrowing_rows = []
    for _ in range(n_borrowings):
        month_index = rng.randrange(months)
        year = start_year + month_index // 12
        month = month_index % 12 + 1
        day = rng.choice((15, 28))
        borrowing_rows.append(
            [
                f"BRW-{rng.randrange(1, n_borrowers + 1):05d}",
                f"INS-{rng.randrange(1, n_institutes + 1):03d}",
                f"GUA-{rng.randrange(1, n_guarantors + 1):03d}" if rng.random() < 0.5 else "",
                f"{year:04d}-{month:02d}-{day:02d}",
                str(rng.randrange(0, 5_000_000_00)),
            ]
        )
    for _ in range(orphan_rows):
        row = list(rng.choice(borrowing_rows[: max(1, n_borrowings)]))
        row[0] = f"BRW-9{rng.randrange(10_000):05d}"  # no such borrower
        borrowing_rows.append(row)
    for _ in range(garbage_rows):
        row = list(rng.choice(borrowing_rows[: max(1, n_borrowings)]))
        if rng.random() < 0.5:
            row[4] = "12a4"
        else:
            row[3] = "not-a-date"
        borrowing_rows.append(row)
    rng.shuffle(borrowing_rows)

    files = {
        "borrowers.csv": (["natural_key", "name", "type_code", "sector", "group_name"], borrower_rows),
        "institutes.csv": (["natural_key", "name", "type_code"], institute_rows),
        "guarantors.csv": (["natural_key", "name"], guarantor_rows),
        "borrowings.csv": (
            ["borrower_key", "institute_key", "guarantor_key", "period_date", "outstanding_amount"],
            borrowing_rows,
        ),
    }
    counts = {}
    for filename, (header, rows) in files.items():
        with open(out_dir / filename, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        counts[filename] = len(rows)
    return counts


def generate_snapshot_tables(
    schema: StarSchema,
    *,
    n_borrowers: int = 200,
    n_institutes: int = 10,
    n_guarantors: int = 20,
    n_facts: int = 2_000,
    n_groups: int = 12,
    months: int = 12,
    start_year: int = 1999,
    seed: int = 0,
    max_amount: int = 10_000_000,
) -> tuple[dict[str, DimensionTable], dict[str, np.ndarray]]:
    """Build dimension tables and fact arrays directly, bypassing extracts."""
    rng = np.random.default_rng(seed)
    pyrng = Random(seed + 1)

    borrower = DimensionTable("Borrower", ("Type", "Sector", "Group", "Name"))
    group_attrs = {
        f"GROUP {g:03d}": (pyrng.choice(TYPE_CODES), pyrng.choice(SECTORS)) for g in range(n_groups)
    }
    for i in range(1, n_borrowers + 1):
        group = f"GROUP {pyrng.randrange(n_groups):03d}" if pyrng.random() < 0.85 else "(NO GROUP)"
        type_code, sector = group_attrs.get(group) or (pyrng.choice(TYPE_CODES), pyrng.choice(SECTORS))
        borrower.rows.append(
            DimensionRow(
                i,
                f"BRW-{i:05d}",
                (type_code, sector, group, f"BORROWER {i:05d} LIMITED"),
            )
        )

    institute = DimensionTable("Institute", ("Type", "Name"))
    for i in range(1, n_institutes + 1):
        institute.rows.append(
            DimensionRow(i, f"INS-{i:03d}", (pyrng.choice(INSTITUTE_TYPES), f"INSTITUTE {i:03d}"))
        )

    guarantor = DimensionTable("DirectorGuarantor", ("Name",))
    for i in range(1, n_guarantors + 1):
        guarantor.rows.append(DimensionRow(i, f"GUA-{i:03d}", (f"GUARANTOR {i:03d}",)))

    time_table = DimensionTable("Time", ("Year", "Quarter", "Month"))
    for m in range(months):
        year = start_year + m // 12
        month = m % 12 + 1
        time_table.rows.append(
            DimensionRow(
                m + 1,
                _month_str(year, month),
                (f"{year:04d}", f"Q{(month + 2) // 3}", f"{month:02d}"),
            )
        )

    fact_columns: dict[str, np.ndarray] = {
        "Borrower": rng.integers(1, n_borrowers + 1, n_facts, dtype=np.int32),
        "Institute": rng.integers(1, n_institutes + 1, n_facts, dtype=np.int32),
        "DirectorGuarantor": rng.integers(0, n_guarantors + 1, n_facts, dtype=np.int32),
        "Time": rng.integers(1, months + 1, n_facts, dtype=np.int32),
    }
    for measure in schema.measures:
        if measure.aggregator is Aggregator.COUNT:
            fact_columns[measure.name] = np.ones(n_facts, dtype=np.int64)
        else:
            fact_columns[measure.name] = rng.integers(0, max_amount, n_facts, dtype=np.int64)

    tables = {
        "Borrower": borrower,
        "Institute": institute,
        "DirectorGuarantor": guarantor,
        "Time": time_table,
    }
    return tables, fact_columns
