"""Data-integration pipeline: extract, cleanse, key, transform, load.

Source data arrives as four delimited extract files (borrowers, institutes,
guarantors, borrowings). The pipeline cleanses them row by row, assigns
dense surrogate keys in first-seen order, derives the Time dimension from
the borrowing dates, resolves fact foreign keys, and publishes an immutable
snapshot. Bad rows never crash the run: every dropped row becomes exactly
one reject record, and rows_in = rows_loaded + rows_rejected holds per
table and in total.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from datetime import date
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import EtlError
from .schema import NO_GROUP, Aggregator, StarSchema
from .store import (
    DimensionRow,
    DimensionTable,
    LoadStats,
    RejectRecord,
    SnapshotStore,
    TableStats,
    WarehouseSnapshot,
)


class SourceTable(str, Enum):
    BORROWER = "BORROWER"
    INSTITUTE = "INSTITUTE"
    GUARANTOR = "GUARANTOR"
    BORROWING = "BORROWING"


TABLE_COLUMNS: dict[SourceTable, tuple[str, ...]] = {
    SourceTable.BORROWER: ("natural_key", "name", "type_code", "sector", "group_name"),
    SourceTable.INSTITUTE: ("natural_key", "name", "type_code"),
    SourceTable.GUARANTOR: ("natural_key", "name"),
    SourceTable.BORROWING: ("borrower_key", "institute_key", "guarantor_key", "period_date", "outstanding_amount"),
}

TABLE_FILES: dict[SourceTable, str] = {
    SourceTable.BORROWER: "borrowers.csv",
    SourceTable.INSTITUTE: "institutes.csv",
    SourceTable.GUARANTOR: "guarantors.csv",
    SourceTable.BORROWING: "borrowings.csv",
}

#: Source table feeding each dimension; Time is derived from borrowing dates.
DIMENSION_SOURCES = {
    "Borrower": SourceTable.BORROWER,
    "Institute": SourceTable.INSTITUTE,
    "DirectorGuarantor": SourceTable.GUARANTOR,
}


@dataclass(frozen=True)
class SourceRow:
    source_table: SourceTable
    line_number: int
    fields: tuple[str, ...]
    raw: str = ""


class RuleKind(str, Enum):
    TRIM = "TRIM"
    UPPERCASE_CODES = "UPPERCASE_CODES"
    NULL_TO_REJECT = "NULL_TO_REJECT"
    NUMERIC_PARSE = "NUMERIC_PARSE"
    DATE_PARSE = "DATE_PARSE"
    DEDUPE_ON_KEY = "DEDUPE_ON_KEY"


@dataclass(frozen=True)
class CleanseRule:
    rule_id: str
    kind: RuleKind
    target_column: str


def default_rules() -> dict[SourceTable, list[CleanseRule]]:
    """Standard cleanse rule sets for the four source tables."""
    rules: dict[SourceTable, list[CleanseRule]] = {}
    for table, columns in TABLE_COLUMNS.items():
        prefix = table.value.lower()
        table_rules = [CleanseRule(f"{prefix}_trim_{c}", RuleKind.TRIM, c) for c in columns]
        if "type_code" in columns:
            table_rules.append(CleanseRule(f"{prefix}_upper_type", RuleKind.UPPERCASE_CODES, "type_code"))
        if table is SourceTable.BORROWING:
            for c in ("borrower_key", "institute_key", "period_date", "outstanding_amount"):
                table_rules.append(CleanseRule(f"{prefix}_require_{c}", RuleKind.NULL_TO_REJECT, c))
            table_rules.append(CleanseRule(f"{prefix}_amount_numeric", RuleKind.NUMERIC_PARSE, "outstanding_amount"))
            table_rules.append(CleanseRule(f"{prefix}_date_iso", RuleKind.DATE_PARSE, "period_date"))
        else:
            for c in ("natural_key", "name"):
                table_rules.append(CleanseRule(f"{prefix}_require_{c}", RuleKind.NULL_TO_REJECT, c))
            table_rules.append(CleanseRule(f"{prefix}_dedupe", RuleKind.DEDUPE_ON_KEY, "natural_key"))
        rules[table] = table_rules
    return rules


def extract(paths: Mapping[SourceTable, str | Path]) -> list[SourceRow]:
    """Read extract files into raw source rows, one per non-header line.

    Cells are split but not interpreted. The header row must match the
    table's declared columns exactly.
    """
    rows: list[SourceRow] = []
    for table, path in paths.items():
        path = Path(path)
        if not path.is_file():
            raise EtlError("MISSING_FILE", f"extract file for {table.value} not found: {path}")
        try:
            text = path.read_text(encoding="utf-8")
        except UnicodeDecodeError as exc:
            raise EtlError("BAD_ENCODING", f"extract file {path} is not valid UTF-8: {exc}") from exc

        lines = text.splitlines()
        reader = csv.reader(lines)
        try:
            header = next(reader)
        except StopIteration:
            raise EtlError(
                "HEADER_MISMATCH",
                f"{path} is empty; expected header {list(TABLE_COLUMNS[table])}",
            ) from None
        expected = list(TABLE_COLUMNS[table])
        if header != expected:
            raise EtlError(
                "HEADER_MISMATCH",
                f"{path} header mismatch: expected {expected}, found {header}",
                {"expected": expected, "found": header},
            )
        for offset, record in enumerate(reader, start=2):
            rows.append(
                SourceRow(
                    source_table=table,
                    line_number=offset,
                    fields=tuple(record),
                    raw=lines[offset - 1],
                )
            )
    return rows


def _reject(row: SourceRow, rule_id: str, reason: str) -> RejectRecord:
    return RejectRecord(
        source_table=row.source_table.value,
        line_number=row.line_number,
        rule_id=rule_id,
        reason=reason,
        raw_row=row.raw,
    )


def cleanse(
    rows: Iterable[SourceRow], rules: Mapping[SourceTable, list[CleanseRule]] | list[CleanseRule]
) -> tuple[list[SourceRow], list[RejectRecord]]:
    """Apply cleanse rules in declared order; clean + rejects partition the input.

    Rows with the wrong cell count are rejected up front (FIELD_COUNT).
    DEDUPE_ON_KEY keeps the first occurrence of each key and rejects later
    duplicates.
    """
    if isinstance(rules, list):
        by_table: dict[SourceTable, list[CleanseRule]] = {t: rules for t in SourceTable}
    else:
        by_table = dict(rules)

    # resolve rule target columns once per table
    resolved: dict[SourceTable, list[tuple[CleanseRule, int]]] = {}
    for table, table_rules in by_table.items():
        columns = TABLE_COLUMNS[table]
        pairs = []
        for rule in table_rules:
            if rule.target_column not in columns:
                raise EtlError(
                    "UNKNOWN_COLUMN",
                    f"rule {rule.rule_id!r} targets column {rule.target_column!r} not declared for {table.value}",
                )
            pairs.append((rule, columns.index(rule.target_column)))
        resolved[table] = pairs

    clean: list[SourceRow] = []
    rejects: list[RejectRecord] = []
    seen_keys: dict[tuple[SourceTable, str], set[str]] = {}

    for row in rows:
        columns = TABLE_COLUMNS[row.source_table]
        if len(row.fields) != len(columns):
            rejects.append(
                _reject(row, "FIELD_COUNT", f"FIELD_COUNT: expected {len(columns)} cells, found {len(row.fields)}")
            )
            continue

        fields = list(row.fields)
        reject: RejectRecord | None = None
        for rule, idx in resolved.get(row.source_table, []):
            value = fields[idx]
            if rule.kind is RuleKind.TRIM:
                fields[idx] = value.strip()
            elif rule.kind is RuleKind.UPPERCASE_CODES:
                fields[idx] = value.upper()
            elif rule.kind is RuleKind.NULL_TO_REJECT:
                if value == "":
                    reject = _reject(row, rule.rule_id, f"NULL_VALUE: column {rule.target_column!r} is empty")
            elif rule.kind is RuleKind.NUMERIC_PARSE:
                try:
                    fields[idx] = str(int(value))
                except ValueError:
                    reject = _reject(
                        row, rule.rule_id, f"NUMERIC_PARSE: column {rule.target_column!r} value {value!r} is not an integer"
                    )
            elif rule.kind is RuleKind.DATE_PARSE:
                try:
                    fields[idx] = date.fromisoformat(value).isoformat()
                except ValueError:
                    reject = _reject(
                        row, rule.rule_id, f"DATE_PARSE: column {rule.target_column!r} value {value!r} is not an ISO date"
                    )
            elif rule.kind is RuleKind.DEDUPE_ON_KEY:
                seen = seen_keys.setdefault((row.source_table, rule.target_column), set())
                if value in seen:
                    reject = _reject(row, rule.rule_id, f"DUPLICATE_KEY: {rule.target_column!r}={value!r} seen before")
                else:
                    seen.add(value)
            if reject is not None:
                break
        if reject is not None:
            rejects.append(reject)
        else:
            clean.append(replace(row, fields=tuple(fields)))

    return clean, rejects


def quarter_of_month(month: int) -> int:
    return (month + 2) // 3


def month_key(iso_date: str) -> str:
    return iso_date[:7]  # YYYY-MM


def time_member_path(month: str) -> tuple[str, str, str]:
    """Level path (Year, Quarter, Month) for a YYYY-MM month key."""
    year, mm = month.split("-")
    return (year, f"Q{quarter_of_month(int(mm))}", mm)


def build_dimensions(
    clean_rows: Mapping[SourceTable, list[SourceRow]], schema: StarSchema
) -> tuple[dict[str, DimensionTable], dict[str, dict[str, int]], list[RejectRecord]]:
    """Assign surrogate keys and level paths for every dimension.

    Keys run 1..n in first-seen order (0 stays reserved for the unknown
    member). The Time dimension is generated from the distinct borrowing
    months, in calendar order. Dimension rows whose hierarchy placement
    cannot be determined are rejected with MALFORMED_LEVEL_PATH.
    """
    tables: dict[str, DimensionTable] = {}
    key_maps: dict[str, dict[str, int]] = {}
    rejects: list[RejectRecord] = []

    def add_table(dim_name: str, build_path) -> None:
        dim_def = schema.dimension(dim_name)
        table = DimensionTable(dim_name, dim_def.level_names)
        key_map: dict[str, int] = {}
        for row in clean_rows.get(DIMENSION_SOURCES[dim_name], []):
            natural_key, path, problem = build_path(row)
            if problem:
                rejects.append(_reject(row, "MALFORMED_LEVEL_PATH", f"MALFORMED_LEVEL_PATH: {problem}"))
                continue
            surrogate = len(key_map) + 1
            key_map[natural_key] = surrogate
            table.rows.append(DimensionRow(surrogate, natural_key, path))
        tables[dim_name] = table
        key_maps[dim_name] = key_map

    def borrower_path(row: SourceRow):
        natural_key, name, type_code, sector, group_name = row.fields
        if not type_code or not sector or not name:
            return natural_key, (), "borrower needs non-empty type_code, sector and name"
        return natural_key, (type_code, sector, group_name or NO_GROUP, name), None

    def institute_path(row: SourceRow):
        natural_key, name, type_code = row.fields
        if not type_code or not name:
            return natural_key, (), "institute needs non-empty type_code and name"
        return natural_key, (type_code, name), None

    def guarantor_path(row: SourceRow):
        natural_key, name = row.fields
        if not name:
            return natural_key, (), "guarantor needs a non-empty name"
        return natural_key, (name,), None

    add_table("Borrower", borrower_path)
    add_table("Institute", institute_path)
    add_table("DirectorGuarantor", guarantor_path)

    time_def = schema.dimension("Time")
    months = sorted({month_key(row.fields[3]) for row in clean_rows.get(SourceTable.BORROWING, [])})
    time_table = DimensionTable("Time", time_def.level_names)
    time_map: dict[str, int] = {}
    for month in months:
        surrogate = len(time_map) + 1
        time_map[month] = surrogate
        time_table.rows.append(DimensionRow(surrogate, month, time_member_path(month)))
    tables["Time"] = time_table
    key_maps["Time"] = time_map

    return tables, key_maps, rejects


def transform_facts(
    borrowing_rows: list[SourceRow], key_maps: Mapping[str, dict[str, int]], schema: StarSchema
) -> tuple[dict[str, np.ndarray], list[RejectRecord]]:
    """Resolve foreign keys and parse measures into columnar fact arrays.

    Rows whose borrower or institute key does not resolve are rejected
    (FOREIGN_KEY_UNRESOLVED). A blank or unresolved guarantor maps to the
    reserved unknown key 0 and loads normally.
    """
    rejects: list[RejectRecord] = []
    borrower_map = key_maps["Borrower"]
    institute_map = key_maps["Institute"]
    guarantor_map = key_maps["DirectorGuarantor"]
    time_map = key_maps["Time"]

    keys: dict[str, list[int]] = {d: [] for d in schema.dimension_names}
    amounts: list[int] = []

    for row in borrowing_rows:
        borrower_key, institute_key, guarantor_key, period_date, amount = row.fields
        borrower = borrower_map.get(borrower_key)
        institute = institute_map.get(institute_key)
        if borrower is None or institute is None:
            missing = "borrower_key" if borrower is None else "institute_key"
            value = borrower_key if borrower is None else institute_key
            rejects.append(
                _reject(row, "FOREIGN_KEY_UNRESOLVED", f"FOREIGN_KEY_UNRESOLVED: {missing}={value!r} has no dimension row")
            )
            continue
        keys["Borrower"].append(borrower)
        keys["Institute"].append(institute)
        keys["DirectorGuarantor"].append(guarantor_map.get(guarantor_key, 0) if guarantor_key else 0)
        keys["Time"].append(time_map[month_key(period_date)])
        amounts.append(int(amount))

    columns: dict[str, np.ndarray] = {
        dim: np.asarray(values, dtype=np.int32) for dim, values in keys.items()
    }
    n = len(amounts)
    for measure in schema.measures:
        if measure.aggregator is Aggregator.COUNT:
            columns[measure.name] = np.ones(n, dtype=np.int64)
        elif measure.name == "outstanding_amount":
            columns[measure.name] = np.asarray(amounts, dtype=np.int64)
        else:
            raise EtlError(
                "UNMAPPED_MEASURE",
                f"measure {measure.name!r} has no source column in the borrowing extract",
            )
    return columns, rejects


@dataclass
class PipelineResult:
    snapshot: WarehouseSnapshot
    rejects: list[RejectRecord]
    stats: LoadStats

    @property
    def exit_code(self) -> int:
        return 1 if self.stats.rows_rejected else 0


def run_pipeline(
    input_dir: str | Path,
    store: SnapshotStore,
    schema: StarSchema,
    rules: Mapping[SourceTable, list[CleanseRule]] | None = None,
) -> PipelineResult:
    """Full extract-cleanse-transform-load run publishing one snapshot.

    Single-writer: the snapshot is assembled off to the side and published
    atomically, so concurrent readers never observe a partial load.
    """
    if sorted(schema.dimension_names) != sorted(DIMENSION_SOURCES) + ["Time"]:
        raise EtlError(
            "SCHEMA_MISMATCH",
            "the extract pipeline needs exactly the built-in dimensions "
            f"{sorted(DIMENSION_SOURCES) + ['Time']}, schema has {sorted(schema.dimension_names)}",
        )
    input_dir = Path(input_dir)
    paths = {table: input_dir / filename for table, filename in TABLE_FILES.items()}
    raw_rows = extract(paths)

    rows_in: dict[SourceTable, int] = {t: 0 for t in SourceTable}
    for row in raw_rows:
        rows_in[row.source_table] += 1

    clean, rejects = cleanse(raw_rows, rules if rules is not None else default_rules())
    by_table: dict[SourceTable, list[SourceRow]] = {t: [] for t in SourceTable}
    for row in clean:
        by_table[row.source_table].append(row)

    tables, key_maps, dim_rejects = build_dimensions(by_table, schema)
    rejects.extend(dim_rejects)
    fact_columns, fact_rejects = transform_facts(by_table[SourceTable.BORROWING], key_maps, schema)
    rejects.extend(fact_rejects)

    rejected: dict[SourceTable, int] = {t: 0 for t in SourceTable}
    for reject in rejects:
        rejected[SourceTable(reject.source_table)] += 1

    loaded = {
        SourceTable.BORROWER: len(tables["Borrower"].rows),
        SourceTable.INSTITUTE: len(tables["Institute"].rows),
        SourceTable.GUARANTOR: len(tables["DirectorGuarantor"].rows),
        SourceTable.BORROWING: int(fact_columns[schema.dimension_names[0]].shape[0]),
    }
    stats = LoadStats(
        per_table={
            t.value: TableStats(rows_in[t], loaded[t], rejected[t]) for t in SourceTable
        }
    )

    rejects.sort(key=lambda r: (r.source_table, r.line_number, r.rule_id))
    snapshot = store.publish(schema, tables, fact_columns, stats, rejects)
    return PipelineResult(snapshot=snapshot, rejects=rejects, stats=stats)
