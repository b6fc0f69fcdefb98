"""Immutable warehouse snapshots and their on-disk store.

A snapshot is one integrity-checked load of the warehouse: dimension tables
with dense surrogate keys plus columnar fact arrays (one surrogate-key
column per dimension, one value column per measure). Snapshots are written
off to the side and published by an atomic rename, so readers always see
either the previous complete snapshot or the new one, never a partial
state.

Store layout under the root directory:

    current                     text file holding the published snapshot id
    snapshot-000001/
        manifest.json           snapshot_id, load_stats, sha256 checksums
        schema.json             schema the snapshot was loaded under
        dim_<Dimension>.csv     surrogate_key, natural_key, level columns
        fact_<Dimension>.npy    int32 surrogate-key column
        fact_<measure>.npy      int64 measure column
        rejects.csv             audit trail of rows dropped by the pipeline

Two pipeline runs over identical inputs produce byte-identical snapshot
directories except for the snapshot_id in the manifest.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import StoreError
from .schema import StarSchema, parse_schema, serialize_schema

CURRENT_FILE = "current"
SNAPSHOT_PREFIX = "snapshot-"


@dataclass(frozen=True)
class DimensionRow:
    surrogate_key: int
    natural_key: str
    path: tuple[str, ...]  # one value per level, coarse to leaf


@dataclass
class DimensionTable:
    name: str
    level_names: tuple[str, ...]
    rows: list[DimensionRow] = field(default_factory=list)

    def key_map(self) -> dict[str, int]:
        return {r.natural_key: r.surrogate_key for r in self.rows}


@dataclass(frozen=True)
class TableStats:
    rows_in: int
    rows_loaded: int
    rows_rejected: int


@dataclass
class LoadStats:
    per_table: dict[str, TableStats] = field(default_factory=dict)

    @property
    def rows_in(self) -> int:
        return sum(t.rows_in for t in self.per_table.values())

    @property
    def rows_loaded(self) -> int:
        return sum(t.rows_loaded for t in self.per_table.values())

    @property
    def rows_rejected(self) -> int:
        return sum(t.rows_rejected for t in self.per_table.values())

    def to_doc(self) -> dict:
        return {
            "per_table": {
                name: {"rows_in": t.rows_in, "rows_loaded": t.rows_loaded, "rows_rejected": t.rows_rejected}
                for name, t in sorted(self.per_table.items())
            },
            "total": {"rows_in": self.rows_in, "rows_loaded": self.rows_loaded, "rows_rejected": self.rows_rejected},
        }

    @staticmethod
    def from_doc(doc: dict) -> "LoadStats":
        return LoadStats(
            per_table={
                name: TableStats(t["rows_in"], t["rows_loaded"], t["rows_rejected"])
                for name, t in doc.get("per_table", {}).items()
            }
        )


@dataclass(frozen=True)
class RejectRecord:
    source_table: str
    line_number: int
    rule_id: str  # cleanse rule id or integrity-check id
    reason: str
    raw_row: str


@dataclass
class WarehouseSnapshot:
    snapshot_id: int
    schema: StarSchema
    dimension_tables: dict[str, DimensionTable]
    fact_columns: dict[str, np.ndarray]  # dim name -> int32 keys; measure name -> int64 values
    load_stats: LoadStats
    path: Path | None = None

    @property
    def fact_count(self) -> int:
        for dim in self.schema.dimension_names:
            return int(self.fact_columns[dim].shape[0])
        return 0


def integrity_violations(schema: StarSchema, dimension_tables: dict[str, DimensionTable],
                         fact_columns: dict[str, np.ndarray]) -> list[str]:
    """Referential-integrity scan; empty list means every fact key resolves.

    Surrogate keys must be dense 1..n per dimension with 0 reserved for the
    unknown member.
    """
    problems: list[str] = []
    n_rows = None
    for dim in schema.dimension_names:
        if dim not in dimension_tables:
            problems.append(f"missing dimension table {dim!r}")
            continue
        table = dimension_tables[dim]
        keys = [r.surrogate_key for r in table.rows]
        if keys != list(range(1, len(keys) + 1)):
            problems.append(f"dimension {dim!r} surrogate keys are not dense 1..{len(keys)}")
        col = fact_columns.get(dim)
        if col is None:
            problems.append(f"missing fact key column for dimension {dim!r}")
            continue
        if n_rows is None:
            n_rows = col.shape[0]
        elif col.shape[0] != n_rows:
            problems.append(f"fact column {dim!r} length {col.shape[0]} != {n_rows}")
        if col.size and (int(col.min()) < 0 or int(col.max()) > len(keys)):
            problems.append(f"dangling fact keys in dimension {dim!r}")
    for measure in schema.measures:
        col = fact_columns.get(measure.name)
        if col is None:
            problems.append(f"missing fact column for measure {measure.name!r}")
        elif n_rows is not None and col.shape[0] != n_rows:
            problems.append(f"fact column {measure.name!r} length {col.shape[0]} != {n_rows}")
    return problems


def _dim_csv_text(table: DimensionTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["surrogate_key", "natural_key", *table.level_names])
    for row in table.rows:
        writer.writerow([row.surrogate_key, row.natural_key, *row.path])
    return buf.getvalue()


def _rejects_csv_text(rejects: list[RejectRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["source_table", "line_number", "rule_id", "reason", "raw_row"])
    for r in rejects:
        writer.writerow([r.source_table, r.line_number, r.rule_id, r.reason, r.raw_row])
    return buf.getvalue()


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.save(buf, arr, allow_pickle=False)
    return buf.getvalue()


class SnapshotStore:
    """Filesystem-backed snapshot store with atomic publish."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _snapshot_dir(self, snapshot_id: int) -> Path:
        return self.root / f"{SNAPSHOT_PREFIX}{snapshot_id:06d}"

    def current_snapshot_id(self) -> int | None:
        pointer = self.root / CURRENT_FILE
        if not pointer.exists():
            return None
        text = pointer.read_text(encoding="utf-8").strip()
        return int(text) if text else None

    def publish(
        self,
        schema: StarSchema,
        dimension_tables: dict[str, DimensionTable],
        fact_columns: dict[str, np.ndarray],
        load_stats: LoadStats,
        rejects: list[RejectRecord] | None = None,
    ) -> WarehouseSnapshot:
        """Write a new snapshot and swing the current pointer to it.

        The snapshot id is the previous one plus 1. Nothing is published if
        the integrity scan fails or any write fails; the previous snapshot
        stays current.
        """
        problems = integrity_violations(schema, dimension_tables, fact_columns)
        if problems:
            raise StoreError("INTEGRITY", "snapshot refused: " + "; ".join(problems), {"problems": problems})

        snapshot_id = (self.current_snapshot_id() or 0) + 1
        files: dict[str, bytes] = {"schema.json": serialize_schema(schema).encode("utf-8")}
        for dim in schema.dimension_names:
            files[f"dim_{dim}.csv"] = _dim_csv_text(dimension_tables[dim]).encode("utf-8")
            files[f"fact_{dim}.npy"] = _npy_bytes(np.asarray(fact_columns[dim], dtype=np.int32))
        for measure in schema.measures:
            files[f"fact_{measure.name}.npy"] = _npy_bytes(np.asarray(fact_columns[measure.name], dtype=np.int64))
        files["rejects.csv"] = _rejects_csv_text(rejects or []).encode("utf-8")

        manifest = {
            "snapshot_id": snapshot_id,
            "load_stats": load_stats.to_doc(),
            "checksums": {name: hashlib.sha256(data).hexdigest() for name, data in sorted(files.items())},
        }
        files["manifest.json"] = (json.dumps(manifest, indent=2) + "\n").encode("utf-8")

        self.root.mkdir(parents=True, exist_ok=True)
        tmp_dir = self.root / f".tmp-{uuid.uuid4().hex}"
        tmp_dir.mkdir()
        try:
            for name, data in files.items():
                (tmp_dir / name).write_bytes(data)
            final_dir = self._snapshot_dir(snapshot_id)
            os.rename(tmp_dir, final_dir)
        except OSError as exc:
            # leave the previous snapshot current; clean the partial directory
            for leftover in tmp_dir.glob("*") if tmp_dir.exists() else []:
                leftover.unlink()
            if tmp_dir.exists():
                tmp_dir.rmdir()
            raise StoreError("STORE_IO", f"snapshot write failed: {exc}") from exc

        pointer_tmp = self.root / f".{CURRENT_FILE}-{uuid.uuid4().hex}"
        pointer_tmp.write_text(f"{snapshot_id}\n", encoding="utf-8")
        os.replace(pointer_tmp, self.root / CURRENT_FILE)

        return WarehouseSnapshot(
            snapshot_id=snapshot_id,
            schema=schema,
            dimension_tables=dimension_tables,
            fact_columns=fact_columns,
            load_stats=load_stats,
            path=self._snapshot_dir(snapshot_id),
        )

    def read(self, snapshot_id: int | None = None) -> WarehouseSnapshot:
        if snapshot_id is None:
            snapshot_id = self.current_snapshot_id()
            if snapshot_id is None:
                raise StoreError("NO_SNAPSHOT", f"no published snapshot under {self.root}")
        snap_dir = self._snapshot_dir(snapshot_id)
        if not snap_dir.is_dir():
            raise StoreError("NO_SNAPSHOT", f"snapshot {snapshot_id} not found under {self.root}")

        schema = parse_schema((snap_dir / "schema.json").read_text(encoding="utf-8"))
        manifest = json.loads((snap_dir / "manifest.json").read_text(encoding="utf-8"))

        dimension_tables: dict[str, DimensionTable] = {}
        for dim_def in schema.dimensions:
            with open(snap_dir / f"dim_{dim_def.name}.csv", newline="", encoding="utf-8") as fh:
                reader = csv.reader(fh)
                header = next(reader)
                level_names = tuple(header[2:])
                rows = [
                    DimensionRow(surrogate_key=int(rec[0]), natural_key=rec[1], path=tuple(rec[2:]))
                    for rec in reader
                ]
            dimension_tables[dim_def.name] = DimensionTable(dim_def.name, level_names, rows)

        fact_columns: dict[str, np.ndarray] = {}
        for dim in schema.dimension_names:
            fact_columns[dim] = np.load(snap_dir / f"fact_{dim}.npy", allow_pickle=False)
        for measure in schema.measures:
            fact_columns[measure.name] = np.load(snap_dir / f"fact_{measure.name}.npy", allow_pickle=False)

        return WarehouseSnapshot(
            snapshot_id=manifest["snapshot_id"],
            schema=schema,
            dimension_tables=dimension_tables,
            fact_columns=fact_columns,
            load_stats=LoadStats.from_doc(manifest.get("load_stats", {})),
            path=snap_dir,
        )

    def manifest(self, snapshot_id: int | None = None) -> dict:
        if snapshot_id is None:
            snapshot_id = self.current_snapshot_id()
            if snapshot_id is None:
                raise StoreError("NO_SNAPSHOT", f"no published snapshot under {self.root}")
        path = self._snapshot_dir(snapshot_id) / "manifest.json"
        return json.loads(path.read_text(encoding="utf-8"))
