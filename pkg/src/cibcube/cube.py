"""Query-ready cube over a warehouse snapshot.

The cube holds one member catalog per dimension (every hierarchy level with
dense ids in lexicographic display order), the leaf fact columns, and a set
of materialized aggregates at configured level combinations. Queries group
facts by the axis levels after applying slice filters and return a pivot
grid with optional subtotal and grand-total lines.

Cell semantics:

* ADDITIVE measures aggregate their fact rows directly (SUM / COUNT / MIN /
  MAX; COUNT columns hold one per fact row, so counting is summing).
* LAST_PERIOD measures are balances: a cell's value is the aggregate over
  only the newest time-leaf period that has facts inside the cell. Each
  stored cell keeps that period alongside the value, and combining cells
  picks the max period and aggregates the cells sitting on it. That
  composition is exact, so coarser cells can be answered from any finer
  materialized aggregate with bit-identical results.
* Subtotal and grand-total lines aggregate the displayed member cells under
  the measure's aggregator (a group "Total" of balances is the sum of its
  members' latest balances).
* A cell with no facts renders as None ("no data", distinct from a zero
  balance); COUNT renders 0.

A query is answered from the smallest materialized aggregate that is at
least as fine as the query on every dimension it touches, else from leaf
facts; the choice is recorded as provenance. Cubes are immutable, so any
number of queries may run concurrently against one.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .errors import QueryError
from .schema import ALL_MEMBER, UNKNOWN_MEMBER, Aggregator, MeasureDef, StarSchema, TimeSemantics
from .store import WarehouseSnapshot

#: Above this many potential groups the dense bincount path gives way to a
#: factorizing unique path.
DENSE_GROUP_LIMIT = 1 << 22

_AGG_CODE = {Aggregator.SUM: kernels.AGG_SUM, Aggregator.COUNT: kernels.AGG_SUM,
             Aggregator.MIN: kernels.AGG_MIN, Aggregator.MAX: kernels.AGG_MAX}


# ---------------------------------------------------------------------------
# member catalog


@dataclass
class MemberNode:
    """Tree view of one dimension: root (ALL) -> level members -> leaves."""

    level: int  # -1 for the ALL root
    name: str
    key: str
    children: list["MemberNode"] = field(default_factory=list)


class DimensionIndex:
    """Per-dimension member catalog with dense ids per hierarchy level.

    Internal members are identified by their level value; leaves by their
    natural key (display name kept separately). Ids at every level follow
    lexicographic display order with key tie-break, so id order is the
    presentation order everywhere.
    """

    def __init__(self, name: str, level_names: Sequence[str], rows: Iterable[tuple[int, str, tuple[str, ...]]]):
        self.name = name
        self.level_names = tuple(level_names)
        self.n_levels = len(self.level_names)
        leaf = self.n_levels - 1

        entries = []  # (display_path, key_path, surrogate)
        max_surrogate = 0
        for surrogate, natural_key, path in rows:
            display_path = tuple(path)
            key_path = tuple(path[:leaf]) + (natural_key,)
            entries.append((display_path, key_path, surrogate))
            max_surrogate = max(max_surrogate, surrogate)
        entries.sort(key=lambda e: (e[0], e[1]))

        # per level: distinct path prefixes in sorted order
        self.key_paths: list[list[tuple[str, ...]]] = [[] for _ in range(self.n_levels)]
        self.display_paths: list[list[tuple[str, ...]]] = [[] for _ in range(self.n_levels)]
        self._path_id: list[dict[tuple[str, ...], int]] = [{} for _ in range(self.n_levels)]
        self.leaf_to_id = [np.full(max_surrogate + 1, -1, dtype=np.int64) for _ in range(self.n_levels)]

        for display_path, key_path, surrogate in entries:
            for level in range(self.n_levels):
                prefix = key_path[: level + 1]
                path_id = self._path_id[level].get(prefix)
                if path_id is None:
                    path_id = len(self.key_paths[level])
                    self._path_id[level][prefix] = path_id
                    self.key_paths[level].append(prefix)
                    self.display_paths[level].append(display_path[: level + 1])
                self.leaf_to_id[level][surrogate] = path_id

        self.sizes = [len(self.key_paths[level]) for level in range(self.n_levels)]
        self.parent: list[np.ndarray | None] = [None]
        for level in range(1, self.n_levels):
            parents = np.fromiter(
                (self._path_id[level - 1][p[:-1]] for p in self.key_paths[level]),
                dtype=np.int64,
                count=self.sizes[level],
            )
            self.parent.append(parents)

        # distinct member keys per level (bare values, shared across parents)
        self.level_values: list[list[str]] = []
        self.value_id_map: list[dict[str, int]] = []
        self.value_ids: list[np.ndarray] = []
        for level in range(self.n_levels):
            values = sorted({p[-1] for p in self.key_paths[level]})
            value_map = {v: i for i, v in enumerate(values)}
            self.level_values.append(values)
            self.value_id_map.append(value_map)
            self.value_ids.append(
                np.fromiter((value_map[p[-1]] for p in self.key_paths[level]), dtype=np.int64, count=self.sizes[level])
            )

    def leaf_ordinal(self) -> int:
        return self.n_levels - 1

    def ids_to_level(self, ids: np.ndarray, from_level: int, to_level: int) -> np.ndarray:
        """Map member ids at a finer level to their ancestors at a coarser one."""
        for level in range(from_level, to_level, -1):
            ids = self.parent[level][ids]
        return ids

    def has_member(self, level: int, member: str) -> bool:
        return member in self.value_id_map[level]

    def member_tree(self) -> MemberNode:
        root = MemberNode(level=-1, name=ALL_MEMBER, key=ALL_MEMBER)
        nodes: list[list[MemberNode]] = []
        for level in range(self.n_levels):
            level_nodes = [
                MemberNode(level=level, name=self.display_paths[level][i][-1], key=self.key_paths[level][i][-1])
                for i in range(self.sizes[level])
            ]
            nodes.append(level_nodes)
            parents = [root] * self.sizes[level] if level == 0 else [
                nodes[level - 1][self.parent[level][i]] for i in range(self.sizes[level])
            ]
            for node, parent in zip(level_nodes, parents):
                parent.children.append(node)
        return root


# ---------------------------------------------------------------------------
# queries


@dataclass(frozen=True)
class CubeQuery:
    row_axis: tuple[tuple[str, str], ...] = ()
    column_axis: tuple[tuple[str, str], ...] = ()
    slice_filters: tuple[tuple[str, str, tuple[str, ...]], ...] = ()
    measures: tuple[str, ...] = ()  # empty means every schema measure
    include_subtotals: bool = False
    include_grand_total: bool = True

    def to_doc(self) -> dict[str, Any]:
        return {
            "row_axis": [list(e) for e in self.row_axis],
            "column_axis": [list(e) for e in self.column_axis],
            "slice_filters": [[d, l, list(m)] for d, l, m in self.slice_filters],
            "measures": list(self.measures),
            "include_subtotals": self.include_subtotals,
            "include_grand_total": self.include_grand_total,
        }


def query_from_doc(doc: Mapping[str, Any]) -> CubeQuery:
    try:
        return CubeQuery(
            row_axis=tuple((str(d), str(l)) for d, l in doc.get("row_axis", [])),
            column_axis=tuple((str(d), str(l)) for d, l in doc.get("column_axis", [])),
            slice_filters=tuple(
                (str(d), str(l), tuple(str(m) for m in members))
                for d, l, members in doc.get("slice_filters", [])
            ),
            measures=tuple(str(m) for m in doc.get("measures", [])),
            include_subtotals=bool(doc.get("include_subtotals", False)),
            include_grand_total=bool(doc.get("include_grand_total", True)),
        )
    except (TypeError, ValueError) as exc:
        raise QueryError("BAD_QUERY_DOC", f"malformed query document: {exc}") from exc


@dataclass(frozen=True)
class Header:
    """One grid line: a member path, a level subtotal, or the grand total."""

    kind: str  # "member" | "subtotal" | "grand_total"
    path: tuple[str, ...]  # display values (subtotal: retained prefix)
    keys: tuple[str, ...]

    def to_doc(self) -> dict[str, Any]:
        return {"kind": self.kind, "path": list(self.path), "keys": list(self.keys)}


@dataclass
class PivotResult:
    snapshot_id: int
    row_axis: tuple[tuple[str, str], ...]
    column_axis: tuple[tuple[str, str], ...]
    row_levels: tuple[tuple[str, str], ...]  # flattened (dimension, level) per path column
    col_levels: tuple[tuple[str, str], ...]
    measures: tuple[str, ...]
    rows: list[Header]
    cols: list[Header]
    cells: list[list[dict[str, int | None]]]
    grand_total: dict[str, int | None]
    provenance: str

    def member_cells(self) -> list[tuple[int, int]]:
        return [
            (i, j)
            for i, r in enumerate(self.rows)
            if r.kind == "member"
            for j, c in enumerate(self.cols)
            if c.kind == "member"
        ]

    def to_doc(self) -> dict[str, Any]:
        return {
            "snapshot_id": self.snapshot_id,
            "row_axis": [list(e) for e in self.row_axis],
            "column_axis": [list(e) for e in self.column_axis],
            "row_levels": [list(e) for e in self.row_levels],
            "col_levels": [list(e) for e in self.col_levels],
            "measures": list(self.measures),
            "rows": [h.to_doc() for h in self.rows],
            "cols": [h.to_doc() for h in self.cols],
            "cells": self.cells,
            "grand_total": self.grand_total,
            "provenance": self.provenance,
        }


# ---------------------------------------------------------------------------
# cube and aggregates


@dataclass
class Aggregate:
    """Materialized cell set at one level combination (-1 means rolled to ALL)."""

    levels: dict[str, int]
    label: str
    ids: dict[str, np.ndarray]
    measures: dict[str, np.ndarray]
    last_period: np.ndarray | None
    counts: np.ndarray

    @property
    def n_cells(self) -> int:
        return int(self.counts.shape[0])

    def cells(self, cube: "Cube") -> dict[tuple[tuple[str, ...], ...], dict[str, int]]:
        """Cell map keyed by per-dimension member paths (ALL dims omitted)."""
        grouped_dims = [d for d in cube.schema.dimension_names if self.levels[d] >= 0]
        out: dict[tuple[tuple[str, ...], ...], dict[str, int]] = {}
        for row in range(self.n_cells):
            key = tuple(
                cube.dims[d].key_paths[self.levels[d]][int(self.ids[d][row])] for d in grouped_dims
            )
            out[key] = {m: int(col[row]) for m, col in self.measures.items()}
        return out


class Cube:
    """Immutable query structure over one snapshot."""

    def __init__(self, snapshot: WarehouseSnapshot, materialization_plan: Sequence[Mapping[str, str]] | None = None):
        self.snapshot_id = snapshot.snapshot_id
        self.schema = snapshot.schema
        self.n_facts = snapshot.fact_count

        self.dims: dict[str, DimensionIndex] = {}
        for dim_def in self.schema.dimensions:
            table = snapshot.dimension_tables[dim_def.name]
            rows = [(r.surrogate_key, r.natural_key, r.path) for r in table.rows]
            fact_col = snapshot.fact_columns[dim_def.name]
            if fact_col.size and int(fact_col.min()) == 0:
                rows.append((0, UNKNOWN_MEMBER, (UNKNOWN_MEMBER,) * len(dim_def.levels)))
            self.dims[dim_def.name] = DimensionIndex(dim_def.name, dim_def.level_names, rows)

        self.fact_keys: dict[str, np.ndarray] = {
            d: np.asarray(snapshot.fact_columns[d], dtype=np.int64) for d in self.schema.dimension_names
        }
        self.measure_columns: dict[str, np.ndarray] = {
            m.name: np.asarray(snapshot.fact_columns[m.name], dtype=np.int64) for m in self.schema.measures
        }

        # fact period = Time leaf id; display sort order is calendar order
        time_index = self.dims["Time"] if "Time" in self.dims else None
        if time_index is not None:
            leaf = time_index.leaf_ordinal()
            self.periods = time_index.leaf_to_id[leaf][self.fact_keys["Time"]]
        else:  # no Time dimension: degenerate single period
            self.periods = np.zeros(self.n_facts, dtype=np.int64)

        # query-independent row id/value arrays, filled lazily; the cube is
        # immutable so concurrent queries may share them
        self._level_id_rows: dict[tuple[str, int], np.ndarray] = {}
        self._value_id_rows: dict[tuple[str, int], np.ndarray] = {}

        self.aggregates: list[Aggregate] = []
        plan = list(materialization_plan or [])
        all_combo = {d: -1 for d in self.schema.dimension_names}
        combos = [self._resolve_combo(c) for c in plan]
        if all_combo not in combos:
            combos.append(all_combo)
        for combo in combos:
            self.aggregates.append(self._materialize(combo))

    # -- construction helpers

    def _resolve_combo(self, combo: Mapping[str, str]) -> dict[str, int]:
        levels = {d: -1 for d in self.schema.dimension_names}
        for dim, level in combo.items():
            if dim not in levels:
                raise QueryError("UNKNOWN_DIMENSION", f"materialization plan references unknown dimension {dim!r}")
            if level == ALL_MEMBER or level == "ALL":
                continue
            dim_def = self.schema.dimension(dim)
            if level not in dim_def.level_names:
                raise QueryError(
                    "UNKNOWN_LEVEL",
                    f"materialization plan references unknown level {dim}.{level}",
                    {"dimension": dim, "level": level},
                )
            levels[dim] = dim_def.level_ordinal(level)
        return levels

    def _materialize(self, levels: dict[str, int]) -> Aggregate:
        grouped = [(d, levels[d]) for d in self.schema.dimension_names if levels[d] >= 0]
        id_columns = [self.dims[d].leaf_to_id[lv][self.fact_keys[d]] for d, lv in grouped]
        sizes = [self.dims[d].sizes[lv] for d, lv in grouped]
        ids, counts, values, last_period = _aggregate_rows(
            id_columns, sizes, self.periods, self.measure_columns, self.schema.measures, self.n_facts
        )
        label = ",".join(f"{d}={self.schema.dimension(d).levels[lv].name}" for d, lv in grouped) or "(ALL)"
        return Aggregate(
            levels=dict(levels),
            label=f"agg:{label}",
            ids={d: col for (d, _), col in zip(grouped, ids)},
            measures=values,
            last_period=last_period,
            counts=counts,
        )

    def level_id_rows(self, dim: str, level: int) -> np.ndarray:
        key = (dim, level)
        if key not in self._level_id_rows:
            self._level_id_rows[key] = self.dims[dim].leaf_to_id[level][self.fact_keys[dim]]
        return self._level_id_rows[key]

    def value_id_rows(self, dim: str, level: int) -> np.ndarray:
        key = (dim, level)
        if key not in self._value_id_rows:
            self._value_id_rows[key] = self.dims[dim].value_ids[level][self.level_id_rows(dim, level)]
        return self._value_id_rows[key]

    # -- metadata access

    def member_tree(self, dimension: str) -> MemberNode:
        return self._dim(dimension).member_tree()

    def level_members(self, dimension: str, level: str) -> list[dict[str, Any]]:
        index = self._dim(dimension)
        ordinal = self.schema.dimension(dimension).level_ordinal(level)
        return [
            {
                "key": index.key_paths[ordinal][i][-1],
                "name": index.display_paths[ordinal][i][-1],
                "path": list(index.display_paths[ordinal][i]),
                "path_keys": list(index.key_paths[ordinal][i]),
            }
            for i in range(index.sizes[ordinal])
        ]

    def _dim(self, dimension: str) -> DimensionIndex:
        index = self.dims.get(dimension)
        if index is None:
            raise QueryError("UNKNOWN_DIMENSION", f"unknown dimension {dimension!r}", {"dimension": dimension})
        return index

    def _ordinal(self, dimension: str, level: str) -> int:
        try:
            return self.schema.dimension(dimension).level_ordinal(level)
        except Exception:
            raise QueryError(
                "UNKNOWN_LEVEL", f"unknown level {dimension}.{level}", {"dimension": dimension, "level": level}
            ) from None


def build_cube(snapshot: WarehouseSnapshot, materialization_plan: Sequence[Mapping[str, str]] | None = None) -> Cube:
    """Build member catalogs and the planned aggregates over a snapshot.

    The all-dimensions-rolled-up combination is always materialized.
    """
    return Cube(snapshot, materialization_plan)


# ---------------------------------------------------------------------------
# grouped aggregation core (shared by materialization and execution)


def _aggregate_rows(
    id_columns: list[np.ndarray],
    sizes: list[int],
    periods: np.ndarray,
    columns: Mapping[str, np.ndarray],
    measures: Sequence[MeasureDef],
    n_rows: int,
) -> tuple[list[np.ndarray], np.ndarray, dict[str, np.ndarray], np.ndarray | None]:
    """Group rows by the id columns; returns per-group ids, counts and values.

    Groups come back in lexicographic id order, only for combinations that
    actually occur. LAST_PERIOD measures also yield the per-group newest
    period so results can be combined further without precision loss.
    """
    if n_rows == 0:
        empty = np.zeros(0, dtype=np.int64)
        return [empty.copy() for _ in id_columns], empty.copy(), {m.name: empty.copy() for m in measures}, (
            empty.copy() if any(m.time_semantics is TimeSemantics.LAST_PERIOD for m in measures) else None
        )

    product = 1
    for size in sizes:
        product *= max(size, 1)

    if product <= DENSE_GROUP_LIMIT:
        idx = np.zeros(n_rows, dtype=np.int64)
        for ids, size in zip(id_columns, sizes):
            idx = idx * size + ids
        n_groups = product
        counts = kernels.group_count(idx, n_groups)
        present = np.flatnonzero(counts > 0)
        compact: Callable[[np.ndarray], np.ndarray] = lambda arr: arr[present]
        group_codes = present
        group_ids: list[np.ndarray] = []
        remaining = group_codes
        for size in reversed(sizes):
            group_ids.append(remaining % size)
            remaining = remaining // size
        group_ids.reverse()
    else:
        code = id_columns[0].astype(np.int64, copy=True)
        code_span = sizes[0]
        for ids, size in zip(id_columns[1:], sizes[1:]):
            if code_span * size > (1 << 62):
                _, code = np.unique(code, return_inverse=True)
                code_span = int(code.max()) + 1
            code = code * size + ids
            code_span *= size
        _, first_idx, idx = np.unique(code, return_index=True, return_inverse=True)
        idx = idx.astype(np.int64, copy=False)
        n_groups = int(first_idx.shape[0])
        counts = kernels.group_count(idx, n_groups)
        compact = lambda arr: arr
        group_ids = [ids[first_idx] for ids in id_columns]

    needs_period = any(m.time_semantics is TimeSemantics.LAST_PERIOD for m in measures)
    last_period_full = kernels.group_last_period(idx, periods, n_groups) if needs_period else None

    values: dict[str, np.ndarray] = {}
    for measure in measures:
        col = columns[measure.name]
        if measure.time_semantics is TimeSemantics.LAST_PERIOD:
            out = kernels.group_agg_at_period(idx, periods, col, last_period_full, n_groups, _AGG_CODE[measure.aggregator])
        elif measure.aggregator in (Aggregator.SUM, Aggregator.COUNT):
            out = kernels.group_sum(idx, col, n_groups)
        elif measure.aggregator is Aggregator.MIN:
            out = kernels.group_min(idx, col, n_groups)
        else:
            out = kernels.group_max(idx, col, n_groups)
        values[measure.name] = compact(out)

    return (
        [g.astype(np.int64, copy=False) for g in group_ids],
        compact(counts),
        values,
        compact(last_period_full) if last_period_full is not None else None,
    )


# ---------------------------------------------------------------------------
# row sources: leaf facts or a materialized aggregate


class _LeafSource:
    def __init__(self, cube: Cube):
        self.cube = cube
        self.n = cube.n_facts
        self.periods = cube.periods
        self.columns = cube.measure_columns

    def ids_at(self, dim: str, level: int) -> np.ndarray:
        return self.cube.level_id_rows(dim, level)

    def value_ids_at(self, dim: str, level: int) -> np.ndarray:
        return self.cube.value_id_rows(dim, level)


class _AggregateSource:
    def __init__(self, cube: Cube, aggregate: Aggregate):
        self.cube = cube
        self.aggregate = aggregate
        self.n = aggregate.n_cells
        # combining precomputed cells: the stored newest period plays the
        # role of the row period, which composes exactly
        self.periods = aggregate.last_period if aggregate.last_period is not None else np.zeros(self.n, dtype=np.int64)
        self.columns = aggregate.measures
        self._cache: dict[tuple[str, int], np.ndarray] = {}

    def ids_at(self, dim: str, level: int) -> np.ndarray:
        key = (dim, level)
        if key not in self._cache:
            index = self.cube.dims[dim]
            self._cache[key] = index.ids_to_level(self.aggregate.ids[dim], self.aggregate.levels[dim], level)
        return self._cache[key]

    def value_ids_at(self, dim: str, level: int) -> np.ndarray:
        return self.cube.dims[dim].value_ids[level][self.ids_at(dim, level)]


# ---------------------------------------------------------------------------
# query validation and execution


def _validate_query(cube: Cube, query: CubeQuery) -> tuple[CubeQuery, dict[str, int]]:
    """Check query invariants against the cube; returns (query, axis level per dim)."""
    axis_levels: dict[str, int] = {}
    for axis_name, axis in (("row_axis", query.row_axis), ("column_axis", query.column_axis)):
        for dim, level in axis:
            cube._dim(dim)
            if dim in axis_levels:
                raise QueryError(
                    "DIMENSION_ON_BOTH_AXES",
                    f"dimension {dim!r} appears more than once across the axes",
                    {"dimension": dim},
                )
            axis_levels[dim] = cube._ordinal(dim, level)

    measures = query.measures or tuple(m.name for m in cube.schema.measures)
    for name in measures:
        cube.schema.measure(name)  # raises SchemaError subclass of CibError

    for dim, level, members in query.slice_filters:
        index = cube._dim(dim)
        ordinal = cube._ordinal(dim, level)
        if not members:
            raise QueryError("EMPTY_MEMBER_SET", f"empty member set for dimension {dim!r}", {"dimension": dim})
        for member in members:
            if not index.has_member(ordinal, member):
                raise QueryError(
                    "UNKNOWN_MEMBER",
                    f"no member {member!r} at {dim}.{level}",
                    {"dimension": dim, "level": level, "member": member},
                )
        if dim in axis_levels and ordinal > axis_levels[dim]:
            raise QueryError(
                "FILTER_FINER_THAN_AXIS",
                f"filter on {dim}.{level} is finer than the dimension's axis level",
                {"dimension": dim, "level": level},
            )
    return replace(query, measures=measures), axis_levels


def _required_levels(cube: Cube, query: CubeQuery, axis_levels: dict[str, int]) -> dict[str, int]:
    required = {d: -1 for d in cube.schema.dimension_names}
    required.update(axis_levels)
    for dim, level, _ in query.slice_filters:
        required[dim] = max(required[dim], cube._ordinal(dim, level))
    return required


def _choose_source(cube: Cube, required: dict[str, int]) -> tuple[Any, str]:
    best: Aggregate | None = None
    for aggregate in cube.aggregates:
        if all(aggregate.levels[d] >= required[d] for d in cube.schema.dimension_names):
            if best is None or aggregate.n_cells < best.n_cells:
                best = aggregate
    if best is not None:
        return _AggregateSource(cube, best), best.label
    return _LeafSource(cube), "LEAF"


def _combine_cells(values: list[int | None], aggregator: Aggregator) -> int | None:
    present = [v for v in values if v is not None]
    if not present:
        return 0 if aggregator is Aggregator.COUNT else None
    if aggregator in (Aggregator.SUM, Aggregator.COUNT):
        return sum(present)
    if aggregator is Aggregator.MIN:
        return min(present)
    return max(present)


def execute(cube: Cube, query: CubeQuery) -> PivotResult:
    """Run a pivot query and assemble the grid with totals.

    Results are deterministic: members appear in lexicographic display
    order, subtotal lines follow each block of siblings, the grand total
    comes last.
    """
    query, axis_levels = _validate_query(cube, query)
    required = _required_levels(cube, query, axis_levels)
    source, provenance = _choose_source(cube, required)

    # filter mask
    mask: np.ndarray | None = None
    for dim, level, members in query.slice_filters:
        index = cube.dims[dim]
        ordinal = cube._ordinal(dim, level)
        row_values = source.value_ids_at(dim, ordinal)
        wanted = np.asarray(sorted(index.value_id_map[ordinal][m] for m in members), dtype=np.int64)
        hit = np.isin(row_values, wanted) if wanted.size > 1 else row_values == wanted[0]
        mask = hit if mask is None else (mask & hit)

    row_entries = [(d, cube._ordinal(d, l)) for d, l in query.row_axis]
    col_entries = [(d, cube._ordinal(d, l)) for d, l in query.column_axis]
    entries = row_entries + col_entries

    id_columns = [source.ids_at(d, lv) for d, lv in entries]
    periods = source.periods
    columns = {name: source.columns[name] for name in query.measures}
    if mask is not None:
        keep = np.flatnonzero(mask)
        id_columns = [col.take(keep) for col in id_columns]
        periods = periods.take(keep)
        columns = {name: col.take(keep) for name, col in columns.items()}
        n_rows = int(keep.shape[0])
    else:
        n_rows = source.n

    sizes = [cube.dims[d].sizes[lv] for d, lv in entries]
    measure_defs = [cube.schema.measure(name) for name in query.measures]
    group_ids, counts, values, _ = _aggregate_rows(id_columns, sizes, periods, columns, measure_defs, n_rows)

    n_groups = int(counts.shape[0])
    n_row_entries = len(row_entries)
    row_keys: list[tuple[int, ...]] = []
    col_keys: list[tuple[int, ...]] = []
    cell_values: dict[tuple[tuple[int, ...], tuple[int, ...]], dict[str, int]] = {}
    for g in range(n_groups):
        rk = tuple(int(group_ids[i][g]) for i in range(n_row_entries))
        ck = tuple(int(group_ids[i][g]) for i in range(n_row_entries, len(entries)))
        cell_values[(rk, ck)] = {name: int(values[name][g]) for name in query.measures}
        row_keys.append(rk)
        col_keys.append(ck)

    member_rows = sorted(set(row_keys))
    member_cols = sorted(set(col_keys))

    def flatten(entry_list: list[tuple[str, int]], key: tuple[int, ...]) -> tuple[tuple[str, ...], tuple[str, ...]]:
        display: list[str] = []
        keys: list[str] = []
        for (dim, level), member_id in zip(entry_list, key):
            index = cube.dims[dim]
            display.extend(index.display_paths[level][member_id])
            keys.extend(index.key_paths[level][member_id])
        return tuple(display), tuple(keys)

    def header_for(entry_list: list[tuple[str, int]], key: tuple[int, ...]) -> Header:
        display, keys = flatten(entry_list, key)
        return Header(kind="member", path=display, keys=keys)

    row_headers = [header_for(row_entries, k) for k in member_rows]
    col_headers = [header_for(col_entries, k) for k in member_cols]

    count_aggs = {name: d.aggregator for name, d in zip(query.measures, measure_defs)}

    def gap(name: str) -> int | None:
        return 0 if count_aggs[name] is Aggregator.COUNT else None

    grid: list[list[dict[str, int | None]]] = [
        [
            {
                name: cell_values.get((rk, ck), {}).get(name, gap(name))
                for name in query.measures
            }
            for ck in member_cols
        ]
        for rk in member_rows
    ]

    def combine_lines(lines: list[list[dict[str, int | None]]]) -> list[dict[str, int | None]]:
        width = len(lines[0]) if lines else 0
        return [
            {
                name: _combine_cells([line[j][name] for line in lines], count_aggs[name])
                for name in query.measures
            }
            for j in range(width)
        ]

    # subtotal rows after each block sharing the path prefix (all but last key)
    final_rows: list[Header] = []
    final_cells: list[list[dict[str, int | None]]] = []
    if member_rows and query.include_subtotals and len(row_headers[0].keys) >= 2:
        block_start = 0
        for i in range(len(member_rows) + 1):
            boundary = i == len(member_rows) or (
                i > 0 and row_headers[i].keys[:-1] != row_headers[block_start].keys[:-1]
            )
            if i > block_start and boundary:
                for j in range(block_start, i):
                    final_rows.append(row_headers[j])
                    final_cells.append(grid[j])
                prefix_display = row_headers[block_start].path[:-1]
                prefix_keys = row_headers[block_start].keys[:-1]
                final_rows.append(Header(kind="subtotal", path=prefix_display, keys=prefix_keys))
                final_cells.append(combine_lines(grid[block_start:i]))
                block_start = i
    else:
        final_rows = list(row_headers)
        final_cells = [list(r) for r in grid]

    if member_rows and query.include_grand_total and query.row_axis:
        final_rows.append(Header(kind="grand_total", path=(), keys=()))
        final_cells.append(combine_lines(grid))

    # subtotal / grand-total columns, combined from each row's member cells
    member_col_positions = list(range(len(member_cols)))
    col_plan: list[tuple[str, Any]] = [("member", j) for j in member_col_positions]
    if member_cols and query.include_subtotals and len(col_headers[0].keys) >= 2:
        new_plan: list[tuple[str, Any]] = []
        block_start = 0
        for j in range(len(member_cols) + 1):
            boundary = j == len(member_cols) or (
                j > 0 and col_headers[j].keys[:-1] != col_headers[block_start].keys[:-1]
            )
            if j > block_start and boundary:
                new_plan.extend(("member", k) for k in range(block_start, j))
                new_plan.append(("subtotal", (block_start, j)))
                block_start = j
        col_plan = new_plan
    if member_cols and query.include_grand_total and query.column_axis:
        col_plan.append(("grand_total", (0, len(member_cols))))

    final_cols: list[Header] = []
    for kind, spec in col_plan:
        if kind == "member":
            final_cols.append(col_headers[spec])
        elif kind == "subtotal":
            start, _ = spec
            final_cols.append(Header(kind="subtotal", path=col_headers[start].path[:-1], keys=col_headers[start].keys[:-1]))
        else:
            final_cols.append(Header(kind="grand_total", path=(), keys=()))

    expanded: list[list[dict[str, int | None]]] = []
    for line in final_cells:
        out_line: list[dict[str, int | None]] = []
        for kind, spec in col_plan:
            if kind == "member":
                out_line.append(line[spec])
            else:
                start, stop = spec
                out_line.append(
                    {
                        name: _combine_cells([line[j][name] for j in range(start, stop)], count_aggs[name])
                        for name in query.measures
                    }
                )
        expanded.append(out_line)

    all_member_cells: list[dict[str, int | None]] = [cell for line in grid for cell in line]
    grand_total = {
        name: _combine_cells([cell[name] for cell in all_member_cells], count_aggs[name])
        for name in query.measures
    }

    def level_pairs(axis: tuple[tuple[str, str], ...]) -> tuple[tuple[str, str], ...]:
        pairs: list[tuple[str, str]] = []
        for dim, level in axis:
            dim_def = cube.schema.dimension(dim)
            ordinal = dim_def.level_ordinal(level)
            pairs.extend((dim, dim_def.levels[i].name) for i in range(ordinal + 1))
        return tuple(pairs)

    return PivotResult(
        snapshot_id=cube.snapshot_id,
        row_axis=query.row_axis,
        column_axis=query.column_axis,
        row_levels=level_pairs(query.row_axis),
        col_levels=level_pairs(query.column_axis),
        measures=query.measures,
        rows=final_rows,
        cols=final_cols,
        cells=expanded,
        grand_total=grand_total,
        provenance=provenance,
    )


# ---------------------------------------------------------------------------
# navigation transforms (pure query rewrites, validated against the cube)


def _axis_position(query: CubeQuery, dimension: str) -> tuple[str, int] | None:
    for i, (dim, _) in enumerate(query.row_axis):
        if dim == dimension:
            return ("row_axis", i)
    for i, (dim, _) in enumerate(query.column_axis):
        if dim == dimension:
            return ("column_axis", i)
    return None


def _with_filter(query: CubeQuery, dimension: str, level: str, members: tuple[str, ...]) -> CubeQuery:
    filters = [f for f in query.slice_filters if not (f[0] == dimension and f[1] == level)]
    filters.append((dimension, level, members))
    return replace(query, slice_filters=tuple(filters))


def rollup(cube: Cube, query: CubeQuery, dimension: str) -> CubeQuery:
    """Move the dimension one level coarser; at the coarsest it leaves the axis."""
    position = _axis_position(query, dimension)
    if position is None:
        raise QueryError("NOT_ON_AXIS", f"dimension {dimension!r} is not on any axis", {"dimension": dimension})
    axis_name, i = position
    axis = list(getattr(query, axis_name))
    dim_def = cube.schema.dimension(dimension)
    ordinal = dim_def.level_ordinal(axis[i][1])
    if ordinal == 0:
        axis.pop(i)
        return replace(query, **{axis_name: tuple(axis)})
    new_level = dim_def.levels[ordinal - 1].name
    axis[i] = (dimension, new_level)
    # keep the query valid: drop filters finer than the new axis level
    filters = tuple(
        f for f in query.slice_filters
        if not (f[0] == dimension and dim_def.level_ordinal(f[1]) > ordinal - 1)
    )
    return replace(query, **{axis_name: tuple(axis), "slice_filters": filters})


def drilldown(cube: Cube, query: CubeQuery, dimension: str, member: str) -> CubeQuery:
    """Move one level finer, filtered to the member being opened.

    An unplaced dimension enters the row axis at its coarsest level via the
    ALL member.
    """
    index = cube._dim(dimension)
    dim_def = cube.schema.dimension(dimension)
    position = _axis_position(query, dimension)
    if position is None:
        if member != ALL_MEMBER:
            raise QueryError(
                "UNKNOWN_MEMBER",
                f"dimension {dimension!r} is unplaced; drill from its {ALL_MEMBER} root",
                {"dimension": dimension, "member": member},
            )
        return replace(query, row_axis=query.row_axis + ((dimension, dim_def.levels[0].name),))
    axis_name, i = position
    axis = list(getattr(query, axis_name))
    level_name = axis[i][1]
    ordinal = dim_def.level_ordinal(level_name)
    if ordinal >= len(dim_def.levels) - 1:
        raise QueryError(
            "LEAF_LEVEL",
            f"{dimension}.{level_name} is the leaf level; nothing finer to drill to",
            {"dimension": dimension, "level": level_name},
        )
    if not index.has_member(ordinal, member):
        raise QueryError(
            "UNKNOWN_MEMBER",
            f"no member {member!r} at {dimension}.{level_name}",
            {"dimension": dimension, "level": level_name, "member": member},
        )
    axis[i] = (dimension, dim_def.levels[ordinal + 1].name)
    query = replace(query, **{axis_name: tuple(axis)})
    return _with_filter(query, dimension, level_name, (member,))


def slice_member(cube: Cube, query: CubeQuery, dimension: str, level: str, member: str) -> CubeQuery:
    """Add (or replace, for the same dimension and level) a single-member filter."""
    index = cube._dim(dimension)
    ordinal = cube._ordinal(dimension, level)
    if not index.has_member(ordinal, member):
        raise QueryError(
            "UNKNOWN_MEMBER",
            f"no member {member!r} at {dimension}.{level}",
            {"dimension": dimension, "level": level, "member": member},
        )
    return _with_filter(query, dimension, level, (member,))


def dice(cube: Cube, query: CubeQuery, filters: Sequence[tuple[str, str, Sequence[str]]]) -> CubeQuery:
    """Apply member-set filters: disjunctive within a set, conjunctive across dimensions."""
    for dimension, level, members in filters:
        if not members:
            raise QueryError("EMPTY_MEMBER_SET", f"empty member set for dimension {dimension!r}", {"dimension": dimension})
        index = cube._dim(dimension)
        ordinal = cube._ordinal(dimension, level)
        for member in members:
            if not index.has_member(ordinal, member):
                raise QueryError(
                    "UNKNOWN_MEMBER",
                    f"no member {member!r} at {dimension}.{level}",
                    {"dimension": dimension, "level": level, "member": member},
                )
        query = _with_filter(query, dimension, level, tuple(sorted(set(members))))
    return query
