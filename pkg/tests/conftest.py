from __future__ import annotations

import random
from dataclasses import replace
from pathlib import Path

import pytest

from cibcube.cube import Cube, CubeQuery, build_cube
from cibcube.schema import (
    Aggregator,
    MeasureDef,
    StarSchema,
    TimeSemantics,
    Unit,
    load_bundled_schema,
)
from cibcube.store import LoadStats, SnapshotStore, WarehouseSnapshot
from cibcube.synth import generate_snapshot_tables

SAMPLE_EXTRACTS = Path(__file__).parent.parent / "src" / "cibcube" / "data" / "extracts"


@pytest.fixture(scope="session")
def cib_schema() -> StarSchema:
    return load_bundled_schema()


@pytest.fixture(scope="session")
def rich_schema(cib_schema: StarSchema) -> StarSchema:
    """CIB schema plus additive SUM and MAX measures for aggregator coverage."""
    extra = (
        MeasureDef("disbursed_flow", Aggregator.SUM, TimeSemantics.ADDITIVE, Unit("currency", 100)),
        MeasureDef("largest_facility", Aggregator.MAX, TimeSemantics.ADDITIVE, Unit("currency", 100)),
    )
    return replace(cib_schema, measures=cib_schema.measures + extra)


def build_snapshot(schema: StarSchema, seed: int = 0, n_facts: int = 500, **kw) -> WarehouseSnapshot:
    tables, columns = generate_snapshot_tables(schema, seed=seed, n_facts=n_facts, **kw)
    return WarehouseSnapshot(
        snapshot_id=1,
        schema=schema,
        dimension_tables=tables,
        fact_columns=columns,
        load_stats=LoadStats(),
    )


def random_query(cube: Cube, rng: random.Random, max_axis_dims: int = 3) -> CubeQuery:
    """A valid random query: axes, filters, measures drawn from the cube."""
    schema = cube.schema
    dims = list(schema.dimension_names)
    rng.shuffle(dims)
    n_axis = rng.randint(0, min(max_axis_dims, len(dims)))
    axis_dims = dims[:n_axis]
    n_rows = rng.randint(0, len(axis_dims))

    def pick_level(dim: str) -> tuple[str, str, int]:
        levels = schema.dimension(dim).levels
        level = rng.choice(levels)
        return dim, level.name, level.ordinal

    axis_levels: dict[str, int] = {}
    row_axis = []
    for dim in axis_dims[:n_rows]:
        dim, name, ordinal = pick_level(dim)
        row_axis.append((dim, name))
        axis_levels[dim] = ordinal
    column_axis = []
    for dim in axis_dims[n_rows:]:
        dim, name, ordinal = pick_level(dim)
        column_axis.append((dim, name))
        axis_levels[dim] = ordinal

    filters = []
    for dim in schema.dimension_names:
        if rng.random() > 0.4:
            continue
        index = cube.dims[dim]
        max_ordinal = axis_levels.get(dim, index.n_levels - 1)
        candidates = [o for o in range(max_ordinal + 1) if index.level_values[o]]
        if not candidates:
            continue
        ordinal = rng.choice(candidates)
        values = index.level_values[ordinal]
        members = tuple(sorted(rng.sample(values, k=min(len(values), rng.randint(1, 3)))))
        filters.append((dim, schema.dimension(dim).levels[ordinal].name, members))

    measure_names = [m.name for m in schema.measures]
    measures = tuple(rng.sample(measure_names, k=rng.randint(1, len(measure_names))))

    return CubeQuery(
        row_axis=tuple(row_axis),
        column_axis=tuple(column_axis),
        slice_filters=tuple(filters),
        measures=measures,
        include_subtotals=rng.random() < 0.6,
        include_grand_total=rng.random() < 0.8,
    )


@pytest.fixture()
def sample_store(tmp_path, cib_schema):
    from cibcube.etl import run_pipeline

    store = SnapshotStore(tmp_path / "wh")
    result = run_pipeline(SAMPLE_EXTRACTS, store, cib_schema)
    return store, result


@pytest.fixture()
def sample_cube(sample_store) -> Cube:
    _, result = sample_store
    return build_cube(result.snapshot, [{"Borrower": "Group", "Time": "Year"}])
