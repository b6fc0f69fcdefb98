"""Star-schema model: dimensions, hierarchies, measures, and the fact grain.

One fact definition surrounded by dimension hierarchies describes the whole
warehouse. Levels are ordered coarse to leaf (ordinal 0 is the coarsest);
the leaf level of each dimension is its natural-key level. Schema objects
are immutable after construction and safe to share across threads.

The config format is JSON with sections ``fact``, ``dimensions[]`` (each
with ``levels[]`` and ``attributes[]``) and ``measures[]``. A bundled
``cib.schema`` file encodes the credit-bureau model with the four built-in
dimensions (Borrower, Institute, DirectorGuarantor, Time).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from .errors import SchemaError

BUILTIN_DIMENSIONS = ("Borrower", "Institute", "DirectorGuarantor", "Time")

ATTRIBUTE_TYPES = ("text", "integer", "date", "code")

#: Reserved member names. Ungrouped borrowers roll up under NO_GROUP so every
#: leaf has a parent at every level; surrogate key 0 maps to UNKNOWN_MEMBER.
NO_GROUP = "(NO GROUP)"
UNKNOWN_MEMBER = "(UNKNOWN)"
ALL_MEMBER = "(ALL)"


class Aggregator(str, Enum):
    SUM = "SUM"
    COUNT = "COUNT"
    MIN = "MIN"
    MAX = "MAX"


class TimeSemantics(str, Enum):
    ADDITIVE = "ADDITIVE"
    LAST_PERIOD = "LAST_PERIOD"


@dataclass(frozen=True)
class LevelDef:
    name: str
    ordinal: int


@dataclass(frozen=True)
class AttributeDef:
    name: str
    type: str


@dataclass(frozen=True)
class Unit:
    """Measure unit: integer currency minor units or a dimensionless count."""

    kind: str  # "currency" | "count"
    scale: int | None = None  # minor units per major unit, currency only


@dataclass(frozen=True)
class MeasureDef:
    name: str
    aggregator: Aggregator
    time_semantics: TimeSemantics
    unit: Unit


@dataclass(frozen=True)
class DimensionDef:
    name: str
    levels: tuple[LevelDef, ...]
    attributes: tuple[AttributeDef, ...] = ()

    @property
    def level_names(self) -> tuple[str, ...]:
        return tuple(lv.name for lv in self.levels)

    @property
    def leaf_level(self) -> LevelDef:
        return self.levels[-1]

    def level_ordinal(self, name: str) -> int:
        for lv in self.levels:
            if lv.name == name:
                return lv.ordinal
        raise SchemaError(
            "UNKNOWN_LEVEL",
            f"dimension {self.name!r} has no level named {name!r}",
            {"dimension": self.name, "level": name},
        )


@dataclass(frozen=True)
class StarSchema:
    fact_name: str
    dimensions: tuple[DimensionDef, ...]
    measures: tuple[MeasureDef, ...]
    grain: tuple[str, ...]  # one leaf-level key per dimension, by dimension name

    @property
    def dimension_names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.dimensions)

    def dimension(self, name: str) -> DimensionDef:
        for d in self.dimensions:
            if d.name == name:
                return d
        raise SchemaError(
            "UNKNOWN_DIMENSION", f"no dimension named {name!r}", {"dimension": name}
        )

    def measure(self, name: str) -> MeasureDef:
        for m in self.measures:
            if m.name == name:
                return m
        raise SchemaError("UNKNOWN_MEASURE", f"no measure named {name!r}", {"measure": name})


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    where: str = ""


def validate_schema(schema: StarSchema) -> list[Violation]:
    """Check every structural invariant; an empty report means valid.

    Violations are data, not exceptions, so callers can list every problem
    at once.
    """
    report: list[Violation] = []

    if not schema.dimensions:
        report.append(Violation("NO_DIMENSIONS", "schema declares no dimensions"))

    seen_dims: set[str] = set()
    for dim in schema.dimensions:
        where = f"dimension {dim.name}"
        if dim.name in seen_dims:
            report.append(
                Violation("DUPLICATE_DIMENSION_NAME", f"dimension {dim.name!r} declared twice", where)
            )
        seen_dims.add(dim.name)

        if not dim.levels:
            report.append(Violation("EMPTY_HIERARCHY", f"dimension {dim.name!r} has no levels", where))
        else:
            ordinals = [lv.ordinal for lv in dim.levels]
            if ordinals != list(range(len(dim.levels))):
                report.append(
                    Violation(
                        "NONCONSECUTIVE_LEVELS",
                        f"level ordinals in {dim.name!r} must be 0..{len(dim.levels) - 1}, got {ordinals}",
                        where,
                    )
                )
        level_names = [lv.name for lv in dim.levels]
        for name in level_names:
            if level_names.count(name) > 1:
                report.append(
                    Violation("DUPLICATE_LEVEL_NAME", f"level {name!r} repeated in {dim.name!r}", where)
                )
                break
        attr_names = [a.name for a in dim.attributes]
        for attr in dim.attributes:
            if attr_names.count(attr.name) > 1:
                report.append(
                    Violation("DUPLICATE_ATTRIBUTE_NAME", f"attribute {attr.name!r} repeated in {dim.name!r}", where)
                )
                break
        for attr in dim.attributes:
            if attr.type not in ATTRIBUTE_TYPES:
                report.append(
                    Violation(
                        "UNKNOWN_ATTRIBUTE_TYPE",
                        f"attribute {attr.name!r} has type {attr.type!r}, expected one of {ATTRIBUTE_TYPES}",
                        where,
                    )
                )

    for builtin in BUILTIN_DIMENSIONS:
        if builtin not in seen_dims:
            report.append(
                Violation("MISSING_BUILTIN_DIMENSION", f"built-in dimension {builtin!r} is missing")
            )

    seen_measures: set[str] = set()
    for measure in schema.measures:
        where = f"measure {measure.name}"
        if measure.name in seen_measures:
            report.append(
                Violation("DUPLICATE_MEASURE_NAME", f"measure {measure.name!r} declared twice", where)
            )
        seen_measures.add(measure.name)

        if measure.aggregator is Aggregator.COUNT and measure.time_semantics is not TimeSemantics.ADDITIVE:
            report.append(
                Violation("COUNT_NOT_ADDITIVE", f"COUNT measure {measure.name!r} must be ADDITIVE", where)
            )
        if measure.unit.kind == "currency":
            scale = measure.unit.scale
            if not isinstance(scale, int) or isinstance(scale, bool) or scale < 1:
                report.append(
                    Violation(
                        "NON_INTEGER_CURRENCY",
                        f"currency measure {measure.name!r} needs a positive integer minor-unit scale, got {scale!r}",
                        where,
                    )
                )
        elif measure.unit.kind != "count":
            report.append(
                Violation("UNKNOWN_UNIT_KIND", f"measure {measure.name!r} has unit kind {measure.unit.kind!r}", where)
            )

    if sorted(schema.grain) != sorted(seen_dims) or len(schema.grain) != len(set(schema.grain)):
        report.append(
            Violation(
                "GRAIN_MISMATCH",
                f"fact grain {list(schema.grain)} must map one key to each dimension {sorted(seen_dims)}",
            )
        )

    return report


def _require(doc: dict, key: str, context: str) -> Any:
    if key not in doc:
        raise SchemaError("SCHEMA_STRUCTURE", f"missing {key!r} in {context}", {"key": key})
    return doc[key]


def parse_schema(text: str) -> StarSchema:
    """Parse schema config text into a validated StarSchema.

    Raises SchemaError carrying the first violation's code if the parsed
    schema breaks any invariant, so every schema this returns validates
    cleanly.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(
            "SCHEMA_SYNTAX",
            f"schema config syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}",
            {"line": exc.lineno, "column": exc.colno},
        ) from exc
    if not isinstance(doc, dict):
        raise SchemaError("SCHEMA_STRUCTURE", "schema config must be a JSON object")

    fact = _require(doc, "fact", "schema config")
    fact_name = _require(fact, "name", "fact")

    dimensions: list[DimensionDef] = []
    for dim_doc in _require(doc, "dimensions", "schema config"):
        name = _require(dim_doc, "name", "dimension")
        levels = tuple(
            LevelDef(name=_require(lv, "name", f"level of {name}"), ordinal=int(_require(lv, "ordinal", f"level of {name}")))
            for lv in _require(dim_doc, "levels", f"dimension {name}")
        )
        if not levels:
            raise SchemaError("EMPTY_HIERARCHY", f"dimension {name!r} has no levels", {"dimension": name})
        attributes = tuple(
            AttributeDef(name=_require(a, "name", "attribute"), type=_require(a, "type", "attribute"))
            for a in dim_doc.get("attributes", [])
        )
        dimensions.append(DimensionDef(name=name, levels=levels, attributes=attributes))

    if not dimensions:
        raise SchemaError("NO_DIMENSIONS", "schema config declares an empty hierarchy: no dimensions")

    measures: list[MeasureDef] = []
    for m_doc in _require(doc, "measures", "schema config"):
        name = _require(m_doc, "name", "measure")
        agg_name = _require(m_doc, "aggregator", f"measure {name}")
        try:
            aggregator = Aggregator(agg_name)
        except ValueError:
            raise SchemaError(
                "UNKNOWN_AGGREGATOR",
                f"measure {name!r} has unknown aggregator {agg_name!r}",
                {"measure": name, "aggregator": agg_name},
            ) from None
        sem_name = m_doc.get("time_semantics", TimeSemantics.ADDITIVE.value)
        try:
            semantics = TimeSemantics(sem_name)
        except ValueError:
            raise SchemaError(
                "UNKNOWN_TIME_SEMANTICS",
                f"measure {name!r} has unknown time semantics {sem_name!r}",
                {"measure": name},
            ) from None
        unit_doc = _require(m_doc, "unit", f"measure {name}")
        unit = Unit(kind=_require(unit_doc, "kind", "unit"), scale=unit_doc.get("scale"))
        measures.append(MeasureDef(name=name, aggregator=aggregator, time_semantics=semantics, unit=unit))

    grain = tuple(_require(fact, "grain", "fact"))
    schema = StarSchema(
        fact_name=fact_name,
        dimensions=tuple(dimensions),
        measures=tuple(measures),
        grain=grain,
    )

    report = validate_schema(schema)
    for violation in report:
        # duplicate names are parse errors per the config contract
        raise SchemaError(violation.code, violation.message, {"where": violation.where})
    return schema


def serialize_schema(schema: StarSchema) -> str:
    """Render a schema back to config text; parse_schema round-trips it."""
    doc = {
        "fact": {"name": schema.fact_name, "grain": list(schema.grain)},
        "dimensions": [
            {
                "name": d.name,
                "levels": [{"name": lv.name, "ordinal": lv.ordinal} for lv in d.levels],
                "attributes": [{"name": a.name, "type": a.type} for a in d.attributes],
            }
            for d in schema.dimensions
        ],
        "measures": [
            {
                "name": m.name,
                "aggregator": m.aggregator.value,
                "time_semantics": m.time_semantics.value,
                "unit": {"kind": m.unit.kind} if m.unit.scale is None else {"kind": m.unit.kind, "scale": m.unit.scale},
            }
            for m in schema.measures
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def load_schema(path: str | Path) -> StarSchema:
    return parse_schema(Path(path).read_text(encoding="utf-8"))


def bundled_schema_path() -> Path:
    return Path(__file__).parent / "data" / "cib.schema"


def load_bundled_schema() -> StarSchema:
    return load_schema(bundled_schema_path())


def schema_to_doc(schema: StarSchema) -> dict[str, Any]:
    """Schema as a plain document for the API metadata endpoint."""
    return json.loads(serialize_schema(schema))
