"""Borrower and group credit-worthiness reports plus KPI threshold alerts.

Every amount in a report is a cube query answer on the same snapshot; the
report layer only arranges results. A borrower's total is the sum of its
latest per-institute balances within the as-of window, and a group's total
is the sum of its members' totals, so the consolidated view is consistent
at every level.

The alert evaluator is pure over (cube, kpis, rules): same snapshot and
configuration, same alert set. KPI values come either from a one-cell cube
query or from a static sample value (for finance-process benchmark demo
figures the warehouse does not contain).
"""

from __future__ import annotations

import json
import operator
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping

from .cube import Cube, CubeQuery, execute, query_from_doc
from .errors import ConfigError, QueryError
from .schema import UNKNOWN_MEMBER, StarSchema, TimeSemantics

COMPARATORS = {">": operator.gt, ">=": operator.ge, "<": operator.lt, "<=": operator.le}


def exposure_measure(schema: StarSchema) -> str:
    """The balance measure reports consolidate: the first LAST_PERIOD measure."""
    for measure in schema.measures:
        if measure.time_semantics is TimeSemantics.LAST_PERIOD:
            return measure.name
    return schema.measures[0].name


def time_filters(cube: Cube, as_of: str) -> list[tuple[str, str, tuple[str, ...]]]:
    """Filters pinning a query to a year ("1999"), quarter ("1999-Q3"), or month ("1999-07")."""
    time_def = cube.schema.dimension("Time")
    levels = time_def.levels
    parts = as_of.strip().split("-")
    if len(parts) == 1 and parts[0]:
        return [("Time", levels[0].name, (parts[0],))]
    if len(parts) == 2 and parts[1].upper().startswith("Q") and len(levels) >= 2:
        return [
            ("Time", levels[0].name, (parts[0],)),
            ("Time", levels[1].name, (parts[1].upper(),)),
        ]
    if len(parts) == 2:
        return [("Time", levels[-1].name, (as_of.strip(),))]
    raise QueryError(
        "BAD_PERIOD",
        f"as_of {as_of!r} is not a year (1999), quarter (1999-Q3), or month (1999-07)",
        {"as_of": as_of},
    )


@dataclass
class GroupExposure:
    group: str
    as_of: str
    group_total: int | None
    members: list[tuple[str, str, int | None]]  # (natural key, name, outstanding)
    snapshot_id: int
    measure: str

    def to_doc(self) -> dict[str, Any]:
        return {
            "group": self.group,
            "as_of": self.as_of,
            "group_total": self.group_total,
            "members": [
                {"key": key, "name": name, "outstanding": value} for key, name, value in self.members
            ],
            "snapshot_id": self.snapshot_id,
            "measure": self.measure,
        }


@dataclass
class CreditWorthinessReport:
    borrower_key: str
    borrower_name: str
    borrower_path: tuple[str, ...]  # Type / Sector / Group / Name
    as_of: str
    per_institute: list[tuple[str, int | None]]
    borrower_total: int | None
    group: str
    group_total: int | None
    group_members: list[tuple[str, str, int | None]]
    guarantor_links: list[tuple[str, str, int | None]]  # (guarantor, institute, outstanding)
    generated_at: str
    snapshot_id: int
    measure: str

    def to_doc(self) -> dict[str, Any]:
        return {
            "borrower_key": self.borrower_key,
            "borrower_name": self.borrower_name,
            "borrower_path": list(self.borrower_path),
            "as_of": self.as_of,
            "per_institute": [{"institute": name, "outstanding": value} for name, value in self.per_institute],
            "borrower_total": self.borrower_total,
            "group": self.group,
            "group_total": self.group_total,
            "group_members": [
                {"key": key, "name": name, "outstanding": value} for key, name, value in self.group_members
            ],
            "guarantor_links": [
                {"guarantor": g, "institute": inst, "outstanding": value} for g, inst, value in self.guarantor_links
            ],
            "generated_at": self.generated_at,
            "snapshot_id": self.snapshot_id,
            "measure": self.measure,
        }


def _member_breakdown(cube: Cube, filters: list, measure: str) -> dict[str, int]:
    """Per-borrower totals under the filters: sum of (borrower, institute) cells."""
    dim_def = cube.schema.dimension("Borrower")
    query = CubeQuery(
        row_axis=(("Borrower", dim_def.leaf_level.name), ("Institute", cube.schema.dimension("Institute").leaf_level.name)),
        slice_filters=tuple(filters),
        measures=(measure,),
        include_grand_total=False,
    )
    result = execute(cube, query)
    borrower_key_pos = len(dim_def.levels) - 1
    totals: dict[str, int] = {}
    for header, line in zip(result.rows, result.cells):
        if header.kind != "member":
            continue
        key = header.keys[borrower_key_pos]
        value = line[0][measure]
        if value is not None:
            totals[key] = totals.get(key, 0) + value
    return totals


def group_exposure(cube: Cube, group: str, as_of: str) -> GroupExposure:
    """Group net borrowing: per-member breakdown plus the consolidated total.

    The total equals the sum of the members' individual report totals.
    """
    borrower = cube.dims["Borrower"]
    dim_def = cube.schema.dimension("Borrower")
    group_ordinal = dim_def.level_ordinal("Group")
    if not borrower.has_member(group_ordinal, group):
        raise QueryError("UNKNOWN_GROUP", f"no borrower group {group!r}", {"group": group})

    measure = exposure_measure(cube.schema)
    filters = [("Borrower", "Group", (group,)), *time_filters(cube, as_of)]
    totals = _member_breakdown(cube, filters, measure)

    leaf = borrower.leaf_ordinal()
    members: list[tuple[str, str, int | None]] = []
    for i in range(borrower.sizes[leaf]):
        path = borrower.key_paths[leaf][i]
        if path[group_ordinal] != group:
            continue
        key = path[-1]
        name = borrower.display_paths[leaf][i][-1]
        members.append((key, name, totals.get(key)))

    present = [v for _, _, v in members if v is not None]
    group_total = sum(present) if present else None
    return GroupExposure(
        group=group,
        as_of=as_of,
        group_total=group_total,
        members=members,
        snapshot_id=cube.snapshot_id,
        measure=measure,
    )


def credit_report(cube: Cube, borrower_key: str, as_of: str) -> CreditWorthinessReport:
    """Consolidated exposure for one borrower and its group as of a period.

    A borrower without facts in the window gets an empty facilities section
    and "no data" totals rather than an error.
    """
    borrower = cube.dims["Borrower"]
    dim_def = cube.schema.dimension("Borrower")
    leaf = borrower.leaf_ordinal()
    if not borrower.has_member(leaf, borrower_key):
        raise QueryError("UNKNOWN_BORROWER", f"no borrower with key {borrower_key!r}", {"borrower": borrower_key})
    leaf_id = next(
        i for i in range(borrower.sizes[leaf]) if borrower.key_paths[leaf][i][-1] == borrower_key
    )
    display_path = borrower.display_paths[leaf][leaf_id]
    group = borrower.key_paths[leaf][leaf_id][dim_def.level_ordinal("Group")]

    measure = exposure_measure(cube.schema)
    base_filters = [("Borrower", dim_def.leaf_level.name, (borrower_key,)), *time_filters(cube, as_of)]

    institute_leaf = cube.schema.dimension("Institute").leaf_level.name
    facilities = execute(
        cube,
        CubeQuery(
            row_axis=(("Institute", institute_leaf),),
            slice_filters=tuple(base_filters),
            measures=(measure,),
        ),
    )
    per_institute = [
        (header.path[-1], line[0][measure])
        for header, line in zip(facilities.rows, facilities.cells)
        if header.kind == "member"
    ]
    borrower_total = facilities.grand_total[measure]

    exposure = group_exposure(cube, group, as_of)

    guarantor_leaf = cube.schema.dimension("DirectorGuarantor").leaf_level.name
    links_result = execute(
        cube,
        CubeQuery(
            row_axis=(("DirectorGuarantor", guarantor_leaf), ("Institute", institute_leaf)),
            slice_filters=tuple(base_filters),
            measures=(measure,),
            include_grand_total=False,
        ),
    )
    guarantor_width = len(cube.schema.dimension("DirectorGuarantor").levels)
    guarantor_links = [
        (header.path[guarantor_width - 1], header.path[-1], line[0][measure])
        for header, line in zip(links_result.rows, links_result.cells)
        if header.kind == "member" and header.keys[guarantor_width - 1] != UNKNOWN_MEMBER
    ]

    return CreditWorthinessReport(
        borrower_key=borrower_key,
        borrower_name=display_path[-1],
        borrower_path=display_path,
        as_of=as_of,
        per_institute=per_institute,
        borrower_total=borrower_total,
        group=group,
        group_total=exposure.group_total,
        group_members=exposure.members,
        guarantor_links=guarantor_links,
        generated_at=datetime.now(timezone.utc).isoformat(),
        snapshot_id=cube.snapshot_id,
        measure=measure,
    )


def render_report_text(report: CreditWorthinessReport) -> str:
    """Printable plain-text layout: identity, facilities, group, guarantees."""

    def amount(value: int | None) -> str:
        return "no data" if value is None else str(value)

    lines = [
        "CREDIT WORTHINESS REPORT",
        f"borrower:  {report.borrower_name} [{report.borrower_key}]",
        f"hierarchy: {' / '.join(report.borrower_path)}",
        f"as of:     {report.as_of}    snapshot: {report.snapshot_id}",
        "",
        f"facilities ({report.measure})",
    ]
    if report.per_institute:
        for name, value in report.per_institute:
            lines.append(f"  {name:<40} {amount(value):>16}")
    else:
        lines.append("  none in period")
    lines.append(f"  {'borrower total':<40} {amount(report.borrower_total):>16}")
    lines.append("")
    lines.append(f"group exposure: {report.group}")
    for key, name, value in report.group_members:
        marker = "*" if key == report.borrower_key else " "
        lines.append(f" {marker}{name:<40} {amount(value):>16}")
    lines.append(f"  {'group total':<40} {amount(report.group_total):>16}")
    lines.append("")
    lines.append("guarantor links")
    if report.guarantor_links:
        for guarantor, institute, value in report.guarantor_links:
            lines.append(f"  {guarantor:<28} {institute:<24} {amount(value):>12}")
    else:
        lines.append("  none")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# KPI alerting


@dataclass(frozen=True)
class KpiDefinition:
    kpi_id: str
    description: str
    unit: str
    source_kind: str  # "query" | "static"
    query: CubeQuery | None = None
    query_measure: str | None = None
    static_value: float | None = None


@dataclass(frozen=True)
class AlertRule:
    rule_id: str
    kpi_id: str
    comparator: str
    threshold: float
    severity: str = "MEDIUM"


@dataclass(frozen=True)
class Alert:
    rule_id: str
    kpi_id: str
    observed: float
    comparator: str
    threshold: float
    severity: str
    snapshot_id: int
    fired_at: str

    def to_doc(self) -> dict[str, Any]:
        return {
            "rule_id": self.rule_id,
            "kpi_id": self.kpi_id,
            "observed": self.observed,
            "comparator": self.comparator,
            "threshold": self.threshold,
            "severity": self.severity,
            "snapshot_id": self.snapshot_id,
            "fired_at": self.fired_at,
        }


def parse_kpi_file(text: str) -> tuple[list[KpiDefinition], list[AlertRule]]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("KPI_SYNTAX", f"KPI file syntax error: {exc}") from exc

    kpis: list[KpiDefinition] = []
    for entry in doc.get("kpis", []):
        source = entry.get("source", {})
        kind = source.get("kind")
        if kind == "static":
            kpis.append(
                KpiDefinition(
                    kpi_id=entry["kpi_id"],
                    description=entry.get("description", ""),
                    unit=entry.get("unit", ""),
                    source_kind="static",
                    static_value=float(source["value"]),
                )
            )
        elif kind == "query":
            kpis.append(
                KpiDefinition(
                    kpi_id=entry["kpi_id"],
                    description=entry.get("description", ""),
                    unit=entry.get("unit", ""),
                    source_kind="query",
                    query=query_from_doc(source["query"]),
                    query_measure=source["measure"],
                )
            )
        else:
            raise ConfigError(
                "KPI_SOURCE", f"KPI {entry.get('kpi_id')!r} has unknown source kind {kind!r}"
            )

    rules: list[AlertRule] = []
    for entry in doc.get("rules", []):
        comparator = entry["comparator"]
        if comparator not in COMPARATORS:
            raise ConfigError(
                "KPI_COMPARATOR",
                f"rule {entry.get('rule_id')!r} has comparator {comparator!r}, expected one of {sorted(COMPARATORS)}",
            )
        rules.append(
            AlertRule(
                rule_id=entry["rule_id"],
                kpi_id=entry["kpi_id"],
                comparator=comparator,
                threshold=float(entry["threshold"]),
                severity=entry.get("severity", "MEDIUM"),
            )
        )

    kpi_ids = {k.kpi_id for k in kpis}
    for rule in rules:
        if rule.kpi_id not in kpi_ids:
            raise ConfigError("KPI_UNKNOWN", f"rule {rule.rule_id!r} references unknown KPI {rule.kpi_id!r}")
    return kpis, rules


def load_kpi_file(path: str | Path) -> tuple[list[KpiDefinition], list[AlertRule]]:
    return parse_kpi_file(Path(path).read_text(encoding="utf-8"))


def bundled_kpi_path() -> Path:
    return Path(__file__).parent / "data" / "kpis.json"


def _observe(cube: Cube, kpi: KpiDefinition) -> float | None:
    if kpi.source_kind == "static":
        return kpi.static_value
    result = execute(cube, kpi.query)
    cells = result.member_cells()
    if len(cells) > 1:
        raise ConfigError(
            "KPI_CELL_COUNT",
            f"KPI {kpi.kpi_id!r} query returned {len(cells)} cells, expected exactly one",
            {"kpi_id": kpi.kpi_id, "cells": len(cells)},
        )
    if not cells:
        return None  # no data in this snapshot: rules on this KPI stay silent
    i, j = cells[0]
    value = result.cells[i][j][kpi.query_measure]
    return None if value is None else float(value)


def evaluate_alerts(
    cube: Cube, kpis: list[KpiDefinition], rules: list[AlertRule]
) -> list[Alert]:
    """One alert per rule whose comparator holds against the observed KPI value."""
    observed: dict[str, float | None] = {}
    for kpi in kpis:
        observed[kpi.kpi_id] = _observe(cube, kpi)

    fired_at = datetime.now(timezone.utc).isoformat()
    alerts: list[Alert] = []
    for rule in sorted(rules, key=lambda r: r.rule_id):
        if rule.kpi_id not in observed:
            raise ConfigError("KPI_UNKNOWN", f"rule {rule.rule_id!r} references unknown KPI {rule.kpi_id!r}")
        value = observed[rule.kpi_id]
        if value is None:
            continue
        if COMPARATORS[rule.comparator](value, rule.threshold):
            alerts.append(
                Alert(
                    rule_id=rule.rule_id,
                    kpi_id=rule.kpi_id,
                    observed=value,
                    comparator=rule.comparator,
                    threshold=rule.threshold,
                    severity=rule.severity,
                    snapshot_id=cube.snapshot_id,
                    fired_at=fired_at,
                )
            )
    return alerts
