"""HTTP portal over the warehouse: one personalized access point.

Serves schema metadata, member listings, pivot queries, drill/slice/dice
navigation, credit reports, and KPI alerts. Bearer tokens from a users file
identify principals; roles grant per-dimension maximum drill depth, report
access, and admin rights. Authorization runs before any aggregation work.

Snapshot lifecycle: a registry holds the current (snapshot, cube, alerts)
triple and swaps it atomically on publish. In-flight requests keep the
triple they started with, so a response never mixes snapshots; a bounded
number of prior cubes is retained so those requests can finish.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from fastapi import Depends, FastAPI, Request
from fastapi.responses import JSONResponse

from . import kernels
from .cube import Cube, CubeQuery, build_cube, dice, drilldown, execute, query_from_doc, rollup, slice_member
from .errors import CibError, ConfigError, QueryError, StoreError
from .etl import run_pipeline
from .reports import (
    Alert,
    AlertRule,
    KpiDefinition,
    bundled_kpi_path,
    credit_report,
    evaluate_alerts,
    group_exposure,
    load_kpi_file,
)
from .schema import StarSchema, bundled_schema_path, load_schema, schema_to_doc
from .store import SnapshotStore, WarehouseSnapshot, integrity_violations

DEFAULT_PAGE_SIZE = 200

_STATUS_BY_CODE = {
    "INVALID_TOKEN": 401,
    "DRILL_DEPTH_DENIED": 403,
    "REPORT_ACCESS_DENIED": 403,
    "ADMIN_REQUIRED": 403,
    "NO_DATA": 409,
    "INTEGRITY": 409,
    "UNKNOWN_DIMENSION": 404,
    "UNKNOWN_LEVEL": 404,
    "UNKNOWN_MEMBER": 404,
    "UNKNOWN_BORROWER": 404,
    "UNKNOWN_GROUP": 404,
    "UNKNOWN_MEASURE": 404,
    "NO_SNAPSHOT": 409,
}


@dataclass
class Role:
    role_id: str
    dimension_levels: dict[str, str]  # dimension -> deepest visible level name
    report_access: bool = False
    admin: bool = False


@dataclass
class Principal:
    user_id: str
    token: str
    roles: list[Role]

    @property
    def report_access(self) -> bool:
        return any(r.report_access for r in self.roles)

    @property
    def admin(self) -> bool:
        return any(r.admin for r in self.roles)

    def max_ordinal(self, schema: StarSchema, dimension: str) -> int:
        """Deepest permitted level ordinal; -1 means rolled-up totals only."""
        best = -1
        dim_def = schema.dimension(dimension)
        for role in self.roles:
            level = role.dimension_levels.get(dimension)
            if level is None:
                continue
            best = max(best, dim_def.level_ordinal(level))
        return best


def load_users(path: str | Path) -> dict[str, Principal]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    roles = {
        r["role_id"]: Role(
            role_id=r["role_id"],
            dimension_levels=dict(r.get("dimensions", {})),
            report_access=bool(r.get("report_access", False)),
            admin=bool(r.get("admin", False)),
        )
        for r in doc.get("roles", [])
    }
    principals: dict[str, Principal] = {}
    for user in doc.get("users", []):
        try:
            user_roles = [roles[name] for name in user.get("roles", [])]
        except KeyError as exc:
            raise ConfigError("UNKNOWN_ROLE", f"user {user.get('user_id')!r} references unknown role {exc}") from exc
        principals[user["token"]] = Principal(
            user_id=user["user_id"], token=user["token"], roles=user_roles
        )
    return principals


@dataclass
class ServiceConfig:
    store_path: Path
    users_file: Path
    port: int = 8000
    materialization_file: Path | None = None
    kpi_file: Path | None = None
    schema_file: Path | None = None
    input_dir: Path | None = None
    retained_snapshots: int = 2
    static_dir: Path | None = None


def load_materialization_plan(path: str | Path) -> list[dict[str, str]]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [dict(combo) for combo in doc.get("combinations", [])]


@dataclass
class _Published:
    snapshot_id: int
    cube: Cube
    alerts: list[Alert]
    checksums: dict[str, str] = field(default_factory=dict)


class SnapshotRegistry:
    """Atomic holder of the current cube plus a few retained predecessors."""

    def __init__(self, retained: int = 2):
        self._retained = max(1, retained)
        self._lock = threading.Lock()
        self._current: _Published | None = None
        self._history: list[_Published] = []

    def current(self) -> _Published | None:
        return self._current  # single reference read: readers never block

    def publish(
        self,
        snapshot: WarehouseSnapshot,
        plan: list[dict[str, str]],
        kpis: list[KpiDefinition],
        rules: list[AlertRule],
        checksums: dict[str, str] | None = None,
    ) -> _Published:
        problems = integrity_violations(snapshot.schema, snapshot.dimension_tables, snapshot.fact_columns)
        if problems:
            raise StoreError("INTEGRITY", "publication refused: " + "; ".join(problems), {"problems": problems})
        cube = build_cube(snapshot, plan)
        alerts = evaluate_alerts(cube, kpis, rules)
        published = _Published(snapshot.snapshot_id, cube, alerts, checksums or {})
        with self._lock:
            self._history.append(published)
            self._history = self._history[-self._retained :]
            self._current = published
        return published


def publish_snapshot(
    registry: SnapshotRegistry,
    snapshot: WarehouseSnapshot,
    plan: list[dict[str, str]] | None = None,
    kpis: list[KpiDefinition] | None = None,
    rules: list[AlertRule] | None = None,
) -> _Published:
    return registry.publish(snapshot, plan or [], kpis or [], rules or [])


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="cibcube", docs_url=None, redoc_url=None)

    principals = load_users(config.users_file)
    plan = load_materialization_plan(config.materialization_file or Path(__file__).parent / "data" / "materialization.json")
    kpis, rules = load_kpi_file(config.kpi_file or bundled_kpi_path())
    schema_file = config.schema_file or bundled_schema_path()
    store = SnapshotStore(config.store_path)
    registry = SnapshotRegistry(config.retained_snapshots)
    counters = {"queries_executed": 0, "queries_denied": 0, "requests": 0}
    started = time.monotonic()

    try:
        snapshot = store.read()
        registry.publish(snapshot, plan, kpis, rules, checksums=store.manifest()["checksums"])
    except StoreError:
        pass  # empty store: metadata endpoints only until the first publish

    app.state.registry = registry
    app.state.counters = counters

    @app.exception_handler(CibError)
    async def cib_error_handler(_: Request, exc: CibError):
        status = _STATUS_BY_CODE.get(exc.code, 400)
        return JSONResponse(status_code=status, content=exc.to_doc())

    def authenticate(request: Request) -> Principal:
        header = request.headers.get("authorization", "")
        token = header.removeprefix("Bearer ").strip() if header.startswith("Bearer ") else None
        principal = principals.get(token) if token else None
        if principal is None:
            raise QueryError("INVALID_TOKEN", "missing or unknown bearer token")
        return principal

    def current_or_no_data() -> _Published:
        published = registry.current()
        if published is None:
            raise StoreError("NO_DATA", "no snapshot has been published yet")
        return published

    def check_drill_depth(principal: Principal, cube: Cube, query: CubeQuery) -> None:
        touched: list[tuple[str, str]] = list(query.row_axis) + list(query.column_axis)
        touched += [(d, l) for d, l, _ in query.slice_filters]
        for dimension, level in touched:
            allowed = principal.max_ordinal(cube.schema, dimension)
            if cube.schema.dimension(dimension).level_ordinal(level) > allowed:
                counters["queries_denied"] += 1
                raise QueryError(
                    "DRILL_DEPTH_DENIED",
                    f"role permits {dimension} only to level ordinal {allowed}",
                    {"dimension": dimension, "level": level},
                )

    # -- metadata

    @app.get("/api/schema")
    def get_schema(principal: Principal = Depends(authenticate)):
        published = registry.current()
        if published is not None:
            return {"snapshot_id": published.snapshot_id, "schema": schema_to_doc(published.cube.schema)}
        return {"snapshot_id": None, "schema": schema_to_doc(load_schema(schema_file))}

    @app.get("/api/members/{dimension}/{level}")
    def get_members(
        dimension: str,
        level: str,
        page: int = 1,
        page_size: int = DEFAULT_PAGE_SIZE,
        principal: Principal = Depends(authenticate),
    ):
        published = current_or_no_data()
        cube = published.cube
        allowed = principal.max_ordinal(cube.schema, dimension)
        if cube.schema.dimension(dimension).level_ordinal(level) > allowed:
            counters["queries_denied"] += 1
            raise QueryError(
                "DRILL_DEPTH_DENIED",
                f"role permits {dimension} only to level ordinal {allowed}",
                {"dimension": dimension, "level": level},
            )
        members = cube.level_members(dimension, level)
        page = max(1, page)
        page_size = max(1, min(page_size, 1000))
        start = (page - 1) * page_size
        return {
            "snapshot_id": published.snapshot_id,
            "dimension": dimension,
            "level": level,
            "page": page,
            "page_size": page_size,
            "total": len(members),
            "members": members[start : start + page_size],
        }

    # -- queries and navigation

    @app.post("/api/query")
    def post_query(body: dict, principal: Principal = Depends(authenticate)):
        published = current_or_no_data()
        query = query_from_doc(body)
        check_drill_depth(principal, published.cube, query)
        result = execute(published.cube, query)
        counters["queries_executed"] += 1
        return result.to_doc()

    def navigation_endpoint(transform):
        def endpoint(body: dict, principal: Principal = Depends(authenticate)):
            published = current_or_no_data()
            query = query_from_doc(body.get("query", {}))
            new_query = transform(published.cube, query, body)
            check_drill_depth(principal, published.cube, new_query)
            return {"snapshot_id": published.snapshot_id, "query": new_query.to_doc()}

        return endpoint

    app.post("/api/query/drilldown")(
        navigation_endpoint(lambda cube, q, b: drilldown(cube, q, b["dimension"], b["member"]))
    )
    app.post("/api/query/rollup")(
        navigation_endpoint(lambda cube, q, b: rollup(cube, q, b["dimension"]))
    )
    app.post("/api/query/slice")(
        navigation_endpoint(lambda cube, q, b: slice_member(cube, q, b["dimension"], b["level"], b["member"]))
    )
    app.post("/api/query/dice")(
        navigation_endpoint(
            lambda cube, q, b: dice(cube, q, [(d, l, tuple(m)) for d, l, m in b.get("filters", [])])
        )
    )

    # -- reports and alerts

    def require_report_access(principal: Principal) -> None:
        if not principal.report_access:
            raise QueryError("REPORT_ACCESS_DENIED", "role does not grant report access")

    @app.get("/api/report/borrower/{key}")
    def get_borrower_report(key: str, as_of: str, principal: Principal = Depends(authenticate)):
        require_report_access(principal)
        published = current_or_no_data()
        return credit_report(published.cube, key, as_of).to_doc()

    @app.get("/api/report/group/{key}")
    def get_group_report(key: str, as_of: str, principal: Principal = Depends(authenticate)):
        require_report_access(principal)
        published = current_or_no_data()
        return group_exposure(published.cube, key, as_of).to_doc()

    @app.get("/api/alerts")
    def get_alerts(principal: Principal = Depends(authenticate)):
        published = current_or_no_data()
        return {"snapshot_id": published.snapshot_id, "alerts": [a.to_doc() for a in published.alerts]}

    # -- admin and health

    @app.post("/api/admin/etl/run")
    def admin_etl(body: dict | None = None, principal: Principal = Depends(authenticate)):
        if not principal.admin:
            raise QueryError("ADMIN_REQUIRED", "role does not grant pipeline administration")
        input_dir = Path((body or {}).get("input_dir") or config.input_dir or "")
        if not input_dir.is_dir():
            raise ConfigError("NO_INPUT_DIR", f"extract directory {input_dir} does not exist")
        schema = load_schema(schema_file)
        result = run_pipeline(input_dir, store, schema)
        published = registry.publish(
            result.snapshot, plan, kpis, rules, checksums=store.manifest(result.snapshot.snapshot_id)["checksums"]
        )
        return {
            "snapshot_id": published.snapshot_id,
            "load_stats": result.stats.to_doc(),
            "rejects": len(result.rejects),
        }

    @app.get("/api/health")
    def health():
        published = registry.current()
        return {
            "snapshot_id": published.snapshot_id if published else None,
            "uptime_seconds": round(time.monotonic() - started, 3),
            "checksums": published.checksums if published else {},
            "counters": dict(counters),
            "kernel_backend": kernels.active_backend(),
        }

    if config.static_dir and Path(config.static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=config.static_dir, html=True), name="ui")

    return app


def serve(config: ServiceConfig) -> None:
    """Run the portal until interrupted."""
    import uvicorn

    uvicorn.run(create_app(config), host="0.0.0.0", port=config.port)
