from __future__ import annotations

import json
import threading
import time
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient

from cibcube.errors import StoreError
from cibcube.etl import run_pipeline
from cibcube.schema import load_bundled_schema, schema_to_doc
from cibcube.service import ServiceConfig, create_app, load_users
from cibcube.store import SnapshotStore
from conftest import SAMPLE_EXTRACTS

USERS_DOC = {
    "roles": [
        {
            "role_id": "admin",
            "dimensions": {"Borrower": "Name", "Institute": "Name", "DirectorGuarantor": "Name", "Time": "Month"},
            "report_access": True,
            "admin": True,
        },
        {
            "role_id": "analyst",
            "dimensions": {"Borrower": "Group", "Institute": "Name", "Time": "Year"},
            "report_access": True,
        },
        {"role_id": "viewer", "dimensions": {"Borrower": "Type"}, "report_access": False},
    ],
    "users": [
        {"user_id": "root", "token": "tok-admin", "roles": ["admin"]},
        {"user_id": "ana", "token": "tok-analyst", "roles": ["analyst"]},
        {"user_id": "view", "token": "tok-viewer", "roles": ["viewer"]},
    ],
}


def auth(token: str) -> dict[str, str]:
    return {"Authorization": f"Bearer {token}"}


@pytest.fixture()
def service(tmp_path):
    users_file = tmp_path / "users.json"
    users_file.write_text(json.dumps(USERS_DOC), encoding="utf-8")
    store = SnapshotStore(tmp_path / "wh")
    run_pipeline(SAMPLE_EXTRACTS, store, load_bundled_schema())
    config = ServiceConfig(
        store_path=store.root,
        users_file=users_file,
        input_dir=SAMPLE_EXTRACTS,
    )
    app = create_app(config)
    return TestClient(app), store


GROUP_QUERY = {
    "row_axis": [["Borrower", "Group"]],
    "column_axis": [["Time", "Year"]],
    "measures": ["outstanding_amount", "facility_count"],
    "include_subtotals": False,
    "include_grand_total": True,
}


def test_schema_endpoint_serves_bundled_model(service):
    client, _ = service
    response = client.get("/api/schema", headers=auth("tok-analyst"))
    assert response.status_code == 200
    body = response.json()
    assert body["snapshot_id"] == 1
    assert body["schema"] == schema_to_doc(load_bundled_schema())


def test_query_without_token_is_401(service):
    client, _ = service
    assert client.post("/api/query", json=GROUP_QUERY).status_code == 401
    response = client.post("/api/query", json=GROUP_QUERY, headers=auth("tok-wrong"))
    assert response.status_code == 401
    assert response.json()["code"] == "INVALID_TOKEN"


def test_query_returns_pivot_with_snapshot_id(service):
    client, _ = service
    response = client.post("/api/query", json=GROUP_QUERY, headers=auth("tok-analyst"))
    assert response.status_code == 200
    body = response.json()
    assert body["snapshot_id"] == 1
    assert body["rows"] and body["cells"]
    assert body["grand_total"]["facility_count"] == 19


def test_drill_depth_denied_without_aggregation_work(service):
    client, _ = service
    before = client.get("/api/health").json()["counters"]
    deep = dict(GROUP_QUERY, row_axis=[["Borrower", "Name"]])
    response = client.post("/api/query", json=deep, headers=auth("tok-analyst"))
    assert response.status_code == 403
    assert response.json()["code"] == "DRILL_DEPTH_DENIED"
    after = client.get("/api/health").json()["counters"]
    assert after["queries_executed"] == before["queries_executed"]
    assert after["queries_denied"] == before["queries_denied"] + 1
    # the same query passes for the admin role
    assert client.post("/api/query", json=deep, headers=auth("tok-admin")).status_code == 200


def test_permission_is_most_permissive_across_roles(tmp_path):
    users = dict(USERS_DOC)
    users = json.loads(json.dumps(USERS_DOC))
    users["users"].append({"user_id": "both", "token": "tok-both", "roles": ["viewer", "analyst"]})
    path = tmp_path / "u.json"
    path.write_text(json.dumps(users), encoding="utf-8")
    principals = load_users(path)
    schema = load_bundled_schema()
    both = principals["tok-both"]
    assert both.max_ordinal(schema, "Borrower") == 2  # Group from analyst beats Type
    assert both.report_access is True


def test_navigation_endpoints_transform_queries(service):
    client, _ = service
    body = {"query": GROUP_QUERY, "dimension": "Borrower", "member": "GULSTAN GROUP"}
    response = client.post("/api/query/drilldown", json=body, headers=auth("tok-admin"))
    assert response.status_code == 200
    drilled = response.json()["query"]
    assert drilled["row_axis"] == [["Borrower", "Name"]]
    assert ["Borrower", "Group", ["GULSTAN GROUP"]] in drilled["slice_filters"]

    rolled = client.post(
        "/api/query/rollup", json={"query": drilled, "dimension": "Borrower"}, headers=auth("tok-admin")
    ).json()["query"]
    assert rolled["row_axis"] == [["Borrower", "Group"]]

    sliced = client.post(
        "/api/query/slice",
        json={"query": GROUP_QUERY, "dimension": "Time", "level": "Year", "member": "1999"},
        headers=auth("tok-analyst"),
    ).json()["query"]
    assert ["Time", "Year", ["1999"]] in sliced["slice_filters"]

    diced = client.post(
        "/api/query/dice",
        json={"query": GROUP_QUERY, "filters": [["Borrower", "Group", ["GULSTAN GROUP", "BEDEWAN GROUP"]]]},
        headers=auth("tok-analyst"),
    ).json()["query"]
    assert ["Borrower", "Group", ["BEDEWAN GROUP", "GULSTAN GROUP"]] in diced["slice_filters"]


def test_drilldown_beyond_permission_is_denied(service):
    client, _ = service
    body = {"query": GROUP_QUERY, "dimension": "Borrower", "member": "GULSTAN GROUP"}
    response = client.post("/api/query/drilldown", json=body, headers=auth("tok-analyst"))
    assert response.status_code == 403
    assert response.json()["code"] == "DRILL_DEPTH_DENIED"


def test_unknown_member_is_404_with_details(service):
    client, _ = service
    body = {"query": GROUP_QUERY, "dimension": "Borrower", "member": "NO SUCH GROUP"}
    response = client.post("/api/query/drilldown", json=body, headers=auth("tok-admin"))
    assert response.status_code == 404
    assert response.json()["code"] == "UNKNOWN_MEMBER"


def test_reports_gated_by_role(service):
    client, _ = service
    ok = client.get("/api/report/borrower/BRW-0001", params={"as_of": "1999"}, headers=auth("tok-analyst"))
    assert ok.status_code == 200
    body = ok.json()
    assert body["snapshot_id"] == 1
    assert body["borrower_total"] == sum(e["outstanding"] for e in body["per_institute"])
    denied = client.get("/api/report/borrower/BRW-0001", params={"as_of": "1999"}, headers=auth("tok-viewer"))
    assert denied.status_code == 403
    assert denied.json()["code"] == "REPORT_ACCESS_DENIED"
    group = client.get("/api/report/group/GULSTAN GROUP", params={"as_of": "1999"}, headers=auth("tok-analyst"))
    assert group.status_code == 200
    assert group.json()["group"] == "GULSTAN GROUP"


def test_identical_requests_get_identical_bytes(service):
    client, _ = service
    a = client.post("/api/query", json=GROUP_QUERY, headers=auth("tok-analyst"))
    b = client.post("/api/query", json=GROUP_QUERY, headers=auth("tok-analyst"))
    assert a.content == b.content


def test_alerts_present_and_resnapshot_flips_rules(service, tmp_path):
    client, store = service
    response = client.get("/api/alerts", headers=auth("tok-analyst"))
    assert response.status_code == 200
    body = response.json()
    assert body["snapshot_id"] == 1
    fired = {a["rule_id"] for a in body["alerts"]}
    assert "cost_of_finance_above_benchmark" in fired
    assert "closing_cycle_above_benchmark" not in fired
    assert "snapshot_has_facilities" in fired

    # a facts-driven rule flips once a factless snapshot is published
    from cibcube.reports import bundled_kpi_path, load_kpi_file

    empty = store.read()
    for name in list(empty.fact_columns):
        empty.fact_columns[name] = empty.fact_columns[name][:0]
    empty.snapshot_id = 2
    kpis, rules = load_kpi_file(bundled_kpi_path())
    client.app.state.registry.publish(empty, [], kpis, rules)

    after = client.get("/api/alerts", headers=auth("tok-analyst")).json()
    assert after["snapshot_id"] == 2
    flipped = {a["rule_id"] for a in after["alerts"]}
    assert "snapshot_has_facilities" not in flipped
    assert "cost_of_finance_above_benchmark" in flipped  # static demo value unchanged


def test_every_response_carries_snapshot_id(service):
    client, _ = service
    calls = [
        ("GET", "/api/schema", None),
        ("GET", "/api/members/Borrower/Group", None),
        ("POST", "/api/query", GROUP_QUERY),
        ("POST", "/api/query/rollup", {"query": dict(GROUP_QUERY, row_axis=[["Borrower", "Group"]]), "dimension": "Borrower"}),
        ("GET", "/api/report/borrower/BRW-0001?as_of=1999", None),
        ("GET", "/api/report/group/GULSTAN GROUP?as_of=1999", None),
        ("GET", "/api/alerts", None),
        ("GET", "/api/health", None),
    ]
    for method, path, body in calls:
        if method == "GET":
            response = client.get(path, headers=auth("tok-analyst"))
        else:
            response = client.post(path, json=body, headers=auth("tok-analyst"))
        assert response.status_code == 200, (path, response.json())
        assert response.json().get("snapshot_id") == 1, path


def test_admin_etl_run_publishes_new_snapshot(service):
    client, _ = service
    denied = client.post("/api/admin/etl/run", json={}, headers=auth("tok-analyst"))
    assert denied.status_code == 403
    assert denied.json()["code"] == "ADMIN_REQUIRED"

    response = client.post("/api/admin/etl/run", json={}, headers=auth("tok-admin"))
    assert response.status_code == 200
    body = response.json()
    assert body["snapshot_id"] == 2
    assert body["load_stats"]["total"]["rows_in"] == body["load_stats"]["total"]["rows_loaded"]
    assert client.get("/api/health").json()["snapshot_id"] == 2
    after = client.post("/api/query", json=GROUP_QUERY, headers=auth("tok-analyst")).json()
    assert after["snapshot_id"] == 2


def test_integrity_failure_refuses_publication(service):
    client, store = service
    app_registry = client.app.state.registry
    snapshot = store.read()
    snapshot.fact_columns["Institute"] = np.full_like(snapshot.fact_columns["Institute"], 99)
    with pytest.raises(StoreError) as exc:
        app_registry.publish(snapshot, [], [], [])
    assert exc.value.code == "INTEGRITY"
    assert client.get("/api/health").json()["snapshot_id"] == 1


def test_empty_store_serves_metadata_but_no_data(tmp_path):
    users_file = tmp_path / "users.json"
    users_file.write_text(json.dumps(USERS_DOC), encoding="utf-8")
    config = ServiceConfig(store_path=tmp_path / "empty-wh", users_file=users_file)
    client = TestClient(create_app(config))
    schema = client.get("/api/schema", headers=auth("tok-analyst"))
    assert schema.status_code == 200
    assert schema.json()["snapshot_id"] is None
    query = client.post("/api/query", json=GROUP_QUERY, headers=auth("tok-analyst"))
    assert query.status_code == 409
    assert query.json()["code"] == "NO_DATA"


def test_members_endpoint_paged(service):
    client, _ = service
    response = client.get("/api/members/Borrower/Group", params={"page_size": 3}, headers=auth("tok-analyst"))
    assert response.status_code == 200
    body = response.json()
    # tree nodes are path-qualified: (NO GROUP) appears once per sector bucket
    assert body["total"] == 5
    assert {m["key"] for m in body["members"]} <= {"BEDEWAN GROUP", "GULSTAN GROUP", "(NO GROUP)"}
    assert len(body["members"]) == 3
    page2 = client.get(
        "/api/members/Borrower/Group", params={"page_size": 3, "page": 2}, headers=auth("tok-analyst")
    ).json()
    assert len(page2["members"]) == 2
    denied = client.get("/api/members/Borrower/Name", headers=auth("tok-analyst"))
    assert denied.status_code == 403


def test_publish_during_concurrent_queries_never_mixes_snapshots(service):
    client, store = service
    registry = client.app.state.registry

    # expected grand totals per snapshot: second load doubles every amount
    expected = {1: client.post("/api/query", json=GROUP_QUERY, headers=auth("tok-analyst")).json()}
    snapshot2 = store.read()
    for measure in ("outstanding_amount",):
        snapshot2.fact_columns[measure] = snapshot2.fact_columns[measure] * 2
    snapshot2.snapshot_id = 2

    results: list[dict] = []
    errors: list[Exception] = []
    start = threading.Barrier(9)
    requests_per_worker = 25

    def worker():
        try:
            start.wait(timeout=5)
            for _ in range(requests_per_worker):
                body = client.post("/api/query", json=GROUP_QUERY, headers=auth("tok-analyst")).json()
                results.append(body)
        except Exception as exc:  # pragma: no cover - surfaced below
            errors.append(exc)

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for t in threads:
        t.start()
    start.wait(timeout=5)
    time.sleep(0.03)  # let queries get in flight on snapshot 1
    published = registry.publish(snapshot2, [], [], [])
    for t in threads:
        t.join(timeout=30)
    assert not errors
    assert len(results) == 8 * requests_per_worker

    # derive snapshot-2 expectation once, from the published cube itself
    from cibcube.cube import execute, query_from_doc

    expected[2] = execute(published.cube, query_from_doc(GROUP_QUERY)).to_doc()

    seen_ids = {body["snapshot_id"] for body in results}
    assert seen_ids <= {1, 2}
    for body in results:
        reference = expected[body["snapshot_id"]]
        assert body["cells"] == reference["cells"], "response mixed data across snapshots"
        assert body["grand_total"] == reference["grand_total"]
    # queries issued after the publish see the new snapshot
    final = client.post("/api/query", json=GROUP_QUERY, headers=auth("tok-analyst")).json()
    assert final["snapshot_id"] == 2
