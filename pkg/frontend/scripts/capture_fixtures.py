#!/usr/bin/env python3
"""Capture real service responses as JSON fixtures for the UI tests.

Stands up the query service over a small fixed snapshot and records the
exact bodies (and error bodies) the front-end will see. Rerun after any
API change:

    python3 frontend/scripts/capture_fixtures.py
"""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from cibcube.schema import load_bundled_schema
from cibcube.service import ServiceConfig, create_app
from cibcube.store import DimensionRow, DimensionTable, LoadStats, SnapshotStore

FIXTURES = Path(__file__).parent.parent / "tests" / "fixtures"

USERS = {
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
    ],
    "users": [
        {"user_id": "root", "token": "tok-admin", "roles": ["admin"]},
        {"user_id": "ana", "token": "tok-analyst", "roles": ["analyst"]},
    ],
}


def fixture_snapshot_tables():
    borrower = DimensionTable("Borrower", ("Type", "Sector", "Group", "Name"))
    borrower.rows = [
        DimensionRow(1, "B1", ("B2", "T (Textile)", "GULSTAN GROUP", "GULSTAN FIBRES LIMITED")),
        DimensionRow(2, "B2", ("B2", "T (Textile)", "GULSTAN GROUP", "GULSTAN SPINNING MILLS LIMITED")),
        DimensionRow(3, "B3", ("B2", "T (Textile)", "BEDEWAN GROUP", "BEDEWAN TEXTILE MILLS LIMITED")),
    ]
    institute = DimensionTable("Institute", ("Type", "Name"))
    institute.rows = [
        DimensionRow(1, "I1", ("CB", "NATIONAL COMMERCIAL BANK")),
        DimensionRow(2, "I2", ("DFI", "ALLIED FINANCE HOUSE")),
    ]
    guarantor = DimensionTable("DirectorGuarantor", ("Name",))
    guarantor.rows = [DimensionRow(1, "G1", ("MR QAMAR HUSSAIN",))]
    time = DimensionTable("Time", ("Year", "Quarter", "Month"))
    time.rows = [DimensionRow(1, "1999-07", ("1999", "Q3", "07"))]

    # GULSTAN members hold 100 + 250, BEDEWAN 400: small round numbers the
    # UI assertions can recognize at a glance
    facts = [(1, 1, 1, 1, 100), (2, 1, 0, 1, 250), (3, 2, 0, 1, 400)]
    columns = {
        "Borrower": np.array([f[0] for f in facts], dtype=np.int32),
        "Institute": np.array([f[1] for f in facts], dtype=np.int32),
        "DirectorGuarantor": np.array([f[2] for f in facts], dtype=np.int32),
        "Time": np.array([f[3] for f in facts], dtype=np.int32),
        "outstanding_amount": np.array([f[4] for f in facts], dtype=np.int64),
        "facility_count": np.ones(len(facts), dtype=np.int64),
    }
    return {
        "Borrower": borrower,
        "Institute": institute,
        "DirectorGuarantor": guarantor,
        "Time": time,
    }, columns


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp())
    users_file = tmp / "users.json"
    users_file.write_text(json.dumps(USERS), encoding="utf-8")

    schema = load_bundled_schema()
    tables, columns = fixture_snapshot_tables()
    store = SnapshotStore(tmp / "wh")
    store.publish(schema, tables, columns, LoadStats())

    client = TestClient(create_app(ServiceConfig(store_path=store.root, users_file=users_file)))
    admin = {"Authorization": "Bearer tok-admin"}
    analyst = {"Authorization": "Bearer tok-analyst"}

    captured: dict[str, object] = {}

    parent_query = {
        "row_axis": [["Borrower", "Group"]],
        "column_axis": [],
        "slice_filters": [],
        "measures": ["outstanding_amount"],
        "include_subtotals": True,
        "include_grand_total": True,
    }
    def ok(response):
        assert response.status_code == 200, response.json()
        return response.json()

    captured["parent_grid"] = ok(client.post("/api/query", json=parent_query, headers=admin))

    drill = ok(
        client.post(
            "/api/query/drilldown",
            json={"query": parent_query, "dimension": "Borrower", "member": "GULSTAN GROUP"},
            headers=admin,
        )
    )
    captured["drill_response"] = drill
    captured["children_grid"] = ok(client.post("/api/query", json=drill["query"], headers=admin))

    denied = client.post(
        "/api/query/drilldown",
        json={"query": parent_query, "dimension": "Borrower", "member": "GULSTAN GROUP"},
        headers=analyst,
    )
    assert denied.status_code == 403
    captured["denied_response"] = denied.json()

    captured["schema"] = ok(client.get("/api/schema", headers=admin))
    captured["alerts"] = ok(client.get("/api/alerts", headers=admin))
    captured["report_borrower"] = ok(
        client.get("/api/report/borrower/B1", params={"as_of": "1999"}, headers=admin)
    )
    captured["group_report"] = ok(
        client.get("/api/report/group/GULSTAN GROUP", params={"as_of": "1999"}, headers=admin)
    )

    empty_query = dict(
        parent_query,
        # leaf-level members are natural keys; BEDEWAN only borrows at I2
        slice_filters=[
            ["Borrower", "Group", ["BEDEWAN GROUP"]],
            ["Institute", "Name", ["I1"]],
        ],
        include_subtotals=False,
    )
    empty = client.post("/api/query", json=empty_query, headers=admin)
    assert empty.status_code == 200, empty.json()
    assert empty.json()["rows"] == []
    captured["empty_grid"] = empty.json()

    two_axis_query = dict(parent_query, column_axis=[["Time", "Year"]], include_subtotals=False)
    captured["two_axis_grid"] = ok(client.post("/api/query", json=two_axis_query, headers=admin))

    wide_query = dict(
        parent_query,
        row_axis=[["Borrower", "Group"], ["Institute", "Type"]],
        column_axis=[["Time", "Year"]],
        include_subtotals=False,
    )
    captured["wide_grid"] = ok(client.post("/api/query", json=wide_query, headers=admin))

    for name, body in captured.items():
        path = FIXTURES / f"{name}.json"
        path.write_text(json.dumps(body, indent=2) + "\n", encoding="utf-8")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
