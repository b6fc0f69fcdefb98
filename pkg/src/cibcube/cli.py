"""Operator command line: etl, query, report, serve, validate, export.

Each verb is a thin wrapper over the library call of the same name, so
scripted output matches programmatic results byte for byte. The store
directory comes from --store or the CIBCUBE_STORE environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .cube import build_cube, execute, query_from_doc
from .errors import CibError
from .etl import run_pipeline
from .render import render_delimited, render_text
from .reports import credit_report, group_exposure, render_report_text
from .schema import bundled_schema_path, load_schema, validate_schema
from .store import SnapshotStore


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cibcube", description="credit-exposure warehouse and cube toolkit")
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_store(p):
        p.add_argument("--store", default=os.environ.get("CIBCUBE_STORE"), help="snapshot store directory (or CIBCUBE_STORE)")

    def add_materialize(p):
        p.add_argument("--materialize", default=None, help="materialization plan file")

    etl = sub.add_parser("etl", help="run the pipeline over extract files and publish a snapshot")
    etl.add_argument("--in", dest="input_dir", required=True, help="directory with the four extract files")
    add_store(etl)
    etl.add_argument("--schema", default=None, help="schema config file (default: bundled)")

    query = sub.add_parser("query", help="execute a query document and print the grid")
    add_store(query)
    query.add_argument("--q", dest="query_file", required=True, help="query document file")
    add_materialize(query)

    export = sub.add_parser("export", help="execute a query document and write the delimited export")
    add_store(export)
    export.add_argument("--q", dest="query_file", required=True)
    export.add_argument("--out", default=None, help="output file (default: stdout)")
    add_materialize(export)

    report = sub.add_parser("report", help="print a borrower or group credit report")
    add_store(report)
    report.add_argument("key", nargs="?", help="borrower natural key")
    report.add_argument("--group", default=None, help="group member instead of a borrower")
    report.add_argument("--as-of", dest="as_of", required=True, help="period: 1999, 1999-Q3, or 1999-07")
    add_materialize(report)

    validate = sub.add_parser("validate", help="check a schema config file")
    validate.add_argument("schema_file")

    serve = sub.add_parser("serve", help="start the query service")
    add_store(serve)
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--users", required=True, help="users and roles file")
    add_materialize(serve)
    serve.add_argument("--schema", default=None)
    serve.add_argument("--in", dest="input_dir", default=None, help="extract directory for admin pipeline runs")
    serve.add_argument("--static", default=None, help="directory of UI assets to serve at /")

    return parser


def _require_store(args) -> SnapshotStore:
    if not args.store:
        raise CibError("NO_STORE", "no store directory: pass --store or set CIBCUBE_STORE")
    return SnapshotStore(args.store)


def _load_cube(args):
    store = _require_store(args)
    snapshot = store.read()
    plan = []
    if args.materialize:
        plan = json.loads(Path(args.materialize).read_text(encoding="utf-8")).get("combinations", [])
    return build_cube(snapshot, plan)


def _cmd_etl(args) -> int:
    store = _require_store(args)
    schema = load_schema(args.schema) if args.schema else load_schema(bundled_schema_path())
    result = run_pipeline(args.input_dir, store, schema)
    doc = result.stats.to_doc()
    for table in sorted(doc["per_table"]):
        stats = doc["per_table"][table]
        print(
            f"table {table}: rows_in={stats['rows_in']} rows_loaded={stats['rows_loaded']} "
            f"rows_rejected={stats['rows_rejected']}"
        )
    total = doc["total"]
    print(f"total: rows_in={total['rows_in']} rows_loaded={total['rows_loaded']} rows_rejected={total['rows_rejected']}")
    print(f"snapshot {result.snapshot.snapshot_id} published at {result.snapshot.path}")
    return result.exit_code


def _cmd_query(args) -> int:
    cube = _load_cube(args)
    query = query_from_doc(json.loads(Path(args.query_file).read_text(encoding="utf-8")))
    result = execute(cube, query)
    sys.stdout.write(render_text(result))
    return 0


def _cmd_export(args) -> int:
    cube = _load_cube(args)
    query = query_from_doc(json.loads(Path(args.query_file).read_text(encoding="utf-8")))
    text = render_delimited(execute(cube, query))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_report(args) -> int:
    cube = _load_cube(args)
    if args.group:
        exposure = group_exposure(cube, args.group, args.as_of)
        print(f"GROUP EXPOSURE: {exposure.group}  as of {exposure.as_of}  snapshot {exposure.snapshot_id}")
        for key, name, value in exposure.members:
            print(f"  {name:<40} {('no data' if value is None else value):>16}")
        total = "no data" if exposure.group_total is None else exposure.group_total
        print(f"  {'group total':<40} {total:>16}")
        return 0
    if not args.key:
        print("report: a borrower key or --group is required", file=sys.stderr)
        return 2
    sys.stdout.write(render_report_text(credit_report(cube, args.key, args.as_of)))
    return 0


def _cmd_validate(args) -> int:
    try:
        schema = load_schema(args.schema_file)
    except CibError as exc:
        print(f"invalid schema [{exc.code}]: {exc.message}")
        return 1
    violations = validate_schema(schema)
    if violations:
        for v in violations:
            print(f"violation [{v.code}] {v.message}")
        return 1
    print("schema valid")
    return 0


def _cmd_serve(args) -> int:
    from .service import ServiceConfig, serve

    config = ServiceConfig(
        store_path=Path(args.store) if args.store else Path(os.environ.get("CIBCUBE_STORE", "wh")),
        users_file=Path(args.users),
        port=args.port,
        materialization_file=Path(args.materialize) if args.materialize else None,
        schema_file=Path(args.schema) if args.schema else None,
        input_dir=Path(args.input_dir) if args.input_dir else None,
        static_dir=Path(args.static) if args.static else None,
    )
    serve(config)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    commands = {
        "etl": _cmd_etl,
        "query": _cmd_query,
        "export": _cmd_export,
        "report": _cmd_report,
        "validate": _cmd_validate,
        "serve": _cmd_serve,
    }
    try:
        return commands[args.verb](args)
    except CibError as exc:
        print(f"error [{exc.code}]: {exc.message}", file=sys.stderr)
        # etl contract: fatal means nothing was published
        return 2 if args.verb == "etl" or exc.code == "NO_STORE" else 1
    except FileNotFoundError as exc:
        print(f"error [MISSING_FILE]: {exc}", file=sys.stderr)
        return 2 if args.verb == "etl" else 1


if __name__ == "__main__":
    sys.exit(main())
