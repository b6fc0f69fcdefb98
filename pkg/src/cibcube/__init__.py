"""Credit-exposure analysis stack: star-schema ETL, OLAP cube, reports, service.

The package is layered: ``etl`` loads extract files into immutable
``store`` snapshots; ``cube`` builds query structures with materialized
aggregates over them (hot loops in ``kernels``); ``reports`` answers
borrower and group exposure questions and evaluates KPI alerts; ``service``
exposes everything over HTTP; ``cli`` drives it all from the shell.
"""

from .cube import Cube, CubeQuery, PivotResult, build_cube, dice, drilldown, execute, query_from_doc, rollup, slice_member
from .errors import CibError, ConfigError, EtlError, QueryError, SchemaError, StoreError
from .etl import cleanse, extract, build_dimensions, transform_facts, run_pipeline
from .reports import credit_report, evaluate_alerts, group_exposure
from .schema import StarSchema, load_bundled_schema, load_schema, parse_schema, serialize_schema, validate_schema
from .store import SnapshotStore, WarehouseSnapshot

__version__ = "0.1.0"

__all__ = [
    "Cube",
    "CubeQuery",
    "PivotResult",
    "build_cube",
    "dice",
    "drilldown",
    "execute",
    "query_from_doc",
    "rollup",
    "slice_member",
    "CibError",
    "ConfigError",
    "EtlError",
    "QueryError",
    "SchemaError",
    "StoreError",
    "cleanse",
    "extract",
    "build_dimensions",
    "transform_facts",
    "run_pipeline",
    "credit_report",
    "evaluate_alerts",
    "group_exposure",
    "StarSchema",
    "load_bundled_schema",
    "load_schema",
    "parse_schema",
    "serialize_schema",
    "validate_schema",
    "SnapshotStore",
    "WarehouseSnapshot",
    "__version__",
]
