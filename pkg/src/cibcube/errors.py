"""Exception types shared across the warehouse, cube, and service layers.

Every error carries a stable machine-readable ``code`` so the HTTP layer and
the CLI can map failures to responses without string matching.
"""

from __future__ import annotations

from typing import Any


class CibError(Exception):
    """Base class for all package errors."""

    def __init__(self, code: str, message: str, details: dict[str, Any] | None = None):
        super().__init__(message)
        self.code = code
        self.message = message
        self.details = details or {}

    def to_doc(self) -> dict[str, Any]:
        return {"code": self.code, "message": self.message, "details": self.details}


class SchemaError(CibError):
    """Schema config cannot be parsed or violates a structural invariant."""


class EtlError(CibError):
    """Fatal pipeline failure (nothing published). Bad rows are rejects, not errors."""


class StoreError(CibError):
    """Snapshot store is missing, corrupt, or failed an integrity check."""


class QueryError(CibError):
    """A cube query references unknown objects or violates query invariants."""


class ConfigError(CibError):
    """Service, user, KPI, or materialization configuration is invalid."""
