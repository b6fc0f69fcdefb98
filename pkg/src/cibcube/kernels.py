"""Grouped-aggregation kernels for columnar fact arrays.

These inner loops dominate cube build and query time, so they exist twice:
numba-compiled loops and a pure-numpy fallback built on ufunc.at. Both
return bit-identical int64 results (no float accumulation, so currency
minor units stay exact at any magnitude).

Backend selection: the CIBCUBE_KERNELS environment variable ("numba" or
"numpy") wins; otherwise numba is used when importable. set_backend()
switches at runtime for tests and benchmarks.

All kernels take a dense group index per row (0..n_groups-1) plus int64
value columns. Periods are monotone integers (months); the last-period
kernels first find each group's newest period, then aggregate only the
rows sitting on it. Aggregating rows that themselves carry precomputed
(last_period, value) pairs composes exactly, which is what lets coarser
cells be derived from finer materialized aggregates without touching leaf
facts.
"""

from __future__ import annotations

import os

import numpy as np

INT64_MIN = np.iinfo(np.int64).min
INT64_MAX = np.iinfo(np.int64).max
NO_PERIOD = -1  # sentinel for groups with no rows

AGG_SUM = 0
AGG_MIN = 1
AGG_MAX = 2

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - environment without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


# ---------------------------------------------------------------------------
# numpy implementations


def _np_group_count(idx: np.ndarray, n_groups: int) -> np.ndarray:
    return np.bincount(idx, minlength=n_groups).astype(np.int64)


def _np_group_sum(idx: np.ndarray, values: np.ndarray, n_groups: int) -> np.ndarray:
    out = np.zeros(n_groups, dtype=np.int64)
    np.add.at(out, idx, values)
    return out


def _np_group_min(idx: np.ndarray, values: np.ndarray, n_groups: int) -> np.ndarray:
    out = np.full(n_groups, INT64_MAX, dtype=np.int64)
    np.minimum.at(out, idx, values)
    return out


def _np_group_max(idx: np.ndarray, values: np.ndarray, n_groups: int) -> np.ndarray:
    out = np.full(n_groups, INT64_MIN, dtype=np.int64)
    np.maximum.at(out, idx, values)
    return out


def _np_group_last_period(idx: np.ndarray, periods: np.ndarray, n_groups: int) -> np.ndarray:
    out = np.full(n_groups, NO_PERIOD, dtype=np.int64)
    np.maximum.at(out, idx, periods)
    return out


def _np_group_agg_at_period(
    idx: np.ndarray,
    periods: np.ndarray,
    values: np.ndarray,
    group_periods: np.ndarray,
    n_groups: int,
    agg: int,
) -> np.ndarray:
    on_last = periods == group_periods[idx]
    if agg == AGG_SUM:
        out = np.zeros(n_groups, dtype=np.int64)
        np.add.at(out, idx[on_last], values[on_last])
    elif agg == AGG_MIN:
        out = np.full(n_groups, INT64_MAX, dtype=np.int64)
        np.minimum.at(out, idx[on_last], values[on_last])
    else:
        out = np.full(n_groups, INT64_MIN, dtype=np.int64)
        np.maximum.at(out, idx[on_last], values[on_last])
    return out


# ---------------------------------------------------------------------------
# numba implementations (same contracts, explicit loops)


@njit(cache=True)
def _nb_group_count(idx, n_groups):
    out = np.zeros(n_groups, dtype=np.int64)
    for i in range(idx.shape[0]):
        out[idx[i]] += 1
    return out


@njit(cache=True)
def _nb_group_sum(idx, values, n_groups):
    out = np.zeros(n_groups, dtype=np.int64)
    for i in range(idx.shape[0]):
        out[idx[i]] += values[i]
    return out


@njit(cache=True)
def _nb_group_min(idx, values, n_groups):
    out = np.full(n_groups, INT64_MAX, dtype=np.int64)
    for i in range(idx.shape[0]):
        g = idx[i]
        if values[i] < out[g]:
            out[g] = values[i]
    return out


@njit(cache=True)
def _nb_group_max(idx, values, n_groups):
    out = np.full(n_groups, INT64_MIN, dtype=np.int64)
    for i in range(idx.shape[0]):
        g = idx[i]
        if values[i] > out[g]:
            out[g] = values[i]
    return out


@njit(cache=True)
def _nb_group_last_period(idx, periods, n_groups):
    out = np.full(n_groups, NO_PERIOD, dtype=np.int64)
    for i in range(idx.shape[0]):
        g = idx[i]
        if periods[i] > out[g]:
            out[g] = periods[i]
    return out


@njit(cache=True)
def _nb_group_agg_at_period(idx, periods, values, group_periods, n_groups, agg):
    if agg == 0:
        out = np.zeros(n_groups, dtype=np.int64)
    elif agg == 1:
        out = np.full(n_groups, INT64_MAX, dtype=np.int64)
    else:
        out = np.full(n_groups, INT64_MIN, dtype=np.int64)
    for i in range(idx.shape[0]):
        g = idx[i]
        if periods[i] != group_periods[g]:
            continue
        v = values[i]
        if agg == 0:
            out[g] += v
        elif agg == 1:
            if v < out[g]:
                out[g] = v
        else:
            if v > out[g]:
                out[g] = v
    return out


_IMPLS = {
    "numpy": {
        "count": _np_group_count,
        "sum": _np_group_sum,
        "min": _np_group_min,
        "max": _np_group_max,
        "last_period": _np_group_last_period,
        "agg_at_period": _np_group_agg_at_period,
    },
    "numba": {
        "count": _nb_group_count,
        "sum": _nb_group_sum,
        "min": _nb_group_min,
        "max": _nb_group_max,
        "last_period": _nb_group_last_period,
        "agg_at_period": _nb_group_agg_at_period,
    },
}


def _default_backend() -> str:
    choice = os.environ.get("CIBCUBE_KERNELS", "").strip().lower()
    if choice in _IMPLS:
        if choice == "numba" and not HAVE_NUMBA:
            raise RuntimeError("CIBCUBE_KERNELS=numba but numba is not importable")
        return choice
    return "numba" if HAVE_NUMBA else "numpy"


_BACKEND = _default_backend()


def active_backend() -> str:
    return _BACKEND


def set_backend(name: str) -> None:
    if name not in _IMPLS:
        raise ValueError(f"unknown kernel backend {name!r}; pick one of {sorted(_IMPLS)}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    global _BACKEND
    _BACKEND = name


def group_count(idx: np.ndarray, n_groups: int) -> np.ndarray:
    return _IMPLS[_BACKEND]["count"](idx, n_groups)


def group_sum(idx: np.ndarray, values: np.ndarray, n_groups: int) -> np.ndarray:
    return _IMPLS[_BACKEND]["sum"](idx, values, n_groups)


def group_min(idx: np.ndarray, values: np.ndarray, n_groups: int) -> np.ndarray:
    return _IMPLS[_BACKEND]["min"](idx, values, n_groups)


def group_max(idx: np.ndarray, values: np.ndarray, n_groups: int) -> np.ndarray:
    return _IMPLS[_BACKEND]["max"](idx, values, n_groups)


def group_last_period(idx: np.ndarray, periods: np.ndarray, n_groups: int) -> np.ndarray:
    return _IMPLS[_BACKEND]["last_period"](idx, periods, n_groups)


def group_agg_at_period(
    idx: np.ndarray,
    periods: np.ndarray,
    values: np.ndarray,
    group_periods: np.ndarray,
    n_groups: int,
    agg: int = AGG_SUM,
) -> np.ndarray:
    return _IMPLS[_BACKEND]["agg_at_period"](idx, periods, values, group_periods, n_groups, agg)
