"""Well topology and rate time-series containers shared by every model.

A waterflood dataset is a :class:`WellField` (which wells exist) plus a
:class:`RateSeries` (what they did over time). Both are immutable after
construction so they can be shared freely between concurrent fits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray


class DataError(ValueError):
    """Input data violates the schema or a series invariant."""


class NumericalError(RuntimeError):
    """An iterative computation produced non-finite values."""


def _readonly(values, ndim: int, name: str) -> NDArray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise DataError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class WellField:
    """Names of the injection and production wells, in column order.

    Args
    ----
    injector_names : sequence of str
        Unique labels for the injectors; order fixes injection column order.
    producer_names : sequence of str
        Unique labels for the producers; order fixes production column order.
    """

    injector_names: tuple[str, ...]
    producer_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "injector_names", tuple(self.injector_names))
        object.__setattr__(self, "producer_names", tuple(self.producer_names))
        if not self.injector_names:
            raise DataError("a field needs at least one injector")
        if not self.producer_names:
            raise DataError("a field needs at least one producer")
        for kind, names in (
            ("injector", self.injector_names),
            ("producer", self.producer_names),
        ):
            if len(set(names)) != len(names):
                dupes = sorted({n for n in names if names.count(n) > 1})
                raise DataError(f"duplicate {kind} names: {dupes}")

    @property
    def n_inj(self) -> int:
        return len(self.injector_names)

    @property
    def n_pro(self) -> int:
        return len(self.producer_names)


@dataclass(frozen=True, eq=False)
class RateSeries:
    """Time-indexed injection/production/BHP records.

    Time steps may be nonuniform; every model carries the step length
    explicitly. Missing production or bottomhole pressure is ``None``,
    never zeros.

    Args
    ----
    times : 1-D array
        Timestamps in days, strictly increasing.
    injection : 2-D array
        Injection rates (reservoir volume/day), shape (n_steps, n_injectors).
    production : 2-D array, optional
        Production rates, shape (n_steps, n_producers).
    bhp : 2-D array, optional
        Producer bottomhole pressures, shape (n_steps, n_producers).
    """

    times: NDArray
    injection: NDArray
    production: NDArray | None = None
    bhp: NDArray | None = None

    def __post_init__(self):
        times = _readonly(self.times, 1, "times")
        injection = _readonly(self.injection, 2, "injection")
        n = times.shape[0]
        if injection.shape[0] != n:
            raise DataError(
                f"injection has {injection.shape[0]} rows but times has {n} entries"
            )
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "injection", injection)
        for name in ("production", "bhp"):
            value = getattr(self, name)
            if value is None:
                continue
            arr = _readonly(value, 2, name)
            if arr.shape[0] != n:
                raise DataError(f"{name} has {arr.shape[0]} rows but times has {n} entries")
            object.__setattr__(self, name, arr)
        if (
            self.production is not None
            and self.bhp is not None
            and self.production.shape[1] != self.bhp.shape[1]
        ):
            raise DataError(
                f"production has {self.production.shape[1]} columns "
                f"but bhp has {self.bhp.shape[1]}"
            )

    @property
    def n_steps(self) -> int:
        return self.times.shape[0]

    @property
    def dts(self) -> NDArray:
        """Step lengths t_n - t_{n-1}, length n_steps - 1."""
        return np.diff(self.times)


@dataclass(frozen=True)
class TrainTestSplit:
    """Step index separating training rows [0, split) from test rows [split, n)."""

    split_index: int


def validate(series: RateSeries, field: WellField) -> RateSeries:
    """Check every series invariant against the field, reporting locations.

    Args
    ----
    series : RateSeries
    field : WellField

    Returns
    -------
    RateSeries
        The same object, unchanged, if all invariants hold.

    Raises
    ------
    DataError
        On a column-count mismatch, non-monotone times (with the offending
        index), or a negative injection rate (with its row and column).
    """
    if series.injection.shape[1] != field.n_inj:
        raise DataError(
            f"injection has {series.injection.shape[1]} columns "
            f"but the field has {field.n_inj} injectors"
        )
    for name, n_expected in (("production", field.n_pro), ("bhp", field.n_pro)):
        arr = getattr(series, name)
        if arr is not None and arr.shape[1] != n_expected:
            raise DataError(
                f"{name} has {arr.shape[1]} columns but the field has "
                f"{n_expected} producers"
            )
    steps = series.dts
    bad = np.flatnonzero(steps <= 0)
    if bad.size:
        i = int(bad[0]) + 1
        raise DataError(
            f"times must be strictly increasing; times[{i}]={series.times[i]} "
            f"does not exceed times[{i - 1}]={series.times[i - 1]}"
        )
    neg = np.argwhere(series.injection < 0)
    if neg.size:
        r, c = (int(v) for v in neg[0])
        raise DataError(
            f"negative injection rate {series.injection[r, c]} at (row {r}, col {c})"
        )
    return series


def split(series: RateSeries, s: TrainTestSplit | int) -> tuple[RateSeries, RateSeries]:
    """Split a series into training rows [0, split) and test rows [split, n).

    Raises
    ------
    DataError
        If the split index is not strictly inside the series.
    """
    idx = s.split_index if isinstance(s, TrainTestSplit) else int(s)
    if not 0 < idx < series.n_steps:
        raise DataError(
            f"split index must lie strictly within (0, {series.n_steps}), got {idx}"
        )

    def cut(lo, hi):
        return RateSeries(
            times=series.times[lo:hi],
            injection=series.injection[lo:hi],
            production=None if series.production is None else series.production[lo:hi],
            bhp=None if series.bhp is None else series.bhp[lo:hi],
        )

    return cut(0, idx), cut(idx, series.n_steps)


def concat(first: RateSeries, second: RateSeries) -> RateSeries:
    """Stack two series in time; the exact inverse of :func:`split`."""
    if first.injection.shape[1] != second.injection.shape[1]:
        raise DataError("cannot concatenate series with different injector counts")

    def join(a, b, name):
        if (a is None) != (b is None):
            raise DataError(f"cannot concatenate: {name} present in only one part")
        if a is None:
            return None
        return np.concatenate([a, b], axis=0)

    return RateSeries(
        times=np.concatenate([first.times, second.times]),
        injection=np.concatenate([first.injection, second.injection], axis=0),
        production=join(first.production, second.production, "production"),
        bhp=join(first.bhp, second.bhp, "bhp"),
    )
