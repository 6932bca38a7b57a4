"""Right-censored regression datasets: validation, loading and standardization."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class DataValidationError(ValueError):
    """Raised when a dataset violates one of its invariants."""


@dataclass(frozen=True)
class SurvivalDataset:
    """Observed triples ``(U, Delta, X)``.

    Parameters
    ----------
    time : ndarray of shape (n,)
        Follow-up time ``U = min(T, C)``; strictly positive.
    status : ndarray of shape (n,)
        Event indicator, 1 if the event was observed and 0 if censored.
    covariates : ndarray of shape (n, d)
    column_names : sequence of str, optional
        Defaults to ``x0, x1, ...``.

    Arrays are copied and marked read-only, so instances can be shared
    between workers.
    """

    time: np.ndarray
    status: np.ndarray
    covariates: np.ndarray
    column_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        time = np.array(self.time, dtype=float)
        status_raw = np.asarray(self.status)
        X = np.array(self.covariates, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if time.ndim != 1 or X.ndim != 2:
            raise DataValidationError("time must be a vector and covariates a matrix")
        n = time.shape[0]
        if n < 2:
            raise DataValidationError(f"fewer than 2 rows (got {n})")
        if status_raw.shape != (n,) or X.shape[0] != n:
            raise DataValidationError("time, status and covariates disagree in length")
        if X.shape[1] < 1:
            raise DataValidationError("at least one covariate is required")
        if not np.all(np.isfinite(time)):
            raise DataValidationError("non-finite time")
        if np.any(time <= 0):
            raise DataValidationError("non-positive time")
        status_f = np.asarray(status_raw, dtype=float)
        if not np.all((status_f == 0) | (status_f == 1)):
            raise DataValidationError("status outside {0,1}")
        if not np.all(np.isfinite(X)):
            raise DataValidationError("non-finite covariate value")

        names = tuple(self.column_names) or tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataValidationError("column_names length does not match covariates")

        status = status_f.astype(np.int8)
        for arr in (time, status, X):
            arr.setflags(write=False)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "status", status)
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.time.shape[0]

    @property
    def d(self) -> int:
        return self.covariates.shape[1]

    def subset(self, rows) -> "SurvivalDataset":
        rows = np.asarray(rows)
        return SurvivalDataset(
            self.time[rows], self.status[rows], self.covariates[rows], self.column_names
        )

    def with_covariates(self, X) -> "SurvivalDataset":
        return SurvivalDataset(self.time, self.status, X, self.column_names)


@dataclass(frozen=True)
class Standardization:
    """Column centring and scaling (sample standard deviation, ``ddof=1``)."""

    means: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        means = np.array(self.means, dtype=float)
        scales = np.array(self.scales, dtype=float)
        if means.shape != scales.shape or means.ndim != 1:
            raise DataValidationError("means and scales must be vectors of equal length")
        if np.any(~np.isfinite(scales)) or np.any(scales <= 0):
            raise DataValidationError("scales must be strictly positive")
        means.setflags(write=False)
        scales.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "scales", scales)

    @classmethod
    def identity(cls, d: int) -> "Standardization":
        return cls(np.zeros(d), np.ones(d))

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.means.shape[0]:
            raise DataValidationError(
                f"expected {self.means.shape[0]} columns, got {X.shape[1]}"
            )
        return (X - self.means) / self.scales

    def invert(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.scales + self.means


def standardize(data: SurvivalDataset) -> tuple[SurvivalDataset, Standardization]:
    """Centre every covariate to mean zero and scale to unit sample variance.

    Raises
    ------
    DataValidationError
        If a column is constant; the message names the column.
    """
    X = data.covariates
    means = X.mean(axis=0)
    centred = X - means
    scales = centred.std(axis=0, ddof=1)
    # a column whose spread is at rounding level is constant
    tiny = scales <= 1e-13 * np.maximum(1.0, np.abs(means))
    if np.any(tiny):
        j = int(np.flatnonzero(tiny)[0])
        raise DataValidationError(f"constant covariate column '{data.column_names[j]}'")
    Z = centred / scales
    # second pass removes rounding left in the mean and scale
    m2 = Z.mean(axis=0)
    s2 = (Z - m2).std(axis=0, ddof=1)
    Z = (Z - m2) / s2
    std = Standardization(means + m2 * scales, scales * s2)
    return data.with_covariates(Z), std


def log_times(data: SurvivalDataset) -> np.ndarray:
    return np.log(data.time)


def load_delimited(
    path,
    time_col: str = "time",
    status_col: str = "status",
    delimiter: str = ",",
) -> SurvivalDataset:
    """Read a delimited text file with one header row.

    The time and status columns are picked by name; every other column
    becomes a covariate, in file order.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise DataValidationError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    for label in (time_col, status_col):
        if label not in header:
            raise DataValidationError(f"{path}: missing column '{label}'")
    it, is_ = header.index(time_col), header.index(status_col)
    cov_idx = [k for k in range(len(header)) if k not in (it, is_)]

    body = rows[1:]
    values = np.empty((len(body), len(header)))
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataValidationError(f"{path}:{r}: expected {len(header)} fields")
        for k, cell in enumerate(row):
            values[r - 2, k] = _parse_number(cell, path, r, header[k])

    return SurvivalDataset(
        values[:, it],
        values[:, is_],
        values[:, cov_idx].reshape(len(body), len(cov_idx)),
        tuple(header[k] for k in cov_idx),
    )


def _parse_number(cell: str, path, line: int, column: str) -> float:
    text = cell.strip()
    try:
        return float(text)
    except ValueError:
        raise DataValidationError(
            f"{path}:{line}: non-numeric cell {cell!r} in column '{column}'"
        ) from None


def write_delimited(data: SurvivalDataset, path, delimiter: str = ",",
                    time_col: str = "time", status_col: str = "status") -> None:
    header: Sequence[str] = [time_col, status_col, *data.column_names]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(header)
        for i in range(data.n):
            w.writerow([repr(float(data.time[i])), int(data.status[i]),
                        *(repr(float(v)) for v in data.covariates[i])])
