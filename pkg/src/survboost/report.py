"""Coefficient tables and active-set comparisons across losses."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

DASH = "-"


def relative_proportions(coef) -> np.ndarray:
    """``100 * coef / max|coef|``, keeping each coefficient's sign.

    An all-zero vector maps to all zeros.
    """
    coef = np.asarray(coef, dtype=float)
    top = np.max(np.abs(coef)) if coef.size else 0.0
    if top == 0:
        return np.zeros_like(coef)
    return 100.0 * coef / top


@dataclass
class CoefficientRow:
    name: str
    coefficients: dict  # loss -> coefficient, absent when inactive
    proportions: dict


@dataclass
class CoefficientTable:
    losses: tuple
    rows: list

    def render(self, delimiter: str = ",") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
        header = ["name"]
        for l in self.losses:
            header += [f"coef_{l}", f"relprop_{l}"]
        w.writerow(header)
        for row in self.rows:
            cells = [row.name]
            for l in self.losses:
                if l in row.coefficients:
                    cells += [f"{row.coefficients[l]:.6g}", f"{row.proportions[l]:.1f}"]
                else:
                    cells += [DASH, DASH]
            w.writerow(cells)
        return buf.getvalue()


def coefficient_table(names: Sequence[str], coefs: Mapping[str, np.ndarray]) -> CoefficientTable:
    """Join coefficient vectors from several losses.

    One row per column active (nonzero) under any loss.  Rows are sorted by
    the largest relative proportion magnitude across losses, then by column
    position.
    """
    losses = tuple(coefs)
    props = {l: relative_proportions(c) for l, c in coefs.items()}
    rows = []
    for j, name in enumerate(names):
        active = {l: float(coefs[l][j]) for l in losses if coefs[l][j] != 0}
        if not active:
            continue
        rows.append((
            -max(abs(props[l][j]) for l in active), j,
            CoefficientRow(name, active, {l: float(props[l][j]) for l in active}),
        ))
    rows.sort(key=lambda t: (t[0], t[1]))
    return CoefficientTable(losses, [r for _, _, r in rows])


def active_set(names: Sequence[str], coef) -> frozenset:
    return frozenset(n for n, c in zip(names, coef) if c != 0)


@dataclass
class SetDifferences:
    """``counts[a][b] = |A - B|`` for every ordered pair of distinct losses."""

    losses: tuple
    totals: dict
    counts: dict

    def render(self, delimiter: str = ",") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
        w.writerow(["A", "total", *self.losses])
        for a in self.losses:
            w.writerow([a, self.totals[a], *(DASH if a == b else self.counts[a][b] for b in self.losses)])
        return buf.getvalue()


def set_differences(active: Mapping[str, frozenset]) -> SetDifferences:
    losses = tuple(active)
    counts = {a: {b: len(active[a] - active[b]) for b in losses if b != a} for a in losses}
    return SetDifferences(losses, {a: len(active[a]) for a in losses}, counts)
