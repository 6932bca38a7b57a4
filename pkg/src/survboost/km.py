"""Reverse Kaplan-Meier estimate of the censoring distribution and IPCW weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UnboundedWeightError(ArithmeticError):
    """The censoring survival curve is zero just before an observed event."""


@dataclass(frozen=True)
class KaplanMeierCurve:
    """Right-continuous step function starting at 1.

    ``values[k]`` is the survival probability on
    ``[jump_times[k], jump_times[k+1])``.
    """

    jump_times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.array(self.jump_times, dtype=float)
        v = np.array(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("jump_times and values must be vectors of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("jump_times must be strictly increasing")
        if np.any(v < 0) or np.any(v > 1) or np.any(np.diff(v) > 0):
            raise ValueError("values must be nonincreasing within [0, 1]")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "jump_times", t)
        object.__setattr__(self, "values", v)

    def __call__(self, t) -> np.ndarray:
        """Evaluate ``S(t)``, the value at the largest jump time ``<= t``."""
        idx = np.searchsorted(self.jump_times, np.asarray(t, dtype=float), side="right")
        return np.concatenate([[1.0], self.values])[idx]

    def left_limit(self, t) -> np.ndarray:
        """Evaluate ``S(t-)``, using only jumps strictly before ``t``."""
        idx = np.searchsorted(self.jump_times, np.asarray(t, dtype=float), side="left")
        return np.concatenate([[1.0], self.values])[idx]


def product_limit(time, events) -> KaplanMeierCurve:
    """Kaplan-Meier estimate treating rows with ``events == 1`` as the events.

    The at-risk count at ``t`` is ``#{U_j >= t}``.
    """
    time = np.asarray(time, dtype=float)
    events = np.asarray(events, dtype=float)
    uniq, inverse = np.unique(time, return_inverse=True)
    n_events = np.bincount(inverse, weights=events, minlength=uniq.size)
    n_leaving = np.bincount(inverse, minlength=uniq.size)
    at_risk = time.size - np.concatenate([[0], np.cumsum(n_leaving)[:-1]])
    keep = n_events > 0
    surv = np.cumprod(1.0 - n_events[keep] / at_risk[keep])
    return KaplanMeierCurve(uniq[keep], np.clip(surv, 0.0, 1.0))


def fit_censoring_km(time, status) -> KaplanMeierCurve:
    """Estimate the censoring survival function ``G`` (censorings are the events).

    An event tied with a censoring is counted as still at risk of censoring.
    """
    return product_limit(time, 1 - np.asarray(status, dtype=float))


def ipw_weights(time, status, curve: KaplanMeierCurve) -> np.ndarray:
    """``w_i = Delta_i / G(U_i-)``; zero for censored rows."""
    time = np.asarray(time, dtype=float)
    delta = np.asarray(status, dtype=float)
    g = curve.left_limit(time)
    ev = delta == 1
    if np.any(g[ev] <= 0):
        t_bad = float(np.min(time[ev & (g <= 0)]))
        raise UnboundedWeightError(
            f"unbounded IPW weight: censoring survival is 0 before event at t={t_bad:g}"
        )
    w = np.zeros_like(time)
    w[ev] = 1.0 / g[ev]
    return w


def censoring_weights(time, status, cap: float | None = None) -> np.ndarray:
    """Fit ``G`` on the data and return its IPCW weights, optionally capped."""
    w = ipw_weights(time, status, fit_censoring_km(time, status))
    if cap is not None:
        w = np.minimum(w, cap)
    return w
