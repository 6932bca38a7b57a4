"""Convex losses for censored regression and their negative gradients.

Every ``*_negative_gradient`` returns the pseudo-response used by the
boosting loop.  All four share one scale convention: the returned vector is
``-n * dL/df`` where ``L`` is the (1/n or 1/n^2 normalised) loss.  For the
Gehan loss this is exactly ``-(Gamma1 - Gamma2) / n``; for the Cox loss it is
the vector of martingale residuals.

Residual-based losses take ``e = log U - f``.  Since ``de/df = -1`` the
derivative of a residual loss with respect to ``e`` equals the negative
gradient with respect to ``f``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np


class LossKind(enum.Enum):
    GEHAN = "gehan"
    COXPH = "coxph"
    IPW_L2 = "ipw-l2"
    PLAIN_L2 = "l2"

    @property
    def is_proportional_hazards(self) -> bool:
        return self is LossKind.COXPH

    @property
    def needs_weights(self) -> bool:
        return self is LossKind.IPW_L2


@dataclass(frozen=True)
class ResidualContext:
    """Residuals ``e_i = log U_i - f(X_i)`` with event flags and optional IPW weights."""

    residuals: np.ndarray
    status: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        e = np.asarray(self.residuals, dtype=float)
        s = np.asarray(self.status)
        if e.ndim != 1 or s.shape != e.shape:
            raise ValueError("residuals and status must be vectors of equal length")
        if not np.all(np.isfinite(e)):
            raise ValueError("non-finite residual")
        object.__setattr__(self, "residuals", e)
        object.__setattr__(self, "status", s.astype(float))
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != e.shape:
                raise ValueError("weights must match residuals in length")
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise ValueError("weights must be finite and nonnegative")
            if np.any(w[s == 0] != 0):
                raise ValueError("censored rows must carry zero weight")
            object.__setattr__(self, "weights", w)


# --------------------------------------------------------------------------
# Gehan


def gehan_loss_bruteforce(ctx: ResidualContext) -> float:
    e, delta = ctx.residuals, ctx.status
    n = e.shape[0]
    diff = e[:, None] - e[None, :]
    terms = delta[:, None] * diff * (e[:, None] <= e[None, :])
    return float(-terms.sum() / n**2)


def gehan_loss(ctx: ResidualContext) -> float:
    """``-n^-2 sum_i sum_j Delta_i (e_i - e_j) I(e_i <= e_j)`` in O(n log n)."""
    e, delta = ctx.residuals, ctx.status
    n = e.shape[0]
    order = np.argsort(e, kind="stable")
    es = e[order]
    # suffix sums over the sorted residuals; ties are all counted as e_j >= e_i
    suffix = np.concatenate([np.cumsum(es[::-1])[::-1], [0.0]])
    first = np.searchsorted(es, e, side="left")
    count_ge = n - first
    sum_ge = suffix[first]
    total = np.sum(delta * (sum_ge - count_ge * e))
    return float(max(total, 0.0) / n**2)


def gehan_negative_gradient(ctx: ResidualContext) -> np.ndarray:
    """Reference O(n^2) pseudo-response ``-(Gamma1 - Gamma2)/n``.

    ``Gamma1_k = Delta_k #{j : e_k <= e_j}`` and
    ``Gamma2_k = #{j : Delta_j = 1, e_j <= e_k}``.
    """
    e, delta = ctx.residuals, ctx.status
    n = e.shape[0]
    le = e[:, None] <= e[None, :]  # le[k, j] = I(e_k <= e_j)
    gamma1 = delta * le.sum(axis=1)
    gamma2 = (le * delta[:, None]).sum(axis=0)
    return -(gamma1 - gamma2) / n


def gehan_negative_gradient_fast(ctx: ResidualContext) -> np.ndarray:
    """Same counts as :func:`gehan_negative_gradient`, by sorting and binary search."""
    e, delta = ctx.residuals, ctx.status
    n = e.shape[0]
    es = np.sort(e)
    events = np.sort(e[delta == 1])
    gamma1 = delta * (n - np.searchsorted(es, e, side="left"))
    gamma2 = np.searchsorted(events, e, side="right")
    return -(gamma1 - gamma2) / n


# --------------------------------------------------------------------------
# Cox partial likelihood (Breslow risk sets, ties all at risk)


def _risk_sums(f, time):
    """Log of ``sum_{j: U_j >= U_i} exp(f_j)`` for every i, max-shifted."""
    shift = np.max(f)
    ef = np.exp(f - shift)
    order = np.argsort(time, kind="stable")
    ts = time[order]
    suffix = np.cumsum(ef[order][::-1])[::-1]
    first = np.searchsorted(ts, time, side="left")
    return suffix[first], shift


def cox_negative_log_pl(f, time, status) -> float:
    """``-(1/n) sum_i Delta_i [f_i - log sum_{U_j >= U_i} exp f_j]``."""
    f = np.asarray(f, dtype=float)
    time = np.asarray(time, dtype=float)
    delta = np.asarray(status, dtype=float)
    _check_lengths(f, time, delta)
    if not np.any(delta):
        return 0.0
    risk, shift = _risk_sums(f, time)
    ev = delta == 1
    return float(-np.sum(f[ev] - shift - np.log(risk[ev])) / f.shape[0])


def cox_negative_gradient(f, time, status) -> np.ndarray:
    """Martingale residuals ``Delta_i - exp(f_i) sum_{k: U_k <= U_i} Delta_k / R_k``."""
    f = np.asarray(f, dtype=float)
    time = np.asarray(time, dtype=float)
    delta = np.asarray(status, dtype=float)
    _check_lengths(f, time, delta)
    if not np.any(delta):
        return np.zeros_like(f)
    risk, shift = _risk_sums(f, time)
    order = np.argsort(time, kind="stable")
    ts = time[order]
    hazard = np.cumsum((delta / risk)[order])
    last = np.searchsorted(ts, time, side="right") - 1
    return delta - np.exp(f - shift) * hazard[last]


def _check_lengths(f, time, delta):
    if not (f.ndim == 1 and f.shape == time.shape == delta.shape):
        raise ValueError("f, time and status must be vectors of equal length")


# --------------------------------------------------------------------------
# squared error


def plain_l2_loss(ctx: ResidualContext) -> float:
    e = ctx.residuals
    return float(np.dot(e, e) / (2 * e.shape[0]))


def plain_l2_negative_gradient(ctx: ResidualContext) -> np.ndarray:
    return ctx.residuals.copy()


def ipw_l2_loss(ctx: ResidualContext) -> float:
    """``(1/2n) sum_i w_i e_i^2`` with inverse-probability-of-censoring weights."""
    if ctx.weights is None:
        raise ValueError("IPW loss requires weights")
    e = ctx.residuals
    return float(np.dot(ctx.weights, e * e) / (2 * e.shape[0]))


def ipw_l2_negative_gradient(ctx: ResidualContext) -> np.ndarray:
    if ctx.weights is None:
        raise ValueError("IPW loss requires weights")
    return ctx.weights * ctx.residuals


# --------------------------------------------------------------------------
# dispatch used by the engine


def loss_value(kind: LossKind, f, log_time, time, status, weights=None) -> float:
    if kind is LossKind.COXPH:
        return cox_negative_log_pl(f, time, status)
    ctx = ResidualContext(log_time - f, status, weights)
    if kind is LossKind.GEHAN:
        return gehan_loss(ctx)
    if kind is LossKind.IPW_L2:
        return ipw_l2_loss(ctx)
    return plain_l2_loss(ctx)


def negative_gradient(kind: LossKind, f, log_time, time, status, weights=None) -> np.ndarray:
    if kind is LossKind.COXPH:
        return cox_negative_gradient(f, time, status)
    ctx = ResidualContext(log_time - f, status, weights)
    if kind is LossKind.GEHAN:
        return gehan_negative_gradient_fast(ctx)
    if kind is LossKind.IPW_L2:
        return ipw_l2_negative_gradient(ctx)
    return plain_l2_negative_gradient(ctx)
