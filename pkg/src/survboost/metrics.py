"""Coefficient-recovery and risk-score agreement measures."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np


def _pair(beta_hat, beta_0):
    b = np.asarray(beta_hat, dtype=float)
    b0 = np.asarray(beta_0, dtype=float)
    if b.ndim != 1 or b.shape != b0.shape:
        raise ValueError(f"dimension mismatch: {b.shape} vs {b0.shape}")
    return b, b0


def model_error(beta_hat, beta_0, covariance) -> float:
    """``(b - b0)' Sigma (b - b0)``."""
    b, b0 = _pair(beta_hat, beta_0)
    cov = np.asarray(covariance, dtype=float)
    if cov.shape != (b.size, b.size):
        raise ValueError(f"dimension mismatch: covariance {cov.shape} for d={b.size}")
    diff = b - b0
    return max(float(diff @ cov @ diff), 0.0)


def mse(beta_hat, beta_0) -> float:
    b, b0 = _pair(beta_hat, beta_0)
    diff = b - b0
    return float(diff @ diff)


def selection_counts(beta_hat, beta_0) -> tuple[int, int, float]:
    """Correct zeros, incorrect zeros and false selection rate.

    A coefficient counts as zero only when it is exactly 0.0.
    """
    b, b0 = _pair(beta_hat, beta_0)
    est_zero = b == 0
    true_zero = b0 == 0
    correct = int(np.sum(est_zero & true_zero))
    incorrect = int(np.sum(est_zero & ~true_zero))
    active = int(np.sum(~est_zero))
    false_pos = int(np.sum(~est_zero & true_zero))
    return correct, incorrect, false_pos / max(1, active)


@dataclass(frozen=True)
class ScoreAgreement:
    r: float
    sign_disagreements: int
    gaps_over_1: int
    gaps_over_2: int


def score_correlation(f_a, f_b) -> ScoreAgreement:
    """Pearson correlation of two risk-score vectors plus disagreement counts."""
    a = np.asarray(f_a, dtype=float)
    b = np.asarray(f_b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError("score vectors must have equal length")
    if a.size < 3:
        raise ValueError("need at least 3 scores")
    ca, cb = a - a.mean(), b - b.mean()
    denom = np.sqrt(np.dot(ca, ca) * np.dot(cb, cb))
    if denom == 0:
        raise ValueError("undefined correlation: constant score vector")
    r = float(np.clip(np.dot(ca, cb) / denom, -1.0, 1.0))
    gap = np.abs(a - b)
    return ScoreAgreement(
        r,
        int(np.sum(np.sign(a) != np.sign(b))),
        int(np.sum(gap > 1)),
        int(np.sum(gap > 2)),
    )


@dataclass(frozen=True)
class ReplicateScore:
    replicate: int
    model_error: float
    mse: float
    correct_zeros: int
    incorrect_zeros: int
    fsr: float
    m_stop: int = 0
    censoring_rate: float = 0.0


def score_replicate(beta_hat, beta_0, covariance, replicate=0, m_stop=0,
                    censoring_rate=0.0) -> ReplicateScore:
    c, i, fsr = selection_counts(beta_hat, beta_0)
    return ReplicateScore(
        replicate, model_error(beta_hat, beta_0, covariance), mse(beta_hat, beta_0),
        c, i, fsr, m_stop, censoring_rate,
    )


@dataclass(frozen=True)
class Aggregate:
    replicates: int
    mme: float
    mean_mse: float
    mean_correct: float
    mean_incorrect: float
    mean_fsr: float


def aggregate(reports: Iterable[ReplicateScore]) -> Aggregate:
    """Median model error; arithmetic means of everything else."""
    reps = list(reports)
    if not reps:
        raise ValueError("cannot aggregate an empty set of replicates")
    me = np.array([r.model_error for r in reps])
    return Aggregate(
        len(reps),
        float(np.median(me)),
        float(np.mean([r.mse for r in reps])),
        float(np.mean([r.correct_zeros for r in reps])),
        float(np.mean([r.incorrect_zeros for r in reps])),
        float(np.mean([r.fsr for r in reps])),
    )


REPORT_FIELDS = ("replicate", "model_error", "mse", "correct_zeros", "incorrect_zeros",
                 "fsr", "m_stop", "censoring_rate")


def format_report(reports: Sequence[ReplicateScore], delimiter: str = ",") -> str:
    """One row per replicate and an ``aggregate`` footer row.

    In the footer ``model_error`` holds the median and the other columns hold means.
    """
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow(REPORT_FIELDS)
    for r in reports:
        row = asdict(r)
        w.writerow([_fmt(row[k]) for k in REPORT_FIELDS])
    agg = aggregate(reports)
    w.writerow([
        "aggregate", _fmt(agg.mme), _fmt(agg.mean_mse), _fmt(agg.mean_correct),
        _fmt(agg.mean_incorrect), _fmt(agg.mean_fsr),
        _fmt(float(np.mean([r.m_stop for r in reports]))),
        _fmt(float(np.mean([r.censoring_rate for r in reports]))),
    ])
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.10g}"
