"""Functional gradient descent boosting, prediction and V-fold tuning of ``m_stop``."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from . import km
from .learners import (
    BaseLearnerSpec,
    FittedLearner,
    Leaf,
    LearnerKind,
    LinearLearner,
    Split,
    TreeLearner,
    make_fitter,
)
from .losses import LossKind, loss_value, negative_gradient
from .survdata import Standardization, SurvivalDataset

log = logging.getLogger(__name__)

FORMAT_NAME = "survboost-ensemble"
FORMAT_VERSION = 1


class NumericalError(ArithmeticError):
    """Boosting produced a non-finite quantity."""


@dataclass(frozen=True)
class BoostConfig:
    loss: LossKind = LossKind.GEHAN
    learner: BaseLearnerSpec = field(default_factory=BaseLearnerSpec)
    nu: float = 0.1
    m_max: int = 1000
    cv_folds: int = 5
    cv_grid_step: int = 10
    seed: int = 0
    stratify: bool = False
    weight_cap: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.nu <= 1:
            raise ValueError("nu must lie in (0, 1]")
        if self.m_max < 1:
            raise ValueError("m_max must be at least 1")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be at least 2")
        if self.cv_grid_step < 1:
            raise ValueError("cv_grid_step must be positive")
        if self.cv_grid_step > self.m_max:
            raise ValueError("empty CV grid: grid step exceeds m_max")
        if self.weight_cap is not None and self.weight_cap < 1:
            raise ValueError("weight_cap must be at least 1")

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.cv_grid_step, self.m_max + 1, self.cv_grid_step)


@dataclass
class Ensemble:
    """Additive predictor ``f = sum_m nu * g_m`` on the standardized scale.

    ``linear_coefficients`` is the running sum of ``nu * gamma`` per column and
    is only populated for the componentwise linear learner.  For the Cox and
    Gehan losses ``f`` is identified only up to an additive constant.
    """

    loss: LossKind
    learner: BaseLearnerSpec
    nu: float
    d: int
    updates: list = field(default_factory=list)
    standardization: Optional[Standardization] = None
    column_names: tuple = ()
    train_loss: list = field(default_factory=list)

    @property
    def m_stop(self) -> int:
        return len(self.updates)

    @property
    def is_linear(self) -> bool:
        return self.learner.kind is LearnerKind.LINEAR

    @property
    def linear_coefficients(self) -> Optional[np.ndarray]:
        if not self.is_linear:
            return None
        beta = np.zeros(self.d)
        for u in self.updates:
            beta[u.index] += self.nu * u.coef
        return beta

    def selected(self) -> list[int]:
        """Column indices used by any update, in first-use order."""
        seen: dict[int, None] = {}
        for u in self.updates:
            cols = [u.index] if isinstance(u, LinearLearner) else sorted(u.features())
            for j in cols:
                seen.setdefault(j, None)
        return list(seen)

    def truncate(self, m: int) -> "Ensemble":
        """The iteration-``m`` model (prefix of the update list)."""
        if not 0 <= m <= self.m_stop:
            raise ValueError(f"m must lie in [0, {self.m_stop}]")
        return Ensemble(
            self.loss, self.learner, self.nu, self.d, list(self.updates[:m]),
            self.standardization, self.column_names, list(self.train_loss[:m]),
        )

    def decision_function(self, Z) -> np.ndarray:
        """Sum of updates on an already-standardized matrix, in update order."""
        Z = np.asarray(Z, dtype=float)
        f = np.zeros(Z.shape[0])
        for u in self.updates:
            f += self.nu * u.predict(Z)
        return f


# --------------------------------------------------------------------------
# fitting


def _weights_for(data: SurvivalDataset, config: BoostConfig):
    if config.loss is not LossKind.IPW_L2:
        return None
    return km.censoring_weights(data.time, data.status, cap=config.weight_cap)


def _boost_path(
    X, time, status, config: BoostConfig, weights, updates=(), track_loss=False
) -> Iterator[tuple[FittedLearner, np.ndarray, Optional[float]]]:
    """Yield ``(learner, f, train_loss)`` after each new round.

    Existing ``updates`` are replayed first so that continuing a fit gives the
    same floating point state as an uninterrupted one.
    """
    y = np.log(time)
    fit = make_fitter(config.learner, X)
    f = np.zeros(X.shape[0])
    for u in updates:
        f += config.nu * u.predict(X)
    while True:
        z = negative_gradient(config.loss, f, y, time, status, weights)
        if not np.all(np.isfinite(z)):
            raise NumericalError(f"non-finite negative gradient under {config.loss.value} loss")
        g = fit(z)
        step = g.predict(X)
        if not np.all(np.isfinite(step)):
            raise NumericalError("base learner produced non-finite predictions")
        f += config.nu * step
        lv = loss_value(config.loss, f, y, time, status, weights) if track_loss else None
        yield g, f, lv


def boost(
    data: SurvivalDataset,
    config: BoostConfig,
    m_stop: int,
    standardization: Optional[Standardization] = None,
    init: Optional[Ensemble] = None,
    track_loss: bool = False,
) -> Ensemble:
    """Run ``m_stop`` rounds of functional gradient descent.

    ``data`` must already be standardized; pass the transform so that the
    ensemble can be applied to raw covariates later.  With ``init`` the fit
    continues from an existing ensemble, reproducing exactly the ensemble a
    single longer run would give.
    """
    if m_stop < 0:
        raise ValueError("m_stop must be nonnegative")
    weights = _weights_for(data, config)
    ens = Ensemble(
        config.loss, config.learner, config.nu, data.d,
        standardization=standardization or Standardization.identity(data.d),
        column_names=data.column_names,
    )
    if init is not None:
        if init.loss is not config.loss or init.nu != config.nu or init.d != data.d:
            raise ValueError("init ensemble does not match config")
        ens.updates = list(init.updates)
        ens.train_loss = list(init.train_loss)
    remaining = m_stop - ens.m_stop
    if remaining < 0:
        return ens.truncate(m_stop)
    if remaining == 0:
        return ens
    path = _boost_path(
        data.covariates, data.time, data.status, config, weights, ens.updates, track_loss
    )
    for _, (g, _, lv) in zip(range(remaining), path):
        ens.updates.append(g)
        if track_loss:
            ens.train_loss.append(lv)
    return ens


def predict(ensemble: Ensemble, X_new, standardized: bool = False) -> np.ndarray:
    """Evaluate ``f`` on new rows; raw covariates are standardized first."""
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim == 1:
        X_new = X_new[None, :]
    if X_new.shape[1] != ensemble.d:
        raise ValueError(f"expected {ensemble.d} columns, got {X_new.shape[1]}")
    Z = X_new if standardized or ensemble.standardization is None else ensemble.standardization.apply(X_new)
    return ensemble.decision_function(Z)


# --------------------------------------------------------------------------
# cross-validation


@dataclass
class CvCurve:
    grid: np.ndarray
    mean_heldout_loss: np.ndarray
    chosen_mstop: int
    fold_losses: np.ndarray = None
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        self.grid = np.asarray(self.grid)
        self.mean_heldout_loss = np.asarray(self.mean_heldout_loss, dtype=float)


def fold_assignment(n: int, folds: int, seed: int, status=None) -> list[np.ndarray]:
    """Seeded shuffle split into contiguous blocks.

    With ``status`` the events and censored rows are shuffled separately and
    dealt round-robin, so every fold gets a share of both.
    """
    if n < folds:
        raise ValueError(f"cannot split {n} rows into {folds} folds")
    rng = np.random.default_rng(seed)
    if status is None:
        perm = rng.permutation(n)
        return [np.sort(b) for b in np.array_split(perm, folds)]
    status = np.asarray(status)
    order = np.concatenate(
        [rng.permutation(np.flatnonzero(status == 1)), rng.permutation(np.flatnonzero(status == 0))]
    )
    labels = np.empty(n, dtype=int)
    labels[order] = np.arange(n) % folds
    return [np.flatnonzero(labels == k) for k in range(folds)]


def _fold_curve(data: SurvivalDataset, train, test, config: BoostConfig, weights):
    grid = config.grid
    Xtr, Xte = data.covariates[train], data.covariates[test]
    t_te, s_te = data.time[test], data.status[test]
    y_te = np.log(t_te)
    w_tr = None if weights is None else weights[train]
    w_te = None if weights is None else weights[test]
    path = _boost_path(Xtr, data.time[train], data.status[train], config, w_tr)

    out = np.empty(grid.size)
    f_te = np.zeros(test.size)
    k = 0
    for m in range(1, config.m_max + 1):
        g, _, _ = next(path)
        f_te += config.nu * g.predict(Xte)
        if k < grid.size and m == grid[k]:
            out[k] = loss_value(config.loss, f_te, y_te, t_te, s_te, w_te)
            k += 1
    return out


def cross_validate_mstop(data: SurvivalDataset, config: BoostConfig, threads: int = 1) -> CvCurve:
    """Mean held-out loss on the grid ``grid_step, 2 grid_step, ..., m_max``.

    The held-out loss is the training loss evaluated on the held-out rows
    alone.  IPCW weights come from the censoring curve of the full dataset.
    """
    n, V = data.n, config.cv_folds
    if n < 2 * V and V != n:
        raise ValueError(f"need at least {2 * V} rows for {V}-fold CV")
    folds = fold_assignment(n, V, config.seed, data.status if config.stratify else None)
    weights = _weights_for(data, config)
    warnings = []
    if config.loss in (LossKind.GEHAN, LossKind.COXPH):
        for k, test in enumerate(folds):
            if not np.any(data.status[test]):
                msg = f"fold {k} has no events; it contributes zero held-out loss"
                log.warning(msg)
                warnings.append(msg)

    def run(test):
        train = np.setdiff1d(np.arange(n), test)
        return _fold_curve(data, train, test, config, weights)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            curves = list(pool.map(run, folds))
    else:
        curves = [run(test) for test in folds]
    fold_losses = np.vstack(curves)
    mean = fold_losses.mean(axis=0)
    grid = config.grid
    return CvCurve(grid, mean, int(grid[int(np.argmin(mean))]), fold_losses, warnings)


def fit_cv(data: SurvivalDataset, config: BoostConfig, standardization=None, threads: int = 1):
    """Tune ``m_stop`` by cross-validation, then refit on all rows."""
    curve = cross_validate_mstop(data, config, threads=threads)
    return boost(data, config, curve.chosen_mstop, standardization), curve


# --------------------------------------------------------------------------
# serialization


def _node_to_dict(node):
    if isinstance(node, Leaf):
        return {"leaf": node.value}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def _node_from_dict(obj):
    if "leaf" in obj:
        return Leaf(float(obj["leaf"]))
    return Split(
        int(obj["feature"]), float(obj["threshold"]),
        _node_from_dict(obj["left"]), _node_from_dict(obj["right"]),
    )


def ensemble_to_dict(ens: Ensemble) -> dict:
    std = ens.standardization or Standardization.identity(ens.d)
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "loss": ens.loss.value,
        "learner": ens.learner.kind.value,
        "max_depth": ens.learner.max_depth,
        "nu": ens.nu,
        "m_stop": ens.m_stop,
        "d": ens.d,
        "column_names": list(ens.column_names),
        "standardization": {"means": std.means.tolist(), "scales": std.scales.tolist()},
    }
    if ens.is_linear:
        doc["coefficients"] = ens.linear_coefficients.tolist()
        doc["updates"] = [[u.index, u.coef] for u in ens.updates]
    else:
        doc["updates"] = [_node_to_dict(u.root) for u in ens.updates]
    return doc


def ensemble_from_dict(doc: dict) -> Ensemble:
    if doc.get("format") != FORMAT_NAME:
        raise ValueError("not an ensemble document")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported ensemble version {doc.get('version')}")
    spec = BaseLearnerSpec(LearnerKind(doc["learner"]), int(doc["max_depth"]))
    if spec.kind is LearnerKind.LINEAR:
        updates = [LinearLearner(int(j), float(c)) for j, c in doc["updates"]]
    else:
        updates = [TreeLearner(_node_from_dict(u)) for u in doc["updates"]]
    std = doc["standardization"]
    return Ensemble(
        LossKind(doc["loss"]), spec, float(doc["nu"]), int(doc["d"]), updates,
        Standardization(std["means"], std["scales"]), tuple(doc["column_names"]),
    )


def dumps_ensemble(ens: Ensemble) -> str:
    return json.dumps(ensemble_to_dict(ens), indent=1) + "\n"


def loads_ensemble(text: str) -> Ensemble:
    return ensemble_from_dict(json.loads(text))
