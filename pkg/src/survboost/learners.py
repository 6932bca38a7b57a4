"""Base procedures fitted to the pseudo-response in each boosting round."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Union

import numpy as np


class LearnerKind(enum.Enum):
    LINEAR = "linear"
    STUMP = "stump"
    TREE = "tree"


@dataclass(frozen=True)
class BaseLearnerSpec:
    kind: LearnerKind = LearnerKind.LINEAR
    max_depth: int = 2

    def __post_init__(self):
        if self.kind is LearnerKind.STUMP:
            object.__setattr__(self, "max_depth", 1)
        if not 1 <= self.max_depth <= 6:
            raise ValueError("max_depth must lie in [1, 6]")

    @property
    def label(self) -> str:
        if self.kind is LearnerKind.TREE:
            return f"tree(depth={self.max_depth})"
        return self.kind.value


@dataclass(frozen=True)
class LinearLearner:
    """Slope ``coef`` on the single column ``index``."""

    index: int
    coef: float

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return self.coef * X[:, self.index]


@dataclass(frozen=True)
class Leaf:
    value: float


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: "Node"
    right: "Node"


Node = Union[Leaf, Split]


@dataclass(frozen=True)
class TreeLearner:
    root: Node

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[0])
        _route(self.root, X, np.arange(X.shape[0]), out)
        return out

    def leaves(self) -> list[Leaf]:
        found, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, Leaf):
                found.append(node)
            else:
                stack.extend((node.right, node.left))
        return found

    def features(self) -> set[int]:
        found, stack = set(), [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, Split):
                found.add(node.feature)
                stack.extend((node.left, node.right))
        return found


FittedLearner = Union[LinearLearner, TreeLearner]


def _route(node: Node, X, rows, out):
    if isinstance(node, Leaf):
        out[rows] = node.value
        return
    go_left = X[rows, node.feature] <= node.threshold
    _route(node.left, X, rows[go_left], out)
    _route(node.right, X, rows[~go_left], out)


def predict_learner(learner: FittedLearner, x) -> float | np.ndarray:
    """Predict a single row (1-D input) or a matrix of rows."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return float(learner.predict(x[None, :])[0])
    return learner.predict(x)


# --------------------------------------------------------------------------
# componentwise least squares


class ComponentwiseLinear:
    """Componentwise least squares with the column Gram diagonal cached.

    For each column ``gamma_j = <X_j, Z> / <X_j, X_j>`` and the residual sum of
    squares drops by ``<X_j, Z>^2 / <X_j, X_j>``; the column with the largest
    drop wins, ties going to the smallest index.
    """

    def __init__(self, X):
        self.X = np.asarray(X, dtype=float)
        self.sq_norms = np.einsum("ij,ij->j", self.X, self.X)
        if np.any(self.sq_norms <= 0):
            raise ValueError("componentwise fit needs nonzero columns")

    def fit(self, Z) -> LinearLearner:
        xz = self.X.T @ Z
        gain = xz * xz / self.sq_norms
        j = int(np.argmax(gain))
        return LinearLearner(j, float(xz[j] / self.sq_norms[j]))


def fit_componentwise_linear(Z, X) -> LinearLearner:
    return ComponentwiseLinear(X).fit(np.asarray(Z, dtype=float))


# --------------------------------------------------------------------------
# least-squares regression trees


def _best_split_column(z_sorted, x_sorted):
    """Best split of one presorted column.

    Returns ``(sse, threshold)`` or ``None`` when the column is constant.
    """
    n = z_sorted.shape[0]
    cs = np.cumsum(z_sorted)
    cs2 = np.cumsum(z_sorted * z_sorted)
    # candidate boundaries sit between distinct consecutive values
    cut = np.flatnonzero(x_sorted[1:] > x_sorted[:-1])
    if cut.size == 0:
        return None
    n_left = cut + 1.0
    n_right = n - n_left
    s_left = cs[cut]
    s_right = cs[-1] - s_left
    q_left = cs2[cut]
    q_right = cs2[-1] - q_left
    sse = (q_left - s_left**2 / n_left) + (q_right - s_right**2 / n_right)
    # first index within rounding of the minimum: smallest threshold wins ties
    k = int(np.flatnonzero(sse <= sse.min() + 1e-12 * max(abs(sse.min()), 1e-300))[0])
    c = cut[k]
    return float(sse[k]), 0.5 * (x_sorted[c] + x_sorted[c + 1])


def find_best_split(Z, X):
    """Exhaustive least-squares split search: ``(feature, threshold, sse)`` or ``None``.

    Ties are broken by smallest column, then smallest threshold.  Two
    columns that induce the same partition give SSE values differing only by
    rounding, so a column must win by more than a relative ``1e-12``.
    """
    best = None
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        res = _best_split_column(Z[order], X[order, j])
        if res is None:
            continue
        if best is None or res[0] < best[2] - 1e-12 * max(abs(best[2]), 1e-300):
            best = (j, res[1], res[0])
    return best


def _grow(Z, X, depth, max_depth) -> Node:
    mean = float(np.mean(Z))
    if depth >= max_depth or Z.shape[0] < 2:
        return Leaf(mean)
    sse_parent = float(np.sum((Z - mean) ** 2))
    split = find_best_split(Z, X)
    if split is None:
        return Leaf(mean)
    j, thr, sse = split
    # no gain beyond rounding: stop
    if sse_parent - sse <= 1e-12 * max(sse_parent, 1e-300) or sse_parent <= 1e-300:
        return Leaf(mean)
    left = X[:, j] <= thr
    return Split(
        j,
        thr,
        _grow(Z[left], X[left], depth + 1, max_depth),
        _grow(Z[~left], X[~left], depth + 1, max_depth),
    )


def fit_tree(Z, X, max_depth: int = 2) -> TreeLearner:
    """Greedy least-squares regression tree; ``max_depth=1`` is a stump."""
    Z = np.asarray(Z, dtype=float)
    X = np.asarray(X, dtype=float)
    if Z.shape[0] < 2:
        raise ValueError("a tree needs at least 2 rows")
    if not 1 <= max_depth <= 6:
        raise ValueError("max_depth must lie in [1, 6]")
    return TreeLearner(_grow(Z, X, 0, max_depth))


def make_fitter(spec: BaseLearnerSpec, X):
    """Return a callable ``Z -> FittedLearner`` bound to the design ``X``."""
    if spec.kind is LearnerKind.LINEAR:
        return ComponentwiseLinear(X).fit
    depth = spec.max_depth
    return lambda Z: fit_tree(Z, X, depth)
