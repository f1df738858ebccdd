"""Variable importance B* from Gini CART trees over stratified folds."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

MAX_DEPTH = 8
MIN_SAMPLES_LEAF = 5
MIN_GAIN = 1e-12


def stratified_folds(labels, k: int = 5, seed: int = 0) -> np.ndarray:
    """Fold id per sample.

    Each class is shuffled with a seeded generator and dealt round-robin;
    the deal for a class starts where the previous class stopped, which
    keeps fold sizes within one of each other as well.
    """
    y = np.asarray(labels)
    if k < 2:
        raise ValueError("k must be >= 2")
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise ValueError(f"need at least two classes, got only {classes.tolist()}")
    for c, n in zip(classes, counts):
        if n < k:
            raise ValueError(f"class {c!r} has {n} members, fewer than k={k}")
    rng = np.random.default_rng(seed)
    folds = np.empty(len(y), dtype=np.int64)
    start = 0
    for c in classes:
        idx = rng.permutation(np.flatnonzero(y == c))
        folds[idx] = (start + np.arange(len(idx))) % k
        start = (start + len(idx)) % k
    return folds


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.sum(p * p))


@dataclass
class Node:
    counts: np.ndarray
    impurity: float
    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0

    @property
    def n(self) -> int:
        return int(self.counts.sum())


@dataclass
class DecisionTree:
    nodes: list[Node]
    n_features: int
    classes: np.ndarray

    @property
    def depth(self) -> int:
        def d(i):
            nd = self.nodes[i]
            return 0 if nd.is_leaf else 1 + max(d(nd.left), d(nd.right))

        return d(0)

    def _leaf(self, x) -> Node:
        nd = self.nodes[0]
        while not nd.is_leaf:
            nd = self.nodes[nd.left] if x[nd.feature] <= nd.threshold else self.nodes[nd.right]
        return nd

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        # ties in leaf counts go to the first class
        return np.array([self.classes[int(np.argmax(self._leaf(x).counts))] for x in X])

    def importances(self) -> np.ndarray:
        """Impurity decrease per feature weighted by node sample share,
        normalized to sum 1 (all zeros for a single leaf)."""
        imp = np.zeros(self.n_features)
        total = self.nodes[0].n
        for nd in self.nodes:
            if nd.is_leaf:
                continue
            l, r = self.nodes[nd.left], self.nodes[nd.right]
            imp[nd.feature] += (nd.n * nd.impurity - l.n * l.impurity - r.n * r.impurity) / total
        s = imp.sum()
        return imp / s if s > 0 else imp


def _best_split(X, y_idx, n_classes, min_leaf):
    """Exhaustive search; returns (gain, feature, threshold) or None.

    Earlier features win ties, and within a feature the lowest threshold."""
    n = len(y_idx)
    parent = np.bincount(y_idx, minlength=n_classes).astype(float)
    parent_imp = gini(parent)
    best = None
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), y_idx[order]] = 1.0
        left = np.cumsum(onehot, axis=0)[:-1]
        nl = np.arange(1, n, dtype=float)
        # candidate cut after position i: value changes and both sides large enough
        valid = (xs[1:] != xs[:-1]) & (nl >= min_leaf) & (n - nl >= min_leaf)
        if not valid.any():
            continue
        right = parent - left
        gl = 1.0 - np.sum((left / nl[:, None]) ** 2, axis=1)
        gr = 1.0 - np.sum((right / (n - nl)[:, None]) ** 2, axis=1)
        gain = parent_imp - (nl * gl + (n - nl) * gr) / n
        gain[~valid] = -np.inf
        i = int(np.argmax(gain))
        if gain[i] > MIN_GAIN and (best is None or gain[i] > best[0] + MIN_GAIN):
            best = (float(gain[i]), f, float((xs[i] + xs[i + 1]) / 2.0))
    return best


def fit_tree(X, y, max_depth: int = MAX_DEPTH, min_samples_leaf: int = MIN_SAMPLES_LEAF) -> DecisionTree:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != len(y) or len(y) == 0:
        raise ValueError("X must be a nonempty (n, k) matrix aligned with y")
    if not np.all(np.isfinite(X)):
        raise ValueError("training matrix has missing or infinite entries")
    classes, y_idx = np.unique(y, return_inverse=True)
    nc = len(classes)
    nodes: list[Node] = []

    def grow(rows, depth):
        counts = np.bincount(y_idx[rows], minlength=nc).astype(float)
        me = len(nodes)
        nodes.append(Node(counts, gini(counts)))
        if depth >= max_depth or nodes[me].impurity == 0.0:
            return me
        split = _best_split(X[rows], y_idx[rows], nc, min_samples_leaf)
        if split is None:
            return me
        _, f, thr = split
        mask = X[rows, f] <= thr
        nodes[me].feature, nodes[me].threshold = f, thr
        nodes[me].left = grow(rows[mask], depth + 1)
        nodes[me].right = grow(rows[~mask], depth + 1)
        return me

    grow(np.arange(len(y)), 0)
    return DecisionTree(nodes, X.shape[1], classes)


def feature_importance(trees: Sequence[DecisionTree]) -> np.ndarray:
    if not trees:
        raise ValueError("need at least one tree")
    per_tree = np.array([t.importances() for t in trees])
    mean = per_tree.mean(axis=0)
    s = mean.sum()
    if s <= 0:
        log.warning("every tree is a single leaf; importance is uniform")
        k = trees[0].n_features
        return np.full(k, 1.0 / k)
    return mean / s


@dataclass
class CVResult:
    folds: np.ndarray
    trees: list[DecisionTree]
    importance: np.ndarray
    predictions: np.ndarray
    fold_scores: list[float] = field(default_factory=list)


def cross_validate(
    X, y, k: int = 5, seed: int = 0, max_depth: int = MAX_DEPTH, min_samples_leaf: int = MIN_SAMPLES_LEAF
) -> CVResult:
    """Train one tree per fold on the other k-1 folds; importance is the
    normalized mean of the per-tree importances."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    folds = stratified_folds(y, k, seed)
    trees = []
    pred = np.empty_like(y)
    scores = []
    for f in range(k):
        test = folds == f
        tree = fit_tree(X[~test], y[~test], max_depth, min_samples_leaf)
        trees.append(tree)
        pred[test] = tree.predict(X[test])
        scores.append(float(np.mean(pred[test] == y[test])))
    return CVResult(folds, trees, feature_importance(trees), pred, scores)


@dataclass(frozen=True)
class CoefficientVector:
    names: tuple[str, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.names) != len(self.values):
            raise ValueError("names and values differ in length")
        bad = [n for n, v in zip(self.names, self.values) if not v >= 0.0]
        if bad:
            raise ValueError(f"importances must be nonnegative: {bad}")

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=float)

    def __getitem__(self, name: str) -> float:
        return self.values[self.names.index(name)]


def to_coefficients(importance, names: Sequence[str], expected: Sequence[str] | None = None) -> CoefficientVector:
    names = tuple(names)
    if expected is not None and names != tuple(expected):
        raise ValueError("feature order does not match the model's column contract")
    values = tuple(float(v) for v in np.asarray(importance, dtype=float))
    return CoefficientVector(names, values)


def write_coefficients(path, coef: CoefficientVector) -> None:
    # repr() of a float is the shortest string that parses back to it
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("feature,importance\n")
        for n, v in zip(coef.names, coef.values):
            fh.write(f"{n},{v!r}\n")


def _parse_coefficients(rows, expected: Sequence[str] | None) -> CoefficientVector:
    values = {}
    order = []
    for row in rows:
        name = row["feature"].strip()
        if name in values:
            raise ValueError(f"feature {name!r} listed twice")
        values[name] = float(row["importance"])
        order.append(name)
    if expected is None:
        return CoefficientVector(tuple(order), tuple(values[n] for n in order))
    unknown = [n for n in order if n not in expected]
    if unknown:
        raise ValueError(f"unknown features in B* file: {unknown}")
    present = [n for n in expected if n in values]
    if order != present:
        raise ValueError("B* file lists features out of the model's column order")
    missing = [n for n in expected if n not in values]
    if missing:
        log.warning("B* file lacks %s; set to 0", missing)
    return CoefficientVector(tuple(expected), tuple(values.get(n, 0.0) for n in expected))


def read_coefficients(path, expected: Sequence[str] | None = None) -> CoefficientVector:
    with open(path, encoding="utf-8", newline="") as fh:
        return _parse_coefficients(csv.DictReader(fh), expected)


def published_coefficients(expected: Sequence[str] | None = None) -> CoefficientVector:
    """Bundled all-agents importance column for the 20 published features."""
    text = resources.files("stanceflip.data").joinpath("published_importance.csv").read_text("utf-8")
    return _parse_coefficients(csv.DictReader(text.splitlines()), expected)
