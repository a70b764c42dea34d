"""Array-backed binary decision trees: Gini classification and Newton regression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF = -1


@dataclass
class Tree:
    """Flat node arrays; ``feature[i] == -1`` marks a leaf.

    ``value`` holds class counts (classification, shape (nodes, C)) or leaf
    weights (regression, shape (nodes,)). Samples go left when
    ``x[feature] <= threshold``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            inner = f != LEAF
            if not inner.any():
                return node
            r, nd = rows[inner], node[inner]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[inner] = np.where(go_left, self.left[nd], self.right[nd])

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.array(d["feature"], dtype=np.int64),
            np.array(d["threshold"], dtype=float),
            np.array(d["left"], dtype=np.int64),
            np.array(d["right"], dtype=np.int64),
            np.array(d["value"], dtype=float),
            np.array(d["n_samples"], dtype=np.int64),
        )


class _Builder:
    def __init__(self):
        self.feature, self.threshold, self.left, self.right = [], [], [], []
        self.value, self.n_samples = [], []

    def add(self, value, n) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(value)
        self.n_samples.append(n)
        return len(self.feature) - 1

    def split(self, node, feat, thr, left, right):
        self.feature[node] = feat
        self.threshold[node] = thr
        self.left[node] = left
        self.right[node] = right

    def build(self) -> Tree:
        return Tree(
            np.array(self.feature, dtype=np.int64),
            np.array(self.threshold, dtype=float),
            np.array(self.left, dtype=np.int64),
            np.array(self.right, dtype=np.int64),
            np.array(self.value, dtype=float),
            np.array(self.n_samples, dtype=np.int64),
        )


def _sorted_block(X, idx, feats):
    block = X[np.ix_(idx, feats)]
    order = np.argsort(block, axis=0, kind="stable")
    xs = np.take_along_axis(block, order, axis=0)
    return xs, order


def _threshold(lo: float, hi: float) -> float:
    t = (lo + hi) / 2.0
    return lo if t >= hi else t


def _gini_split(X, y, idx, feats, C, min_leaf):
    """Best (impurity_after, feature, threshold, left_mask) or None."""
    m = idx.size
    xs, order = _sorted_block(X, idx, feats)
    ys = y[idx][order]
    onehot = ys[..., None] == np.arange(C)
    left = np.cumsum(onehot, axis=0)[:-1].astype(float)
    total = left[-1] + onehot[-1]
    right = total - left
    nl = np.arange(1, m, dtype=float)[:, None]
    nr = m - nl
    gl = 1.0 - np.sum((left / nl[..., None]) ** 2, axis=-1)
    gr = 1.0 - np.sum((right / nr[..., None]) ** 2, axis=-1)
    imp = (nl * gl + nr * gr) / m
    valid = xs[1:] > xs[:-1]
    if min_leaf > 1:
        pos = np.arange(1, m)
        valid &= ((pos >= min_leaf) & (m - pos >= min_leaf))[:, None]
    if not valid.any():
        return None
    imp = np.where(valid, imp, np.inf)
    flat = int(np.argmin(imp))
    i, k = divmod(flat, len(feats))
    return float(imp[i, k]), int(feats[k]), _threshold(xs[i, k], xs[i + 1, k])


def grow_classifier(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    max_depth: int = 10,
    min_samples_split: int = 2,
    min_samples_leaf: int = 1,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
    sample_idx: np.ndarray | None = None,
) -> tuple[Tree, np.ndarray]:
    """Grow a Gini tree on rows ``sample_idx`` (duplicates allowed).

    Returns the tree and the per-feature total impurity decrease, weighted
    by the fraction of the root's samples reaching each split.
    """
    n, p = X.shape
    idx0 = np.arange(n) if sample_idx is None else np.asarray(sample_idx)
    k = p if max_features is None else min(max_features, p)
    rng = rng if rng is not None else np.random.default_rng(0)
    importance = np.zeros(p)
    b = _Builder()
    root_n = idx0.size
    root = b.add(np.bincount(y[idx0], minlength=n_classes), root_n)
    stack = [(root, idx0, 0)]
    while stack:
        node, idx, depth = stack.pop()
        counts = np.bincount(y[idx], minlength=n_classes)
        m = idx.size
        if depth >= max_depth or m < min_samples_split or m < 2 * min_samples_leaf:
            continue
        if np.count_nonzero(counts) <= 1:
            continue
        gini = 1.0 - np.sum((counts / m) ** 2)
        feats = np.sort(rng.choice(p, size=k, replace=False)) if k < p else np.arange(p)
        best = _gini_split(X, y, idx, feats, n_classes, min_samples_leaf)
        if best is None:
            continue
        imp, f, thr = best
        decrease = gini - imp
        if decrease <= 0:
            continue
        importance[f] += (m / root_n) * decrease
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        lnode = b.add(np.bincount(y[li], minlength=n_classes), li.size)
        rnode = b.add(np.bincount(y[ri], minlength=n_classes), ri.size)
        b.split(node, f, thr, lnode, rnode)
        stack.append((rnode, ri, depth + 1))
        stack.append((lnode, li, depth + 1))
    return b.build(), importance


def newton_leaf(G: float, H: float, reg_lambda: float) -> float:
    return -G / (H + reg_lambda)


def grow_newton(
    X: np.ndarray,
    grad: np.ndarray,
    hess: np.ndarray,
    sample_idx: np.ndarray,
    max_depth: int = 6,
    reg_lambda: float = 1.0,
    gamma: float = 0.0,
) -> Tree:
    """Exact greedy second-order regression tree.

    A split is kept only when
    ``0.5 * (GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)) - gamma > 0``;
    leaves carry ``-G/(H+l)``.
    """
    lam = reg_lambda
    p = X.shape[1]
    feats = np.arange(p)
    b = _Builder()
    idx0 = np.asarray(sample_idx)
    root = b.add(newton_leaf(grad[idx0].sum(), hess[idx0].sum(), lam), idx0.size)
    stack = [(root, idx0, 0)]
    while stack:
        node, idx, depth = stack.pop()
        m = idx.size
        if depth >= max_depth or m < 2:
            continue
        xs, order = _sorted_block(X, idx, feats)
        gs = grad[idx][order]
        hs = hess[idx][order]
        GL = np.cumsum(gs, axis=0)[:-1]
        HL = np.cumsum(hs, axis=0)[:-1]
        G = gs.sum(axis=0)
        H = hs.sum(axis=0)
        GR = G - GL
        HR = H - HL
        gain = 0.5 * (GL ** 2 / (HL + lam) + GR ** 2 / (HR + lam) - G ** 2 / (H + lam)) - gamma
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        gain = np.where(valid, gain, -np.inf)
        flat = int(np.argmax(gain))
        i, f = divmod(flat, p)
        if not gain[i, f] > 0:
            continue
        thr = _threshold(xs[i, f], xs[i + 1, f])
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        lnode = b.add(newton_leaf(grad[li].sum(), hess[li].sum(), lam), li.size)
        rnode = b.add(newton_leaf(grad[ri].sum(), hess[ri].sum(), lam), ri.size)
        b.split(node, f, thr, lnode, rnode)
        stack.append((rnode, ri, depth + 1))
        stack.append((lnode, li, depth + 1))
    return b.build()
