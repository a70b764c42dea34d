"""Bootstrap random forest of Gini trees with majority-vote prediction."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..dataset import Dataset
from ..parallel import pmap
from ..trees import Tree, grow_classifier


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 10
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: str | int | None = "sqrt"
    bootstrap: bool = True
    seed: int = 0

    def n_split_features(self, p: int) -> int:
        if self.max_features == "sqrt":
            return max(1, math.ceil(math.sqrt(p)))
        if self.max_features is None:
            return p
        return max(1, min(int(self.max_features), p))


@dataclass
class ForestModel:
    trees: list[Tree]
    tree_seeds: list[int]
    feature_subsample: int
    n_classes: int
    n_features: int
    importances: np.ndarray = field(repr=False)

    def tree_votes(self, X) -> np.ndarray:
        """(n, M) class chosen by each tree (leaf majority, ties to lowest class)."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        out = np.empty((X.shape[0], len(self.trees)), dtype=np.int64)
        for m, t in enumerate(self.trees):
            out[:, m] = np.argmax(t.value[t.apply(X)], axis=1)
        return out

    def predict_proba(self, X) -> np.ndarray:
        votes = self.tree_votes(X)
        counts = np.stack([np.sum(votes == c, axis=1) for c in range(self.n_classes)], axis=1)
        return counts / len(self.trees)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def to_dict(self) -> dict:
        return {
            "trees": [t.to_dict() for t in self.trees],
            "tree_seeds": list(self.tree_seeds),
            "feature_subsample": self.feature_subsample,
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "importances": self.importances.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        return cls([Tree.from_dict(t) for t in d["trees"]], list(d["tree_seeds"]),
                   d["feature_subsample"], d["n_classes"], d["n_features"],
                   np.array(d["importances"], float))


def tree_seeds(seed: int, n_trees: int) -> list[int]:
    children = np.random.SeedSequence(seed).spawn(n_trees)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def _grow_one(args):
    X, y, C, cfg, k, s = args
    rng = np.random.default_rng(s)
    n = X.shape[0]
    idx = rng.integers(0, n, size=n) if cfg.bootstrap else np.arange(n)
    return grow_classifier(X, y, C, cfg.max_depth, cfg.min_samples_split, cfg.min_samples_leaf,
                           k, rng, idx)


def _grow_chunk(args):
    X, y, C, cfg, k, seeds = args
    return [_grow_one((X, y, C, cfg, k, s)) for s in seeds]


def train_forest(train: Dataset, cfg: ForestConfig = ForestConfig(), workers: int = 1) -> ForestModel:
    X, y, C = train.features, train.labels, train.n_classes
    n, p = X.shape
    if n == 0:
        raise ValueError("empty dataset")
    if n < cfg.min_samples_split:
        raise ValueError(f"need at least min_samples_split={cfg.min_samples_split} samples")
    k = cfg.n_split_features(p)
    seeds = tree_seeds(cfg.seed, cfg.n_trees)
    if workers > 1:
        order = [list(range(i, len(seeds), workers)) for i in range(workers)]
        grown = pmap(_grow_chunk, [(X, y, C, cfg, k, [seeds[i] for i in ch]) for ch in order], workers)
        results = [None] * len(seeds)
        for ch, res in zip(order, grown):
            for i, r in zip(ch, res):
                results[i] = r
    else:
        results = [_grow_one((X, y, C, cfg, k, s)) for s in seeds]
    trees = [r[0] for r in results]
    imp = np.sum([r[1] for r in results], axis=0)
    total = imp.sum()
    imp = imp / total if total > 0 else imp
    return ForestModel(trees, seeds, k, C, p, imp)


def predict_forest(model: ForestModel, x) -> tuple[np.ndarray, np.ndarray]:
    return model.predict(x), model.predict_proba(x)


def forest_config_dict(cfg: ForestConfig) -> dict:
    return asdict(cfg)
