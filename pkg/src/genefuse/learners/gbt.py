"""Second-order (Newton) gradient boosting on logistic loss, one-vs-rest."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..dataset import Dataset
from ..trees import Tree, grow_newton


@dataclass(frozen=True)
class GbtConfig:
    n_rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int = 6
    subsample: float = 0.8
    gamma: float = 0.3
    reg_lambda: float = 1.0
    seed: int = 0


@dataclass
class GbtModel:
    """Per-class tree sequences.

    For two classes a single sequence models class 1 and class 0 gets the
    negated score, which is what a mirrored one-vs-rest pair produces.
    """

    sequences: list[list[Tree]]
    modelled_classes: list[int]
    base_score: np.ndarray          # log-odds prior per modelled class
    learning_rate: float
    n_classes: int
    n_features: int
    loss_history: list[float] = field(default_factory=list)

    def class_scores(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        S = np.empty((X.shape[0], len(self.sequences)))
        for k, seq in enumerate(self.sequences):
            s = np.full(X.shape[0], self.base_score[k])
            for t in seq:
                s += self.learning_rate * t.value[t.apply(X)]
            S[:, k] = s
        if self.n_classes == 2:
            return np.column_stack([-S[:, 0], S[:, 0]])
        return S

    def predict_proba(self, X) -> np.ndarray:
        # normalized one-vs-rest sigmoids: zero trees reproduce the class priors
        P = expit(self.class_scores(X))
        return P / P.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def to_dict(self) -> dict:
        return {
            "sequences": [[t.to_dict() for t in seq] for seq in self.sequences],
            "modelled_classes": list(self.modelled_classes),
            "base_score": self.base_score.tolist(),
            "learning_rate": self.learning_rate,
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "loss_history": list(self.loss_history),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbtModel":
        return cls([[Tree.from_dict(t) for t in seq] for seq in d["sequences"]],
                   list(d["modelled_classes"]), np.array(d["base_score"], float),
                   d["learning_rate"], d["n_classes"], d["n_features"], list(d["loss_history"]))


def logistic_loss(target: np.ndarray, score: np.ndarray) -> float:
    return float(np.sum(np.logaddexp(0.0, score) - target * score))


def train_gbt(train: Dataset, cfg: GbtConfig = GbtConfig()) -> GbtModel:
    X, y, C = train.features, train.labels, train.n_classes
    n = X.shape[0]
    counts = np.bincount(y, minlength=C)
    if np.any(counts == 0):
        raise ValueError(f"class {int(np.flatnonzero(counts == 0)[0])} has no training samples")
    classes = [1] if C == 2 else list(range(C))
    targets = [(y == c).astype(float) for c in classes]
    prior = np.array([t.mean() for t in targets])
    base = np.log(prior / (1.0 - prior))
    scores = [np.full(n, b) for b in base]
    rng = np.random.default_rng(cfg.seed)
    m = max(1, int(round(cfg.subsample * n)))
    seqs: list[list[Tree]] = [[] for _ in classes]
    history = [sum(logistic_loss(t, s) for t, s in zip(targets, scores))]
    for _ in range(cfg.n_rounds):
        for k, t in enumerate(targets):
            prob = expit(scores[k])
            g = prob - t
            h = prob * (1.0 - prob)
            rows = np.arange(n) if m >= n else np.sort(rng.choice(n, size=m, replace=False))
            tree = grow_newton(X, g, h, rows, cfg.max_depth, cfg.reg_lambda, cfg.gamma)
            scores[k] = scores[k] + cfg.learning_rate * tree.value[tree.apply(X)]
            seqs[k].append(tree)
        history.append(sum(logistic_loss(t, s) for t, s in zip(targets, scores)))
    return GbtModel(seqs, classes, base, cfg.learning_rate, C, X.shape[1], history)


def predict_gbt(model: GbtModel, x) -> tuple[np.ndarray, np.ndarray]:
    return model.predict(x), model.predict_proba(x)
