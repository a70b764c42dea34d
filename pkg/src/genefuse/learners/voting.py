"""Hard and accuracy-weighted voting over the three member models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset import Dataset

MEMBER_NAMES = ("gbt", "forest", "logistic")


@dataclass
class VotingEnsemble:
    members: tuple            # (GbtModel, ForestModel, LogisticModel)
    mode: str = "hard"
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in ("hard", "weighted"):
            raise ValueError(f"unknown vote mode {self.mode!r}")
        if len(self.members) != 3:
            raise ValueError("a voting ensemble has exactly three members")
        if self.mode == "weighted":
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (3,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("weighted mode needs three non-negative weights summing to 1")
            self.weights = w

    @property
    def n_classes(self) -> int:
        return self.members[0].n_classes

    def member_classes(self, X) -> np.ndarray:
        for m in self.members:
            if m is None:
                raise ValueError("untrained ensemble member")
        return np.column_stack([m.predict(X) for m in self.members])

    def predict(self, X) -> np.ndarray:
        return combine_votes(self.member_classes(X), self.n_classes, self.mode, self.weights)

    def predict_proba(self, X) -> np.ndarray:
        probs = np.stack([m.predict_proba(X) for m in self.members])
        w = self.weights if self.mode == "weighted" else np.full(3, 1.0 / 3.0)
        return np.tensordot(w, probs, axes=1)


def combine_votes(member_classes: np.ndarray, n_classes: int, mode: str = "hard",
                  weights=None) -> np.ndarray:
    """Combine an (n, 3) array of member classes.

    Hard mode takes the majority; when all three disagree the first member
    (GBT, then RF, then LR) decides. Weighted mode takes the argmax of
    summed weights, ties to the lowest class. Sums within a relative 1e-9
    of the best count as tied so rescaled weights give the same answer.
    """
    mc = np.asarray(member_classes, dtype=np.int64)
    if mode == "hard":
        a, b, c = mc[:, 0], mc[:, 1], mc[:, 2]
        return np.where((b == c) & (a != b), b, a)
    w = np.asarray(weights, dtype=float)
    score = np.zeros((mc.shape[0], n_classes))
    for j in range(mc.shape[1]):
        score[np.arange(mc.shape[0]), mc[:, j]] += w[j]
    best = score.max(axis=1, keepdims=True)
    return np.argmax(score >= best - 1e-9 * np.abs(best), axis=1)


def vote(ensemble: VotingEnsemble, x) -> tuple[np.ndarray, np.ndarray]:
    mc = ensemble.member_classes(x)
    return combine_votes(mc, ensemble.n_classes, ensemble.mode, ensemble.weights), mc


def weights_from_accuracies(acc) -> np.ndarray:
    acc = np.asarray(acc, dtype=float)
    total = acc.sum()
    if total <= 0:
        return np.full(acc.size, 1.0 / acc.size)
    return acc / total


def fit_vote_weights(members, validation: Dataset) -> np.ndarray:
    """Weights proportional to each member's accuracy on ``validation``."""
    if validation.n_samples == 0:
        raise ValueError("empty validation set")
    acc = [np.mean(m.predict(validation.features) == validation.labels) for m in members]
    return weights_from_accuracies(acc)
