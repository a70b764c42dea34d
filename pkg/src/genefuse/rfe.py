"""Recursive feature elimination driven by random-forest Gini importances."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .learners.forest import ForestConfig, train_forest


@dataclass(frozen=True)
class RfeConfig:
    iterations: int = 10
    target_count: int = 50
    estimator: ForestConfig = ForestConfig()
    step: int | None = None     # fixed removals per round instead of the landing schedule
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.target_count < 1:
            raise ValueError("target_count must be >= 1")
        if self.step is not None and self.step < 1:
            raise ValueError("step must be >= 1")


@dataclass
class RfeRound:
    survivors: np.ndarray     # original feature ids trained on this round
    importances: np.ndarray   # aligned with survivors
    eliminated: np.ndarray


@dataclass
class RfeTrace:
    rounds: list[RfeRound]
    final_ranking: np.ndarray  # original ids, most important first
    n_features: int = field(default=0)

    def top(self, k: int) -> np.ndarray:
        return np.sort(self.final_ranking[:k])

    def rank_of(self) -> np.ndarray:
        r = np.empty(self.final_ranking.size, dtype=np.int64)
        r[self.final_ranking] = np.arange(self.final_ranking.size)
        return r

    def to_dict(self) -> dict:
        return {
            "rounds": [
                {"survivors": r.survivors.tolist(), "importances": r.importances.tolist(),
                 "eliminated": r.eliminated.tolist()}
                for r in self.rounds
            ],
            "final_ranking": self.final_ranking.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def removal_schedule(p: int, target: int, iterations: int, step: int | None = None) -> list[int]:
    """Features removed per round; sums to ``p - target``.

    Default: ``ceil((current - target) / rounds_left)`` each round, which
    lands on ``target`` by the last round. Rounds that would remove nothing
    are dropped.
    """
    out, cur = [], p
    if step is not None:
        while cur > target:
            k = min(step, cur - target)
            out.append(k)
            cur -= k
        return out
    for r in range(iterations):
        k = math.ceil((cur - target) / (iterations - r))
        if k <= 0:
            break
        out.append(k)
        cur -= k
    return out


def rfe_select(train: Dataset, config: RfeConfig = RfeConfig(), workers: int = 1) -> RfeTrace:
    p = train.n_features
    target = config.target_count
    if target > p:
        raise ValueError(f"target_count={target} exceeds the {p} available features")
    if train.n_samples < max(2, config.estimator.min_samples_split):
        raise ValueError("dataset too small to train the forest estimator")
    schedule = removal_schedule(p, target, config.iterations, config.step) or [0]
    survivors = np.arange(p)
    eliminated_order: list[np.ndarray] = []
    rounds: list[RfeRound] = []
    for r, k in enumerate(schedule):
        est = ForestConfig(**{**config.estimator.__dict__, "seed": config.seed + r})
        model = train_forest(train.subset_columns(survivors), est, workers)
        imp = model.importances
        # ascending importance, ties: lower feature id goes first
        order = np.lexsort((survivors, imp))
        drop = survivors[order[:k]]
        rounds.append(RfeRound(survivors.copy(), imp.copy(), drop))
        eliminated_order.append(drop)
        keep = np.sort(survivors[order[k:]])
        last_imp = dict(zip(survivors.tolist(), imp.tolist()))
        survivors = keep
    surv_imp = np.array([last_imp[s] for s in survivors])
    best_first = survivors[np.lexsort((survivors, surv_imp))][::-1]
    # later eliminations rank better; within a round higher importance first
    gone = [blk[::-1] for blk in reversed(eliminated_order)]
    ranking = np.concatenate([best_first] + gone).astype(np.int64)
    return RfeTrace(rounds, ranking, p)
