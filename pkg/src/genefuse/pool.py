"""Candidate pool: union of the six selectors with per-method provenance."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .filters import METHODS, FilterReport
from .rfe import RfeTrace

METHOD_NAMES = ("MI", "Chi2", "ANOVA", "LASSO", "Variance", "RFE")


class EmptyPoolError(RuntimeError):
    pass


@dataclass
class CandidatePool:
    candidate_indices: np.ndarray   # sorted original feature ids
    membership: np.ndarray          # (6, |pool|) bool
    method_names: tuple[str, ...] = METHOD_NAMES

    def __post_init__(self):
        idx = np.asarray(self.candidate_indices, dtype=np.int64)
        mem = np.asarray(self.membership, dtype=bool)
        if idx.size and np.any(np.diff(idx) <= 0):
            raise ValueError("candidate indices must be strictly increasing")
        if mem.shape != (len(self.method_names), idx.size):
            raise ValueError("membership shape does not match the pool")
        if idx.size and not np.all(mem.any(axis=0)):
            raise ValueError("every candidate needs at least one method vote")
        self.candidate_indices, self.membership = idx, mem

    def __len__(self) -> int:
        return self.candidate_indices.size

    @property
    def votes(self) -> np.ndarray:
        return self.membership.sum(axis=0)

    def to_dict(self) -> dict:
        return {
            "candidate_indices": self.candidate_indices.tolist(),
            "method_names": list(self.method_names),
            "membership": self.membership.astype(int).tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def selection_matrix(filter_masks: dict, rfe_mask: np.ndarray) -> np.ndarray:
    """(6, p) boolean matrix in METHOD_NAMES order."""
    return np.vstack([np.asarray(filter_masks[m], dtype=bool) for m in METHODS]
                     + [np.asarray(rfe_mask, dtype=bool)])


def pool_from_matrix(sel: np.ndarray, mode: str = "union", cap: int | None = 500,
                     tie_scores: np.ndarray | None = None,
                     method_names=METHOD_NAMES) -> CandidatePool:
    sel = np.asarray(sel, dtype=bool)
    votes = sel.sum(axis=0)
    if mode == "union":
        chosen = np.flatnonzero(votes > 0)
    elif mode == "intersection":
        chosen = np.flatnonzero(votes == sel.shape[0])
    elif mode.startswith("min"):
        chosen = np.flatnonzero(votes >= int(mode[3:]))
    else:
        raise ValueError(f"unknown pool mode {mode!r}")
    if chosen.size == 0:
        raise EmptyPoolError("no feature survived any selector; thresholds removed everything")
    if cap is not None and chosen.size > cap:
        ts = np.zeros(sel.shape[1]) if tie_scores is None else np.asarray(tie_scores, float)
        # most votes first, then higher tie score, then lower id
        order = np.lexsort((chosen, -ts[chosen], -votes[chosen]))
        chosen = np.sort(chosen[order[:cap]])
    return CandidatePool(chosen, sel[:, chosen], tuple(method_names))


def build_pool(filter_report: FilterReport, rfe: RfeTrace, rfe_keep: int = 50,
               mode: str = "union", cap: int | None = 500) -> CandidatePool:
    p = filter_report.selected_masks["mi"].size
    if rfe.final_ranking.size != p:
        raise ValueError(f"RFE ranked {rfe.final_ranking.size} features, filters saw {p}")
    rfe_mask = np.zeros(p, dtype=bool)
    rfe_mask[rfe.final_ranking[:rfe_keep]] = True
    sel = selection_matrix(filter_report.selected_masks, rfe_mask)
    return pool_from_matrix(sel, mode, cap, filter_report.method_scores["mi"])
