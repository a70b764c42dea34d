"""Versioned JSON persistence for trained models."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .forest import ForestModel
from .gbt import GbtModel
from .logistic import LogisticModel
from .voting import VotingEnsemble

FORMAT = "genefuse-model"
VERSION = 1

_KINDS = {"logistic": LogisticModel, "forest": ForestModel, "gbt": GbtModel}


def model_to_dict(model) -> dict:
    if isinstance(model, VotingEnsemble):
        body = {
            "members": [model_to_dict(m) for m in model.members],
            "mode": model.mode,
            "weights": None if model.weights is None else np.asarray(model.weights).tolist(),
        }
        kind = "voting"
    else:
        kind = next(k for k, cls in _KINDS.items() if isinstance(model, cls))
        body = model.to_dict()
    return {"format": FORMAT, "version": VERSION, "kind": kind, "model": body}


def model_from_dict(d: dict):
    if d.get("format") != FORMAT:
        raise ValueError("not a genefuse model document")
    if d.get("version") != VERSION:
        raise ValueError(f"unsupported model version {d.get('version')!r}")
    body = d["model"]
    if d["kind"] == "voting":
        members = tuple(model_from_dict(m) for m in body["members"])
        w = body["weights"]
        return VotingEnsemble(members, body["mode"], None if w is None else np.array(w))
    return _KINDS[d["kind"]].from_dict(body)


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)), encoding="utf-8")


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
