"""Two-stage flow: filters + RFE -> candidate pool -> swarm search -> voting ensemble."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
import time
import warnings
import zlib
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import (Dataset, SplitSpec, StandardizationParams, fit_standardizer,
                      split_indices, standardize_array)
from .evaluation import MetricSet, evaluate_predictions
from .filters import FilterReport, FilterThresholds, run_filters
from .learners import (ForestConfig, GbtConfig, VotingEnsemble, fit_vote_weights, train_forest,
                       train_gbt, train_logistic)
from .pool import CandidatePool, EmptyPoolError, build_pool
from .pso import PsoConfig, PsoResult, SubsetFitness, optimize
from .rfe import RfeConfig, RfeTrace, rfe_select

MEMBER_LABELS = ("Gradient Boosting", "Random Forest", "Logistic Regression")
ENSEMBLE_LABEL = "Voting Classifier"


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class PipelineConfig:
    thresholds: FilterThresholds = FilterThresholds()
    bins: int = 10
    rfe: RfeConfig = RfeConfig()
    rfe_keep: int = 50
    pool_mode: str = "union"
    pool_cap: int | None = 60
    pso: PsoConfig = PsoConfig()
    fitness_folds: int = 5
    fitness_metric: str = "margin"
    fitness_evaluator: str = "logistic"
    logistic_l2: float = 1.0
    logistic_max_iter: int = 1000
    forest: ForestConfig = ForestConfig()
    gbt: GbtConfig = GbtConfig()
    vote: str = "hard"
    weight_holdout: float = 0.2
    train_fraction: float = 0.8
    stratified: bool = True
    seed: int = 0
    global_selection: bool = False

    def __post_init__(self):
        if self.vote not in ("hard", "weighted"):
            raise ValueError(f"vote must be 'hard' or 'weighted', got {self.vote!r}")
        if self.fitness_metric not in ("margin", "probability", "accuracy"):
            raise ValueError(f"unknown fitness metric {self.fitness_metric!r}")
        if self.fitness_evaluator not in ("logistic", "ensemble"):
            raise ValueError(f"unknown fitness evaluator {self.fitness_evaluator!r}")
        if self.fitness_folds < 2:
            raise ValueError("fitness_folds must be >= 2")
        if self.bins < 2:
            raise ValueError("bins must be >= 2")
        if self.rfe_keep < 1:
            raise ValueError("rfe_keep must be >= 1")
        if self.pool_cap is not None and self.pool_cap < 1:
            raise ValueError("pool_cap must be >= 1 or null")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if not 0.0 < self.weight_holdout < 1.0:
            raise ValueError("weight_holdout must lie in (0, 1)")
        if self.logistic_l2 < 0:
            raise ValueError("logistic_l2 must be >= 0")


# ------------------------------------------------------- config handling

def _coerce(template, value):
    """Convert a plain value to the type of the matching default."""
    if dataclasses.is_dataclass(template):
        if not isinstance(value, dict):
            raise ValueError(f"expected a table for {type(template).__name__}")
        return _from_dict(type(template), value, template)
    if isinstance(template, bool):
        if not isinstance(value, bool):
            raise ValueError(f"expected a boolean, got {value!r}")
        return value
    if isinstance(template, float) and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    return value


def _from_dict(cls, d: dict, base=None):
    base = cls() if base is None else base
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kw = {k: _coerce(getattr(base, k), v) for k, v in d.items()}
    return replace(base, **kw)


def config_from_dict(d: dict, base: PipelineConfig | None = None) -> PipelineConfig:
    return _from_dict(PipelineConfig, d, base)


def config_to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def load_config(path) -> PipelineConfig:
    """Read a JSON or TOML config; missing keys keep their defaults."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".toml":
        if sys.version_info >= (3, 11):
            import tomllib
        else:
            import tomli as tomllib
        d = tomllib.loads(text)
    else:
        d = json.loads(text)
    return config_from_dict(d)


def override(cfg: PipelineConfig, dotted: str, value) -> PipelineConfig:
    """Return ``cfg`` with ``a.b.c = value`` applied (value coerced by type)."""
    head, _, rest = dotted.partition(".")
    if head not in {f.name for f in dataclasses.fields(cfg)}:
        raise ValueError(f"unknown config key {dotted!r}")
    cur = getattr(cfg, head)
    new = override(cur, rest, value) if rest else _parse_like(cur, value)
    return replace(cfg, **{head: new})


def _parse_like(template, value):
    if not isinstance(value, str):
        return _coerce(template, value)
    if template is None:
        return None if value.lower() in ("none", "null") else json.loads(value)
    if isinstance(template, bool):
        low = value.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"expected a boolean, got {value!r}")
        return low in ("true", "1", "yes")
    if value.lower() in ("none", "null"):
        return None
    if isinstance(template, int):
        return int(value)
    if isinstance(template, float):
        return float(value)
    return value


def config_fingerprint(cfg: PipelineConfig) -> str:
    """SHA-256 of the canonical JSON form; equal configs hash equally."""
    canon = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def with_seed(cfg: PipelineConfig, seed: int) -> PipelineConfig:
    return replace(cfg, seed=int(seed))


def stage_seed(seed: int, stage: str, extra: int = 0) -> int:
    """Independent integer seed for one stage, derived from the pipeline seed."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(stage.encode()), int(extra)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


# -------------------------------------------------------------- results

@dataclass
class Selection:
    filter_report: FilterReport
    rfe_trace: RfeTrace
    pool: CandidatePool
    pso_result: PsoResult | None
    selected: np.ndarray            # original feature ids, ascending
    stage_times: dict = field(default_factory=dict)


@dataclass
class FittedPipeline:
    standardizer: StandardizationParams
    selection: Selection
    ensemble: VotingEnsemble
    feature_names: tuple[str, ...] = ()

    def transform(self, X) -> np.ndarray:
        return standardize_array(np.asarray(X, dtype=float), self.standardizer)[:, self.selection.selected]

    def predict(self, X) -> np.ndarray:
        return self.ensemble.predict(self.transform(X))

    def predict_proba(self, X) -> np.ndarray:
        return self.ensemble.predict_proba(self.transform(X))

    @property
    def selected_names(self) -> list[str]:
        return [self.feature_names[i] for i in self.selection.selected]


@dataclass
class PipelineResult:
    pool: CandidatePool
    selected_indices: np.ndarray
    selected_names: list[str]
    member_metrics: dict[str, MetricSet]
    ensemble_metrics: MetricSet
    stage_times: dict[str, float]
    train_indices: np.ndarray
    test_indices: np.ndarray
    pso_history: list[float] = field(default_factory=list)
    fitted: FittedPipeline | None = field(default=None, repr=False)

    def to_dict(self, include_timing: bool = False) -> dict:
        def ms(m: MetricSet) -> dict:
            return {"accuracy": m.accuracy, "precision": m.precision, "recall": m.recall,
                    "f1": m.f1, "auc": m.auc}

        d = {
            "pool": self.pool.to_dict(),
            "selected_indices": self.selected_indices.tolist(),
            "selected_names": list(self.selected_names),
            "member_metrics": {k: ms(v) for k, v in self.member_metrics.items()},
            "ensemble_metrics": ms(self.ensemble_metrics),
            "train_indices": self.train_indices.tolist(),
            "test_indices": self.test_indices.tolist(),
            "pso_history": list(self.pso_history),
        }
        if include_timing:
            d["stage_times"] = dict(self.stage_times)
        return d

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), sort_keys=True)


@contextmanager
def _stage(name: str, times: dict):
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, f"{type(exc).__name__}: {exc}") from exc
    finally:
        times[name] = time.perf_counter() - t0


# --------------------------------------------------------------- stages

def select_features(train_raw: Dataset, cfg: PipelineConfig = PipelineConfig(),
                    workers: int = 1) -> Selection:
    """Filters, RFE, pool and swarm search on the training rows only."""
    times: dict[str, float] = {}
    p = train_raw.n_features
    with _stage("filters", times):
        report = run_filters(train_raw, cfg.thresholds, cfg.bins)
    with _stage("standardize", times):
        std = fit_standardizer(train_raw)
        Z = train_raw.with_features(standardize_array(train_raw.features, std))
    with _stage("rfe", times):
        rcfg = replace(cfg.rfe, target_count=min(cfg.rfe.target_count, p),
                       seed=stage_seed(cfg.seed, "rfe", cfg.rfe.seed))
        trace = rfe_select(Z, rcfg, workers=workers)
    with _stage("pool", times):
        try:
            pool = build_pool(report, trace, min(cfg.rfe_keep, p), cfg.pool_mode, cfg.pool_cap)
        except EmptyPoolError as exc:
            raise StageError("pool", str(exc)) from exc
    ids = pool.candidate_indices
    result = None
    with _stage("pso", times):
        if cfg.pso.enabled:
            fitness = SubsetFitness(
                Z.features[:, ids], Z.labels, Z.n_classes, folds=cfg.fitness_folds,
                seed=stage_seed(cfg.seed, "fitness"), size_penalty=cfg.pso.size_penalty,
                l2=cfg.logistic_l2, max_iter=cfg.logistic_max_iter,
                evaluator=cfg.fitness_evaluator, metric=cfg.fitness_metric,
                ensemble_params=cfg,
            )
            pcfg = replace(cfg.pso, seed=stage_seed(cfg.seed, "pso", cfg.pso.seed))
            result = optimize(len(ids), fitness, pcfg, workers=workers)
            mask = result.best_mask
            if not mask.any():
                raise StageError("pso", "swarm returned an empty feature mask")
            selected = ids[mask]
        else:
            selected = ids.copy()
    return Selection(report, trace, pool, result, np.asarray(selected, dtype=np.int64), times)


def train_ensemble(train: Dataset, cfg: PipelineConfig | None = None, seed: int | None = None,
                   workers: int = 1) -> VotingEnsemble:
    """Fit GBT, forest and logistic members on already-prepared features.

    Weighted mode estimates member accuracies on a stratified holdout of
    ``train``, then refits every member on all of ``train``.
    """
    cfg = PipelineConfig() if cfg is None else cfg
    seed = cfg.seed if seed is None else seed

    def fit_members(ds: Dataset):
        gbt = train_gbt(ds, replace(cfg.gbt, seed=stage_seed(seed, "gbt", cfg.gbt.seed)))
        forest = train_forest(ds, replace(cfg.forest, seed=stage_seed(seed, "forest", cfg.forest.seed)),
                              workers=workers)
        lr = train_logistic(ds, cfg.logistic_l2, cfg.logistic_max_iter, n_classes=ds.n_classes)
        return gbt, forest, lr

    members = fit_members(train)
    if cfg.vote == "hard":
        return VotingEnsemble(members, "hard")
    counts = train.class_counts()
    if np.any(counts < 2):
        warnings.warn("a class has fewer than two samples; using uniform vote weights",
                      RuntimeWarning, stacklevel=2)
        return VotingEnsemble(members, "weighted", np.full(3, 1.0 / 3.0))
    fit_idx, hold_idx = split_indices(
        train.labels, SplitSpec(1.0 - cfg.weight_holdout, stage_seed(seed, "holdout")), train.n_classes)
    fit_part = train.subset_rows(fit_idx)
    if np.any(fit_part.class_counts() == 0):
        weights = np.full(3, 1.0 / 3.0)
    else:
        weights = fit_vote_weights(fit_members(fit_part), train.subset_rows(hold_idx))
    return VotingEnsemble(members, "weighted", weights)


def fit_pipeline(train_raw: Dataset, cfg: PipelineConfig = PipelineConfig(), workers: int = 1,
                 selection: Selection | None = None) -> FittedPipeline:
    """Fit every stage on ``train_raw``. A precomputed ``selection`` skips stage one."""
    if selection is None:
        selection = select_features(train_raw, cfg, workers)
    times = selection.stage_times
    with _stage("ensemble", times):
        std = fit_standardizer(train_raw)
        Z = standardize_array(train_raw.features, std)[:, selection.selected]
        ds = Dataset(Z, train_raw.labels, [train_raw.feature_names[i] for i in selection.selected],
                     train_raw.class_names)
        ensemble = train_ensemble(ds, cfg, workers=workers)
    return FittedPipeline(std, selection, ensemble, tuple(train_raw.feature_names))


def run_pipeline(data: Dataset, cfg: PipelineConfig = PipelineConfig(), workers: int = 1,
                 selection: Selection | None = None) -> PipelineResult:
    """Split, fit on the training rows, then score the untouched test rows once."""
    times: dict[str, float] = {}
    with _stage("split", times):
        tr, te = split_indices(data.labels, SplitSpec(cfg.train_fraction, stage_seed(cfg.seed, "split"),
                                                      cfg.stratified), data.n_classes)
    train = data.subset_rows(tr)
    fitted = fit_pipeline(train, cfg, workers, selection)
    times.update(fitted.selection.stage_times)
    t0 = time.perf_counter()
    test = data.subset_rows(te)
    Xte = fitted.transform(test.features)
    C = data.n_classes
    members = {}
    for label, model in zip(MEMBER_LABELS, fitted.ensemble.members):
        members[label] = evaluate_predictions(test.labels, model.predict(Xte), model.predict_proba(Xte), C)
    ens = evaluate_predictions(test.labels, fitted.ensemble.predict(Xte),
                               fitted.ensemble.predict_proba(Xte), C)
    times["evaluate"] = time.perf_counter() - t0
    sel = fitted.selection
    history = sel.pso_result.history if sel.pso_result is not None else []
    return PipelineResult(sel.pool, sel.selected, fitted.selected_names, members, ens, times,
                          tr, te, list(history), fitted)


# ------------------------------------------------------- member table

@dataclass
class MemberTable:
    rows: tuple[str, ...]
    columns: list[str]
    values: np.ndarray          # (4, datasets) mean test accuracy
    per_seed: dict[str, np.ndarray] = field(default_factory=dict)   # dataset -> (runs, 4)

    def to_csv(self) -> str:
        lines = ["Model," + ",".join(self.columns)]
        for i, r in enumerate(self.rows):
            lines.append(r + "," + ",".join(f"{100.0 * v:.2f}" for v in self.values[i]))
        return "\n".join(lines) + "\n"


def compare_members(data, cfg: PipelineConfig = PipelineConfig(), runs: int = 1,
                    base_seed: int | None = None, workers: int = 1) -> MemberTable:
    """Accuracy of each member and of the vote on identical splits and features.

    ``data`` is one Dataset or a mapping name -> Dataset.
    """
    datasets = data if isinstance(data, dict) else {"data": data}
    base = cfg.seed if base_seed is None else base_seed
    rows = MEMBER_LABELS + (ENSEMBLE_LABEL,)
    values = np.zeros((4, len(datasets)))
    per_seed = {}
    for j, (name, ds) in enumerate(datasets.items()):
        acc = np.zeros((runs, 4))
        for r in range(runs):
            res = run_pipeline(ds, with_seed(cfg, base + r), workers)
            acc[r, :3] = [res.member_metrics[m].accuracy for m in MEMBER_LABELS]
            acc[r, 3] = res.ensemble_metrics.accuracy
        per_seed[name] = acc
        values[:, j] = acc.mean(axis=0)
    return MemberTable(rows, list(datasets), values, per_seed)
