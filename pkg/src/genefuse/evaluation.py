"""Confusion matrices, macro metrics, ROC/AUC and the repeated-run protocol."""

from __future__ import annotations

import csv
import io
import json
import os
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import rankdata

from .dataset import Dataset, FoldPlan

METRIC_NAMES = ("accuracy", "precision", "recall", "f1", "auc")
REPORT_SCHEMA = "genefuse-report"
REPORT_VERSION = 1


@dataclass
class ConfusionMatrix:
    counts: np.ndarray   # rows = true class, columns = predicted class

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]


@dataclass
class MetricSet:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float | None = None
    wall_time: float = 0.0
    undefined_classes: list[int] = field(default_factory=list)

    def values(self) -> dict[str, float | None]:
        return {m: getattr(self, m) for m in METRIC_NAMES}


def confusion(true, predicted, n_classes: int) -> ConfusionMatrix:
    t = np.asarray(true, dtype=np.int64)
    p = np.asarray(predicted, dtype=np.int64)
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.size} vs {p.size}")
    if t.size and (max(t.max(), p.max()) >= n_classes or min(t.min(), p.min()) < 0):
        raise ValueError(f"label outside [0, {n_classes})")
    counts = np.bincount(t * n_classes + p, minlength=n_classes * n_classes)
    return ConfusionMatrix(counts.reshape(n_classes, n_classes))


def metrics(cm: ConfusionMatrix, average: str = "macro") -> MetricSet:
    """Accuracy plus macro (or support-weighted) precision, recall and F1.

    A 0/0 precision or recall counts as 0; the affected classes are listed
    in ``undefined_classes``.
    """
    M = np.asarray(cm.counts, dtype=float)
    total = M.sum()
    if total <= 0:
        raise ValueError("empty confusion matrix")
    tp = np.diag(M)
    pred = M.sum(axis=0)
    support = M.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        prec = np.where(pred > 0, tp / pred, 0.0)
        rec = np.where(support > 0, tp / support, 0.0)
        f1 = np.where(prec + rec > 0, 2 * prec * rec / (prec + rec), 0.0)
    undefined = sorted(set(np.flatnonzero(pred == 0).tolist()) | set(np.flatnonzero(support == 0).tolist()))
    if undefined:
        warnings.warn(f"precision/recall undefined (0/0) for classes {undefined}; counted as 0",
                      RuntimeWarning, stacklevel=2)
    if average == "macro":
        w = np.full(M.shape[0], 1.0 / M.shape[0])
    elif average == "weighted":
        w = support / total
    else:
        raise ValueError(f"unknown averaging {average!r}")
    return MetricSet(
        accuracy=float(tp.sum() / total),
        precision=float(w @ prec),
        recall=float(w @ rec),
        f1=float(w @ f1),
        undefined_classes=undefined,
    )


def binary_auc(positive, scores) -> float:
    """Mann-Whitney AUC with midranks for ties."""
    pos = np.asarray(positive, dtype=bool)
    s = np.asarray(scores, dtype=float)
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both positive and negative samples")
    ranks = rankdata(s, method="average")
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_auc(true, scores) -> float:
    """Macro one-vs-rest AUC over the classes present in ``true``.

    ``scores`` is (n, C) class probabilities, or a length-n vector of
    class-1 scores for binary problems.
    """
    t = np.asarray(true, dtype=np.int64)
    S = np.asarray(scores, dtype=float)
    if S.ndim == 1:
        S = np.column_stack([1.0 - S, S])
    present = np.unique(t)
    if present.size < 2:
        raise ValueError("AUC is undefined when the truth holds a single class")
    return float(np.mean([binary_auc(t == c, S[:, c]) for c in present]))


def roc_points(true, scores, cls: int) -> np.ndarray:
    """(fpr, tpr) pairs, one per distinct threshold, starting at (0, 0)."""
    t = np.asarray(true) == cls
    s = np.asarray(scores, dtype=float)[:, cls]
    order = np.argsort(-s, kind="stable")
    s, t = s[order], t[order]
    cut = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tps = np.cumsum(t)[cut]
    fps = (cut + 1) - tps
    P, N = max(t.sum(), 1), max((~t).sum(), 1)
    return np.vstack([np.r_[0.0, fps / N], np.r_[0.0, tps / P]]).T


def evaluate_predictions(true, predicted, proba, n_classes: int, average: str = "macro",
                         wall_time: float = 0.0) -> MetricSet:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        m = metrics(confusion(true, predicted, n_classes), average)
    try:
        m.auc = roc_auc(true, proba)
    except ValueError:
        m.auc = None
    m.wall_time = wall_time
    return m


# -------------------------------------------------------- run protocol

def environment() -> dict:
    from .parallel import available_cores
    try:
        mem = os.sysconf("SC_PAGE_SIZE") * os.sysconf("SC_PHYS_PAGES")
    except (ValueError, OSError, AttributeError):  # pragma: no cover
        mem = None
    return {"logical_cores": os.cpu_count(), "usable_cores": available_cores(), "memory_bytes": mem}


def _mean_std(values: list[float | None]) -> tuple[float | None, float | None]:
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    a = np.array(vals, dtype=float)
    std = float(a.std(ddof=1)) if a.size > 1 else 0.0
    return float(a.mean()), std


@dataclass
class RunReport:
    per_run: list[MetricSet]
    mean: dict[str, float | None]
    std: dict[str, float | None]
    fingerprint: str
    seeds: list[int]
    environment: dict = field(default_factory=dict)
    dataset: str = ""
    protocol: str = "split"
    extras: list[dict] = field(default_factory=list)
    stage_times: list[dict] = field(default_factory=list)
    results: list = field(default_factory=list, repr=False)

    @classmethod
    def from_runs(cls, runs: list[MetricSet], **kw) -> "RunReport":
        mean, std = {}, {}
        for m in METRIC_NAMES:
            mean[m], std[m] = _mean_std([getattr(r, m) for r in runs])
        return cls(runs, mean, std, **kw)

    def total_wall_time(self) -> float:
        return float(sum(r.wall_time for r in self.per_run))

    def to_dict(self) -> dict:
        """Deterministic content only: no timings, no host details."""
        return {
            "schema": REPORT_SCHEMA,
            "version": REPORT_VERSION,
            "dataset": self.dataset,
            "protocol": self.protocol,
            "fingerprint": self.fingerprint,
            "seeds": list(self.seeds),
            "runs": [
                {**{m: r.values()[m] for m in METRIC_NAMES}, "undefined_classes": r.undefined_classes,
                 **(self.extras[i] if i < len(self.extras) else {})}
                for i, r in enumerate(self.per_run)
            ],
            "mean": dict(self.mean),
            "std": dict(self.std),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        """Run table with metrics in percent, then ``Avg`` and ``Std`` rows."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["Run"] + list(METRIC_NAMES))

        def fmt(v):
            return "" if v is None else f"{100.0 * v:.2f}"

        for i, r in enumerate(self.per_run, start=1):
            w.writerow([i] + [fmt(getattr(r, m)) for m in METRIC_NAMES])
        w.writerow(["Avg"] + [fmt(self.mean[m]) for m in METRIC_NAMES])
        w.writerow(["Std"] + [fmt(self.std[m]) for m in METRIC_NAMES])
        return buf.getvalue()


def validate_report(d: dict) -> dict:
    if d.get("schema") != REPORT_SCHEMA:
        raise ValueError("not a genefuse run report")
    if d.get("version") != REPORT_VERSION:
        raise ValueError(f"unsupported report version {d.get('version')!r}")
    for key in ("runs", "mean", "std", "fingerprint"):
        if key not in d:
            raise ValueError(f"report missing {key!r}")
    for m in METRIC_NAMES:
        mean, std = _mean_std([r[m] for r in d["runs"]])
        if (mean is None) != (d["mean"][m] is None):
            raise ValueError(f"stored mean for {m} is inconsistent")
        if mean is not None and (abs(mean - d["mean"][m]) > 1e-12 or abs(std - d["std"][m]) > 1e-12):
            raise ValueError(f"stored mean/std for {m} do not match the runs")
    return d


# ----------------------------------------------------------- protocols

@dataclass
class CvResult:
    per_fold: list[MetricSet]
    aggregate: dict[str, float | None]
    fold_sizes: list[int]


def _as_fitter(pipeline, workers, selection=None):
    """Normalize to ``fit(train) -> model`` with predict/predict_proba on raw features."""
    if callable(pipeline) and not hasattr(pipeline, "pso"):
        return pipeline
    from .pipeline import fit_pipeline
    return lambda train: fit_pipeline(train, pipeline, workers=workers, selection=selection)


def cross_validate(data: Dataset, pipeline, folds: FoldPlan, workers: int = 1,
                   average: str = "macro", selection=None) -> CvResult:
    """Fit on each training fold, score the held-out fold.

    ``pipeline`` is a PipelineConfig or any callable mapping a training
    Dataset to a fitted model; either way the held-out rows are never seen
    during fitting. Passing a precomputed ``selection`` (global selection)
    is the one deliberate exception.
    """
    fit = _as_fitter(pipeline, workers, selection)
    C = data.n_classes
    out = []
    for f in range(folds.k):
        tr, te = folds.train_indices(f), folds.test_indices(f)
        train = data.subset_rows(tr)
        missing = np.flatnonzero(train.class_counts() == 0)
        if missing.size:
            raise ValueError(f"fold {f}: class {int(missing[0])} absent from the training folds")
        t0 = time.perf_counter()
        model = fit(train)
        Xte = data.features[te]
        pred = model.predict(Xte)
        proba = model.predict_proba(Xte)
        out.append(evaluate_predictions(data.labels[te], pred, proba, C, average,
                                        time.perf_counter() - t0))
    agg = {m: _mean_std([getattr(r, m) for r in out])[0] for m in METRIC_NAMES}
    return CvResult(out, agg, folds.fold_sizes().tolist())


def repeated_runs(data: Dataset, config, runs: int = 10, base_seed: int = 0, workers: int = 1,
                  protocol: str = "split", folds: int = 10, dataset_name: str = "",
                  progress: Callable[[int, MetricSet], None] | None = None) -> RunReport:
    """Run ``runs`` seeded repetitions (seed ``base_seed + r``).

    ``protocol="split"`` evaluates a stratified train/test split per run;
    ``protocol="cv"`` reports the mean over a ``folds``-fold plan per run.
    """
    from .dataset import make_folds
    from .pipeline import config_fingerprint, run_pipeline, select_features, with_seed
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if protocol not in ("split", "cv"):
        raise ValueError(f"unknown protocol {protocol!r}")
    selection = None
    if getattr(config, "global_selection", False):
        # laxer protocol: one selection on all rows, reused by every run
        selection = select_features(data, with_seed(config, base_seed), workers)
    per_run, extras, seeds, times, results = [], [], [], [], []
    for r in range(runs):
        seed = base_seed + r
        cfg = with_seed(config, seed)
        t0 = time.perf_counter()
        if protocol == "split":
            res = run_pipeline(data, cfg, workers=workers, selection=selection)
            m = res.ensemble_metrics
            extras.append({
                "selected": res.selected_indices.tolist(),
                "pool_size": len(res.pool),
                "members": {k: v.accuracy for k, v in res.member_metrics.items()},
            })
            times.append(dict(res.stage_times))
            results.append(res)
        else:
            cv = cross_validate(data, cfg, make_folds(data, folds, seed), workers, selection=selection)
            a = cv.aggregate
            m = MetricSet(a["accuracy"], a["precision"], a["recall"], a["f1"], a["auc"])
            extras.append({"fold_accuracy": [f.accuracy for f in cv.per_fold]})
            times.append({"folds": [f.wall_time for f in cv.per_fold]})
        m.wall_time = time.perf_counter() - t0
        per_run.append(m)
        seeds.append(seed)
        if progress is not None:
            progress(r, m)
    env = {**environment(), "workers": workers}
    return RunReport.from_runs(per_run, fingerprint=config_fingerprint(config), seeds=seeds,
                               environment=env, dataset=dataset_name, protocol=protocol,
                               extras=extras, stage_times=times, results=results)


def metricset_dict(m: MetricSet) -> dict:
    return asdict(m)
