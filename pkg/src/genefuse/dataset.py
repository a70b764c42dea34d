"""Dataset container, loaders, standardization, splitting and synthetic data."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed input files or datasets violating their invariants."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]
    class_names: tuple[str, ...]

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels)
        if X.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {X.shape}")
        n, p = X.shape
        if y.shape != (n,):
            raise DataError(f"{n} rows but {y.shape[0] if y.ndim else 0} labels")
        if p < 1:
            raise DataError("dataset needs at least one feature")
        if n < 2:
            raise DataError(f"dataset needs n >= 2 samples, got {n}")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain NaN or Inf")
        if y.size and (not np.issubdtype(y.dtype, np.integer)):
            if not np.all(y == np.round(y)):
                raise DataError("labels must be integer class ids")
        y = y.astype(np.int64)
        C = len(self.class_names)
        if y.min() < 0 or y.max() >= C:
            raise DataError(f"labels must lie in [0, {C})")
        if len(self.feature_names) != p:
            raise DataError(f"{p} feature columns but {len(self.feature_names)} names")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "labels", _frozen(y))
        object.__setattr__(self, "feature_names", tuple(str(s) for s in self.feature_names))
        object.__setattr__(self, "class_names", tuple(str(s) for s in self.class_names))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def subset_rows(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.features[rows], self.labels[rows], self.feature_names, self.class_names)

    def subset_columns(self, cols) -> "Dataset":
        cols = np.asarray(cols, dtype=np.int64)
        return Dataset(
            self.features[:, cols],
            self.labels,
            tuple(self.feature_names[c] for c in cols),
            self.class_names,
        )

    def with_features(self, X: np.ndarray) -> "Dataset":
        return Dataset(X, self.labels, self.feature_names, self.class_names)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


@dataclass(frozen=True)
class StandardizationParams:
    means: np.ndarray
    std_devs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "means", _frozen(np.asarray(self.means, dtype=float)))
        object.__setattr__(self, "std_devs", _frozen(np.asarray(self.std_devs, dtype=float)))
        if self.means.shape != self.std_devs.shape:
            raise ValueError("means and std_devs differ in length")
        if np.any(self.std_devs < 0):
            raise ValueError("negative standard deviation")


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "assignments", _frozen(np.asarray(self.assignments, dtype=np.int64)))

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def fold_sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)


# ---------------------------------------------------------------- loaders

_NUMERIC_TYPES = {"numeric", "real", "integer"}


def _strip_quotes(s: str) -> str:
    s = s.strip()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "'\"":
        return s[1:-1]
    return s


def _split_attribute(rest: str) -> tuple[str, str]:
    rest = rest.strip()
    if rest[:1] in "'\"":
        q = rest[0]
        end = rest.find(q, 1)
        if end < 0:
            raise DataError(f"unterminated quoted attribute name: {rest!r}")
        return rest[1:end], rest[end + 1:].strip()
    parts = rest.split(None, 1)
    if len(parts) != 2:
        raise DataError(f"attribute declaration without a type: {rest!r}")
    return parts[0], parts[1].strip()


def load_arff(path) -> Dataset:
    """Read a dense ARFF file whose last attribute is the nominal class.

    Numeric attributes (``numeric``/``real``/``integer``) become features;
    class values are encoded in declaration order. Missing values (``?``)
    are rejected.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    names: list[str] = []
    types: list[object] = []
    rows: list[list[float]] = []
    labels: list[int] = []
    in_data = False
    with path.open("r", encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("%"):
                continue
            if not in_data:
                low = line.lower()
                if low.startswith("@relation"):
                    continue
                if low.startswith("@attribute"):
                    name, typ = _split_attribute(line[len("@attribute"):])
                    if typ.startswith("{"):
                        if not typ.endswith("}"):
                            raise DataError(f"line {lineno}: unterminated nominal value list")
                        values = [_strip_quotes(v) for v in typ[1:-1].split(",")]
                        if not values or any(v == "" for v in values):
                            raise DataError(f"line {lineno}: empty nominal value")
                        types.append(values)
                    elif typ.lower() in _NUMERIC_TYPES:
                        types.append("numeric")
                    else:
                        raise DataError(f"line {lineno}: unknown attribute type {typ!r}")
                    names.append(name)
                    continue
                if low.startswith("@data"):
                    if not types:
                        raise DataError("no attributes declared before @data")
                    nominal = [i for i, t in enumerate(types) if t != "numeric"]
                    if nominal != [len(types) - 1]:
                        raise DataError("exactly one nominal attribute (the class) must be declared last")
                    if len(types) < 2:
                        raise DataError("need at least one numeric attribute besides the class")
                    in_data = True
                    continue
                raise DataError(f"line {lineno}: unexpected header line {line!r}")
            if line.startswith("{"):
                raise DataError(f"line {lineno}: sparse ARFF rows are not supported")
            cells = [c.strip() for c in line.split(",")]
            if len(cells) != len(types):
                raise DataError(
                    f"line {lineno}: row has {len(cells)} values but {len(types)} attributes are declared"
                )
            if "?" in cells:
                raise DataError(f"line {lineno}: missing value '?' (impute before loading)")
            try:
                rows.append([float(c) for c in cells[:-1]])
            except ValueError as exc:
                raise DataError(f"line {lineno}: {exc}") from None
            classes = types[-1]
            label = _strip_quotes(cells[-1])
            if label not in classes:
                raise DataError(f"line {lineno}: class value {label!r} not declared")
            labels.append(classes.index(label))
    if not in_data:
        raise DataError("missing @data section")
    if not rows:
        raise DataError("no data rows")
    return Dataset(np.array(rows, dtype=float), np.array(labels), names[:-1], types[-1])


def load_csv(path, label_column: str | int = -1) -> Dataset:
    """Read a header-first CSV; the label column is encoded by first appearance."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        body = [r for r in reader if r]
    if isinstance(label_column, str) and not re.fullmatch(r"-?\d+", label_column):
        if label_column not in header:
            raise DataError(f"label column {label_column!r} not in header")
        li = header.index(label_column)
    else:
        li = int(label_column)
        if not -len(header) <= li < len(header):
            raise DataError(f"label column index {li} out of range")
        li %= len(header)
    feat_cols = [j for j in range(len(header)) if j != li]
    X = np.empty((len(body), len(feat_cols)))
    classes: dict[str, int] = {}
    y = np.empty(len(body), dtype=np.int64)
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise DataError(f"row {i + 1}: {len(row)} cells but header has {len(header)}")
        for k, j in enumerate(feat_cols):
            try:
                X[i, k] = float(row[j])
            except ValueError:
                raise DataError(
                    f"row {i + 1}, column {header[j]!r}: non-numeric value {row[j]!r}"
                ) from None
        y[i] = classes.setdefault(row[li], len(classes))
    return Dataset(X, y, [header[j] for j in feat_cols], list(classes))


def write_csv(data: Dataset, path, label_column: str = "class") -> None:
    """Write ``data`` in the schema :func:`load_csv` reads (label column last)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(data.feature_names) + [label_column])
        for row, lab in zip(data.features, data.labels):
            w.writerow([repr(float(v)) for v in row] + [data.class_names[lab]])


# ---------------------------------------------------------- standardizing

def fit_standardizer(train: Dataset) -> StandardizationParams:
    X = train.features
    mu = X.mean(axis=0)
    sd = np.sqrt(((X - mu) ** 2).mean(axis=0))
    # exact constancy check so float noise in the mean cannot fake a spread
    sd[np.ptp(X, axis=0) == 0] = 0.0
    return StandardizationParams(mu, sd)


def standardize_array(X: np.ndarray, params: StandardizationParams) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != params.means.shape[0]:
        raise ValueError(f"expected {params.means.shape[0]} features, got {X.shape[-1]}")
    live = params.std_devs > 0
    out = np.zeros_like(X)
    out[..., live] = (X[..., live] - params.means[live]) / params.std_devs[live]
    return out


def apply_standardizer(data: Dataset, params: StandardizationParams) -> Dataset:
    return data.with_features(standardize_array(data.features, params))


# -------------------------------------------------------------- splitting

def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split(data: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    train_idx, test_idx = split_indices(data.labels, spec, data.n_classes)
    return data.subset_rows(train_idx), data.subset_rows(test_idx)


def split_indices(labels: np.ndarray, spec: SplitSpec, n_classes: int | None = None):
    """Row indices (train, test), each sorted ascending."""
    y = np.asarray(labels)
    n = y.size
    rng = np.random.default_rng(spec.seed)
    n_train = min(max(_round_half_up(spec.train_fraction * n), 1), n - 1)
    if not spec.stratified:
        perm = rng.permutation(n)
        return np.sort(perm[:n_train]), np.sort(perm[n_train:])
    C = n_classes if n_classes is not None else int(y.max()) + 1
    members = [np.flatnonzero(y == c) for c in range(C)]
    counts = np.array([m.size for m in members])
    present = counts > 0
    if np.any(counts[present] < 2):
        bad = int(np.flatnonzero(present & (counts < 2))[0])
        raise DataError(f"class {bad} has a single member; stratified split impossible")
    take = np.array([_round_half_up(spec.train_fraction * c) for c in counts])
    take = np.where(present, np.clip(take, 1, counts - 1), 0)
    largest = int(np.argmax(counts))
    take[largest] += n_train - take.sum()
    if not 1 <= take[largest] <= counts[largest] - 1:
        raise DataError("cannot reach the requested train size with a stratified split")
    train, test = [], []
    for c in range(C):
        perm = rng.permutation(members[c])
        train.append(perm[: take[c]])
        test.append(perm[take[c]:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def make_folds(data: Dataset, k: int, seed: int) -> FoldPlan:
    return make_fold_plan(data.labels, k, seed, data.n_classes)


def make_fold_plan(labels: np.ndarray, k: int, seed: int, n_classes: int | None = None) -> FoldPlan:
    """Stratified k-fold assignment.

    Samples are ordered by class (shuffled within class) and dealt
    round-robin, so fold sizes and per-class fold counts each differ by at
    most one.
    """
    y = np.asarray(labels)
    n = y.size
    if k < 2:
        raise DataError(f"k must be >= 2, got {k}")
    if k > n:
        raise DataError(f"k={k} exceeds the number of samples {n}")
    C = n_classes if n_classes is not None else int(y.max()) + 1
    counts = np.bincount(y, minlength=C)
    small = np.flatnonzero((counts > 0) & (counts < k))
    if small.size:
        raise DataError(f"class {int(small[0])} has {counts[small[0]]} members, fewer than k={k}")
    rng = np.random.default_rng(seed)
    order = np.concatenate([rng.permutation(np.flatnonzero(y == c)) for c in range(C)])
    assign = np.empty(n, dtype=np.int64)
    assign[order] = np.arange(n) % k
    return FoldPlan(k, assign)


# -------------------------------------------------------------- synthesis

def synthesize(
    n: int,
    p: int,
    informative: int,
    n_classes: int = 2,
    seed: int = 0,
    separation: float = 2.0,
) -> tuple[Dataset, np.ndarray]:
    """Gaussian gene-expression stand-in with a known informative set.

    Each informative feature gets class means on a grid spaced
    ``separation`` noise standard deviations apart (grid order shuffled per
    feature); every other feature is unit Gaussian noise. Classes are
    balanced up to one sample.
    """
    if n_classes < 2:
        raise ValueError("need at least two classes")
    if not 0 <= informative <= p:
        raise ValueError(f"informative must be in [0, p], got {informative}")
    if p < 1 or n < 2 * n_classes:
        raise ValueError("need p >= 1 and at least two samples per class")
    if separation < 0:
        raise ValueError("separation must be non-negative")
    rng = np.random.default_rng(seed)
    y = rng.permutation(np.arange(n) % n_classes)
    X = rng.standard_normal((n, p))
    truth = np.sort(rng.choice(p, size=informative, replace=False))
    grid = separation * (np.arange(n_classes) - (n_classes - 1) / 2.0)
    for j in truth:
        X[:, j] += rng.permutation(grid)[y]
    width = len(str(p - 1))
    names = [f"g{j:0{width}d}" for j in range(p)]
    classes = [f"class{c}" for c in range(n_classes)]
    return Dataset(X, y, names, classes), truth


def write_truth(truth: Sequence[int], path) -> None:
    Path(path).write_text("".join(f"{int(i)}\n" for i in truth), encoding="utf-8")


def read_truth(path) -> np.ndarray:
    lines = Path(path).read_text(encoding="utf-8").split()
    return np.array([int(s) for s in lines], dtype=np.int64)
