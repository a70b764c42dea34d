"""Univariate filter scores (MI, chi-square, ANOVA F, variance) and the LASSO screen."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from .dataset import Dataset, fit_standardizer, standardize_array

METHODS = ("mi", "chi2", "anova", "lasso", "variance")


# ------------------------------------------------------------ discretizing

def discretize(column, bins: int = 10) -> np.ndarray:
    """Equal-width bin ids over ``[min, max]``; the max lands in the top bin."""
    return discretize_matrix(np.asarray(column, dtype=float)[:, None], bins)[:, 0]


def discretize_matrix(X: np.ndarray, bins: int = 10) -> np.ndarray:
    if bins < 2:
        raise ValueError("bins must be >= 2")
    X = np.asarray(X, dtype=float)
    lo = X.min(axis=0)
    width = (X.max(axis=0) - lo) / bins
    safe = np.where(width > 0, width, 1.0)
    ids = np.floor((X - lo) / safe).astype(np.int64)
    ids[:, width == 0] = 0
    return np.clip(ids, 0, bins - 1)


# -------------------------------------------------------- contingency data

@dataclass
class ContingencyTable:
    observed: np.ndarray
    expected: np.ndarray = field(init=False)
    joint: np.ndarray = field(init=False)
    px: np.ndarray = field(init=False)
    py: np.ndarray = field(init=False)

    def __post_init__(self):
        O = np.asarray(self.observed, dtype=float)
        self.observed = O
        N = O.sum()
        self.expected = np.outer(O.sum(axis=1), O.sum(axis=0)) / N
        self.joint = O / N
        self.px = self.joint.sum(axis=1)
        self.py = self.joint.sum(axis=0)


def counts_table(x_bins, y, n_bins: int | None = None, n_classes: int | None = None) -> np.ndarray:
    x = np.asarray(x_bins, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if x.size == 0:
        raise ValueError("need at least one sample")
    B = n_bins if n_bins is not None else int(x.max()) + 1
    C = n_classes if n_classes is not None else int(y.max()) + 1
    return np.bincount(x * C + y, minlength=B * C).reshape(B, C).astype(float)


def batch_counts(bins: np.ndarray, y: np.ndarray, n_bins: int, n_classes: int) -> np.ndarray:
    """Per-feature contingency counts, shape (p, B, C)."""
    n, p = bins.shape
    flat = (np.arange(p)[None, :] * n_bins + bins) * n_classes + np.asarray(y)[:, None]
    return np.bincount(flat.ravel(), minlength=p * n_bins * n_classes).reshape(
        p, n_bins, n_classes).astype(float)


def mi_from_counts(counts: np.ndarray) -> np.ndarray:
    """Mutual information in nats of the contingency table(s) along the last two axes."""
    O = np.asarray(counts, dtype=float)
    N = O.sum(axis=(-2, -1), keepdims=True)
    pxy = O / N
    px = pxy.sum(axis=-1, keepdims=True)
    py = pxy.sum(axis=-2, keepdims=True)
    denom = px * py
    pos = pxy > 0
    terms = np.zeros_like(pxy)
    terms[pos] = pxy[pos] * np.log(pxy[pos] / np.broadcast_to(denom, pxy.shape)[pos])
    mi = terms.sum(axis=(-2, -1))
    return np.maximum(mi, 0.0)


def chi2_from_counts(counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pearson statistic and degrees of freedom of the table(s) along the last two axes.

    Cells with zero expected count are skipped; the degrees of freedom use the
    non-empty rows and columns only.
    """
    O = np.asarray(counts, dtype=float)
    N = O.sum(axis=(-2, -1), keepdims=True)
    rows = O.sum(axis=-1, keepdims=True)
    cols = O.sum(axis=-2, keepdims=True)
    E = rows * cols / N
    live = E > 0
    terms = np.zeros_like(O)
    terms[live] = (O[live] - E[live]) ** 2 / E[live]
    stat = terms.sum(axis=(-2, -1))
    df = ((rows[..., 0] > 0).sum(axis=-1) - 1) * ((cols[..., 0, :] > 0).sum(axis=-1) - 1)
    return stat, df


def chi2_pvalue(stat, df) -> np.ndarray:
    """Upper-tail probability Q(df/2, stat/2); df == 0 gives 1."""
    stat = np.asarray(stat, dtype=float)
    df = np.asarray(df)
    out = np.ones(np.broadcast(stat, df).shape)
    ok = np.broadcast_to(df > 0, out.shape)
    s = np.broadcast_to(stat, out.shape)
    d = np.broadcast_to(df, out.shape)
    out[ok] = special.gammaincc(d[ok] / 2.0, s[ok] / 2.0)
    return out


def mutual_information(x_bins, y) -> float:
    return float(mi_from_counts(counts_table(x_bins, y)))


def chi_square(x_bins, y) -> float:
    return float(chi2_from_counts(counts_table(x_bins, y))[0])


# ------------------------------------------------------------------- ANOVA

@dataclass
class AnovaDecomposition:
    group_means: np.ndarray
    group_sizes: np.ndarray
    overall_mean: float
    k: int
    N: int
    between_ss: float
    within_ss: float

    @property
    def total_ss(self) -> float:
        return self.between_ss + self.within_ss

    @property
    def f(self) -> float:
        return float(_f_ratio(np.array([self.between_ss]), np.array([self.within_ss]),
                              np.array([self.between_ss + self.within_ss]), self.k, self.N)[0])


def anova_decompose(column, y) -> AnovaDecomposition:
    x = np.asarray(column, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if x.shape != y.shape:
        raise ValueError("length mismatch")
    groups, inv = np.unique(y, return_inverse=True)
    k, N = groups.size, x.size
    if k < 2:
        raise ValueError("ANOVA needs at least two groups")
    if N <= k:
        raise ValueError(f"ANOVA needs N > k (N={N}, k={k})")
    sizes = np.bincount(inv)
    means = np.bincount(inv, weights=x) / sizes
    grand = x.mean()
    between = float(np.sum(sizes * (means - grand) ** 2))
    within = float(np.sum((x - means[inv]) ** 2))
    return AnovaDecomposition(means, sizes, float(grand), int(k), int(N), between, within)


def _f_ratio(between, within, total, k, N, scale=None):
    tiny = 1e-13 * (scale if scale is not None else np.maximum(total, 1e-300))
    F = np.zeros_like(between)
    flat = total <= tiny
    degenerate = ~flat & (within <= tiny)
    ok = ~flat & ~degenerate
    F[degenerate] = np.inf
    F[ok] = (between[ok] / (k - 1)) / (within[ok] / (N - k))
    return F


def anova_f(column, y) -> float:
    """One-way ANOVA F; +inf when groups are internally constant but differ."""
    x = np.asarray(column, dtype=float)
    return float(anova_f_matrix(x[:, None], y)[0])


def anova_f_matrix(X: np.ndarray, y) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    groups, inv = np.unique(y, return_inverse=True)
    k, N = groups.size, X.shape[0]
    if k < 2:
        raise ValueError("ANOVA needs at least two groups")
    if N <= k:
        raise ValueError(f"ANOVA needs N > k (N={N}, k={k})")
    onehot = np.eye(k)[inv]
    sizes = onehot.sum(axis=0)
    means = (onehot.T @ X) / sizes[:, None]
    grand = X.mean(axis=0)
    between = (sizes[:, None] * (means - grand) ** 2).sum(axis=0)
    within = ((X - means[inv]) ** 2).sum(axis=0)
    scale = (X ** 2).sum(axis=0) + 1e-300
    return _f_ratio(between, within, between + within, k, N, scale)


# ------------------------------------------------------------------ variance

def variance_scores(data) -> np.ndarray:
    """Population variance of each feature (Dataset or raw matrix)."""
    X = data.features if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    mu = X.mean(axis=0)
    return ((X - mu) ** 2).mean(axis=0)


# --------------------------------------------------------------------- LASSO

@dataclass
class LassoModel:
    coefficients: np.ndarray   # (C, p)
    intercepts: np.ndarray     # (C,)
    lam: float
    iterations_used: int

    def nonzero_mask(self) -> np.ndarray:
        return np.any(self.coefficients != 0, axis=0)


def soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def lambda_max(X: np.ndarray, y: np.ndarray) -> float:
    Xc = X - X.mean(axis=0)
    return float(np.max(np.abs(Xc.T @ (y - y.mean()))) / X.shape[0])


def lasso_cd(X, y, lam: float, max_sweeps: int = 1000, tol: float = 1e-6):
    """Cyclic coordinate descent for ``(1/2n)||y - b - X beta||^2 + lam ||beta||_1``.

    The intercept is unpenalized (handled by centering). After each full
    sweep the solver cycles over the active set until it settles, then
    re-checks with a full sweep. Returns ``(beta, intercept, sweeps)``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite input to LASSO")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    n, p = X.shape
    xm = X.mean(axis=0)
    ym = y.mean()
    Xc = X - xm
    r = y - ym
    sq = (Xc ** 2).sum(axis=0) / n
    beta = np.zeros(p)
    live = np.flatnonzero(sq > 0)
    cols = [Xc[:, j] for j in range(p)]
    sweeps = 0

    def sweep(idx):
        nonlocal r
        delta = 0.0
        for j in idx:
            xj = cols[j]
            old = beta[j]
            z = xj @ r / n + sq[j] * old
            new = soft_threshold(z, lam) / sq[j]
            if new != old:
                r = r - (new - old) * xj
                beta[j] = new
                delta = max(delta, abs(new - old))
        return delta

    while sweeps < max_sweeps:
        sweeps += 1
        if sweep(live) < tol:
            break
        while sweeps < max_sweeps:
            active = live[beta[live] != 0]
            sweeps += 1
            if sweep(active) < tol:
                break
    return beta, float(ym - xm @ beta), sweeps


def lasso_fit(train: Dataset, lam: float = 0.01, max_sweeps: int = 1000, tol: float = 1e-6) -> LassoModel:
    """One-vs-rest squared-loss LASSO, one 0/1 target per class."""
    X = train.features
    C = train.n_classes
    coefs = np.zeros((C, X.shape[1]))
    inter = np.zeros(C)
    used = 0
    targets = range(C) if C > 2 else [1]
    for c in targets:
        b, b0, s = lasso_cd(X, (train.labels == c).astype(float), lam, max_sweeps, tol)
        coefs[c], inter[c] = b, b0
        used = max(used, s)
    if C == 2:
        # the class-0 target is 1 - y1: coefficients mirror exactly
        coefs[0], inter[0] = -coefs[1], 1.0 - inter[1]
    return LassoModel(coefs, inter, float(lam), used)


# ----------------------------------------------------------------- combined

@dataclass(frozen=True)
class FilterThresholds:
    mi: float = 0.05
    chi2: float = 0.01
    anova_f: float = 5.0
    lasso_lambda: float = 0.01
    variance: float = 0.001
    chi2_mode: str = "pvalue"   # or "statistic"

    def __post_init__(self):
        for name in ("mi", "chi2", "anova_f", "lasso_lambda", "variance"):
            if getattr(self, name) < 0:
                raise ValueError(f"threshold {name} must be >= 0")
        if self.chi2_mode not in ("pvalue", "statistic"):
            raise ValueError(f"unknown chi2_mode {self.chi2_mode!r}")


@dataclass
class FilterReport:
    method_scores: dict[str, np.ndarray]
    selected_masks: dict[str, np.ndarray]
    thresholds: FilterThresholds
    bins_used: int
    chi2_pvalues: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "bins": self.bins_used,
            "thresholds": asdict(self.thresholds),
            "scores": {m: _json_floats(self.method_scores[m]) for m in METHODS},
            "masks": {m: self.selected_masks[m].astype(int).tolist() for m in METHODS},
            "chi2_pvalues": None if self.chi2_pvalues is None else _json_floats(self.chi2_pvalues),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _json_floats(a) -> list:
    return [x if np.isfinite(x) else ("inf" if x > 0 else "-inf") for x in np.asarray(a, float).tolist()]


def run_filters(
    train: Dataset,
    thresholds: FilterThresholds = FilterThresholds(),
    bins: int = 10,
    lasso_sweeps: int = 1000,
    lasso_tol: float = 1e-6,
) -> FilterReport:
    """Score every feature of the raw training split with the five filters.

    MI and chi-square are computed on equal-width bins of the raw values, the
    variance filter on raw values, and ANOVA/LASSO on the standardized matrix
    (standardizer fitted on ``train`` itself).
    """
    th = thresholds
    X = train.features
    y = train.labels
    C = train.n_classes
    binned = discretize_matrix(X, bins)
    counts = batch_counts(binned, y, bins, C)
    mi = mi_from_counts(counts)
    chi2, df = chi2_from_counts(counts)
    pvals = chi2_pvalue(chi2, df)
    Z = standardize_array(X, fit_standardizer(train))
    anova = anova_f_matrix(Z, y)
    lasso = lasso_fit(train.with_features(Z), th.lasso_lambda, lasso_sweeps, lasso_tol)
    lasso_score = np.abs(lasso.coefficients).max(axis=0)
    var = variance_scores(X)
    scores = {"mi": mi, "chi2": chi2, "anova": anova, "lasso": lasso_score, "variance": var}
    masks = {
        "mi": mi > th.mi,
        "chi2": (pvals < th.chi2) if th.chi2_mode == "pvalue" else (chi2 > th.chi2),
        "anova": anova > th.anova_f,
        "lasso": lasso_score != 0,
        "variance": var > th.variance,
    }
    return FilterReport(scores, masks, th, bins, pvals)
