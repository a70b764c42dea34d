"""Multinomial logistic regression with an L2 penalty on the weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import expit, logsumexp, softmax

from ..dataset import Dataset


@dataclass
class LogisticModel:
    weights: np.ndarray        # (C, p)
    bias: np.ndarray           # (C,)
    l2_strength: float = 1.0
    max_iter: int = 1000
    n_iter: int = 0
    converged: bool = True

    @property
    def n_classes(self) -> int:
        return self.bias.size

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.weights.shape[1]:
            raise ValueError(f"expected {self.weights.shape[1]} features, got {X.shape[1]}")
        return X @ self.weights.T + self.bias

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.decision_function(X), axis=1)

    def predict(self, X) -> np.ndarray:
        P = self.predict_proba(X)
        if self.n_classes == 2:
            # P(y=1|x) >= 0.5 decides class 1
            z = self.decision_function(X)
            return (expit(z[:, 1] - z[:, 0]) >= 0.5).astype(np.int64)
        return np.argmax(P, axis=1)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "l2_strength": self.l2_strength,
            "max_iter": self.max_iter,
            "n_iter": self.n_iter,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticModel":
        return cls(np.array(d["weights"], float), np.array(d["bias"], float), d["l2_strength"],
                   d["max_iter"], d["n_iter"], d["converged"])


def loss_and_grad(theta: np.ndarray, X: np.ndarray, Y: np.ndarray, l2: float):
    """Summed cross-entropy plus ``l2/2 * ||W||^2``; ``theta`` packs [W | b] row-wise.

    ``Y`` is the one-hot target matrix (n, C).
    """
    n, p = X.shape
    C = Y.shape[1]
    Wb = theta.reshape(C, p + 1)
    W, b = Wb[:, :p], Wb[:, p]
    Z = X @ W.T + b
    lse = logsumexp(Z, axis=1)
    loss = float(np.sum(lse - np.sum(Z * Y, axis=1)) + 0.5 * l2 * np.sum(W * W))
    R = np.exp(Z - lse[:, None]) - Y
    grad = np.empty((C, p + 1))
    grad[:, :p] = R.T @ X + l2 * W
    grad[:, p] = R.sum(axis=0)
    return loss, grad.ravel()


def _onehot(y, C):
    return (np.asarray(y)[:, None] == np.arange(C)).astype(float)


def _fit_lbfgs(X, Y, l2, max_iter, gtol):
    C, p = Y.shape[1], X.shape[1]
    res = optimize.minimize(
        loss_and_grad, np.zeros(C * (p + 1)), args=(X, Y, l2), jac=True, method="L-BFGS-B",
        options={"maxiter": max_iter, "gtol": gtol, "ftol": 0.0, "maxcor": 10},
    )
    if not np.isfinite(res.fun):
        raise FloatingPointError("non-finite logistic loss; is the input standardized?")
    Wb = res.x.reshape(C, p + 1)
    g = np.max(np.abs(res.jac)) if res.jac is not None else np.inf
    return Wb[:, :p].copy(), Wb[:, p].copy(), int(res.nit), bool(g < gtol)


def _fit_newton_binary(X, y, l2, max_iter, gtol):
    """Binary reduction of the two-class softmax problem.

    With weights (-d/2, d/2) the softmax penalty ``l2/2 ||W||^2`` equals
    ``l2/4 ||d||^2``, so Newton on (d, c) reaches the same optimum.
    """
    n, p = X.shape
    Xt = np.hstack([X, np.ones((n, 1))])
    reg = np.full(p + 1, l2 / 2.0)
    reg[p] = 0.0
    theta = np.zeros(p + 1)
    t = np.asarray(y, dtype=float)

    def objective(th):
        z = Xt @ th
        return float(np.sum(np.logaddexp(0.0, z) - t * z) + 0.5 * np.sum(reg * th * th))

    f = objective(theta)
    it = 0
    converged = False
    while it < max_iter:
        z = Xt @ theta
        mu = expit(z)
        g = Xt.T @ (mu - t) + reg * theta
        if np.max(np.abs(g)) < gtol:
            converged = True
            break
        s = mu * (1.0 - mu)
        H = (Xt.T * s) @ Xt
        H[np.diag_indices_from(H)] += reg + 1e-12
        step = np.linalg.solve(H, g)
        a = 1.0
        while True:
            cand = theta - a * step
            fc = objective(cand)
            if fc <= f or a < 1e-10:
                break
            a *= 0.5
        theta, f = cand, fc
        it += 1
    d, c = theta[:p], theta[p]
    W = np.vstack([-d / 2.0, d / 2.0])
    b = np.array([-c / 2.0, c / 2.0])
    return W, b, it, converged


def batched_binary_newton(X, t, sw, l2: float, max_iter: int = 100, gtol: float = 1e-6):
    """Solve a stack of two-class problems at once.

    ``X`` is (B, n, k), ``t`` the 0/1 targets (B, n) and ``sw`` per-row
    weights (B, n), zero for padding rows. Returns (B, k + 1) parameters
    ``[d | c]`` of the binary reduction used by :func:`_fit_newton_binary`.
    Each problem's iterates depend only on its own data.
    """
    B, n, k = X.shape
    Xt = np.concatenate([X, np.ones((B, n, 1))], axis=2)
    XtT = Xt.transpose(0, 2, 1)
    reg = np.full(k + 1, l2 / 2.0)
    reg[k] = 0.0
    theta = np.zeros((B, k + 1))

    def objective(th):
        z = (Xt @ th[..., None])[..., 0]
        return np.sum(sw * (np.logaddexp(0.0, z) - t * z), axis=1) + 0.5 * np.sum(reg * th * th, axis=1)

    f = objective(theta)
    active = np.ones(B, dtype=bool)
    for _ in range(max_iter):
        z = (Xt @ theta[..., None])[..., 0]
        mu = expit(z)
        g = (XtT @ (sw * (mu - t))[..., None])[..., 0] + reg * theta
        active &= np.max(np.abs(g), axis=1) >= gtol
        if not active.any():
            break
        s = sw * mu * (1.0 - mu)
        H = (XtT * s[:, None, :]) @ Xt
        H[:, np.arange(k + 1), np.arange(k + 1)] += reg + 1e-12
        step = np.linalg.solve(H, g[..., None])[..., 0]
        step[~active] = 0.0
        a = np.ones(B)
        while True:
            cand = theta - a[:, None] * step
            fc = objective(cand)
            bad = (fc > f) & (a >= 1e-10) & active
            if not bad.any():
                break
            a[bad] *= 0.5
        theta, f = cand, np.where(active, fc, f)
    return theta


def train_logistic(
    train: Dataset | tuple,
    l2: float = 1.0,
    max_iter: int = 1000,
    gtol: float = 1e-6,
    solver: str = "lbfgs",
    n_classes: int | None = None,
) -> LogisticModel:
    """Fit the L2-regularized softmax model.

    ``train`` is a Dataset or an ``(X, y)`` pair. ``solver="newton"`` is a
    faster exact path for two-class problems with few features.
    """
    if isinstance(train, Dataset):
        X, y, C = train.features, train.labels, train.n_classes
    else:
        X, y = train
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=np.int64)
        C = n_classes if n_classes is not None else int(y.max()) + 1
    if not np.all(np.isfinite(X)):
        raise FloatingPointError("non-finite logistic input")
    if solver == "newton" and C == 2:
        W, b, it, ok = _fit_newton_binary(X, y, l2, max_iter, gtol)
    elif solver in ("lbfgs", "newton"):
        W, b, it, ok = _fit_lbfgs(X, _onehot(y, C), l2, max_iter, gtol)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    return LogisticModel(W, b, float(l2), int(max_iter), it, ok)


def predict_logistic(model: LogisticModel, x) -> tuple[np.ndarray, np.ndarray]:
    return model.predict(x), model.predict_proba(x)
