"""Binary particle swarm search over subsets of the candidate pool."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from .dataset import make_fold_plan
from .parallel import WorkerPool


class FitnessError(RuntimeError):
    pass


@dataclass(frozen=True)
class PsoConfig:
    swarm_size: int = 100
    inertia: float = 0.6
    c1: float = 1.8
    c2: float = 2.5
    max_iter: int = 150
    v_min: float = -5.0
    v_max: float = 5.0
    seed: int = 0
    size_penalty: float = 0.01
    patience: int | None = None     # early stop after this many flat iterations
    enabled: bool = True

    def __post_init__(self):
        if self.swarm_size < 2:
            raise ValueError("swarm_size must be >= 2")
        if not self.v_min < self.v_max:
            raise ValueError("v_min must be below v_max")
        if not 0.0 <= self.inertia <= 1.0:
            raise ValueError("inertia must lie in [0, 1]")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")
        if self.size_penalty < 0:
            raise ValueError("size_penalty must be >= 0")


@dataclass
class Particle:
    position: np.ndarray        # uint8 bits
    velocity: np.ndarray
    best_position: np.ndarray
    best_fitness: float
    rng: np.random.Generator = field(repr=False)


@dataclass
class FitnessSpec:
    evaluator: Callable[[np.ndarray], float]
    description: str = ""


@dataclass
class PsoResult:
    best_mask: np.ndarray
    best_fitness: float
    history: list[float]
    evaluations: int
    unique_evaluations: int
    iterations: int

    def to_dict(self) -> dict:
        return {
            "best_mask": self.best_mask.astype(int).tolist(),
            "best_fitness": self.best_fitness,
            "history": list(self.history),
            "evaluations": self.evaluations,
            "unique_evaluations": self.unique_evaluations,
            "iterations": self.iterations,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def update_velocity(particle: Particle, global_best: np.ndarray, cfg: PsoConfig, r1, r2) -> np.ndarray:
    X = particle.position.astype(float)
    v = (cfg.inertia * particle.velocity
         + cfg.c1 * r1 * (particle.best_position - X)
         + cfg.c2 * r2 * (global_best - X))
    return np.clip(v, cfg.v_min, cfg.v_max)


def update_position(particle: Particle, rng: np.random.Generator | None = None) -> np.ndarray:
    """Sample each bit as 1 with probability sigmoid(velocity)."""
    rng = particle.rng if rng is None else rng
    u = rng.random(particle.velocity.shape)
    return (u < expit(particle.velocity)).astype(np.uint8)


def particle_streams(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


_WORKER_FITNESS = None


def _install(fn):
    global _WORKER_FITNESS
    _WORKER_FITNESS = fn


def _worker_eval(mask):
    return float(_WORKER_FITNESS(mask))


def optimize(pool_dim: int, fitness, cfg: PsoConfig = PsoConfig(), workers: int = 1) -> PsoResult:
    """Run the swarm and return the global best subset.

    Velocities and positions of all particles are updated against the
    global best from the previous iteration; fitness values are then folded
    into personal and global bests in particle order. Empty subsets score
    -inf. Fitness values are memoized per distinct mask, so ``fitness``
    must be a pure function of the mask.
    """
    if pool_dim < 1:
        raise ValueError("pool_dim must be >= 1")
    fn = fitness.evaluator if isinstance(fitness, FitnessSpec) else fitness
    cache: dict[bytes, float] = {}
    counter = {"calls": 0}

    with WorkerPool(workers, _install, (fn,)) as pool:

        def evaluate(masks, iteration):
            keys = [np.packbits(m).tobytes() for m in masks]
            todo, seen = [], set()
            for k, m in zip(keys, masks):
                if k not in cache and k not in seen and m.any():
                    seen.add(k)
                    todo.append((k, m))
            try:
                vals = pool.map(_worker_eval, [m for _, m in todo],
                                chunksize=max(1, len(todo) // (4 * max(workers, 1))))
            except Exception as exc:
                raise FitnessError(f"fitness evaluation failed at iteration {iteration}: {exc}") from exc
            for (k, m), v in zip(todo, vals):
                if np.isnan(v):
                    i = next(j for j, kk in enumerate(keys) if kk == k)
                    raise FitnessError(f"fitness returned NaN at iteration {iteration}, particle {i}")
                cache[k] = v
            counter["calls"] += len(masks)
            return np.array([cache[k] if m.any() else -np.inf for k, m in zip(keys, masks)])

        rngs = particle_streams(cfg.seed, cfg.swarm_size)
        swarm = []
        for r in rngs:
            pos = (r.random(pool_dim) < 0.5).astype(np.uint8)
            vel = r.uniform(cfg.v_min, cfg.v_max, pool_dim)
            swarm.append(Particle(pos, vel, pos.copy(), -np.inf, r))
        fit = evaluate([p.position for p in swarm], 0)
        for p, f in zip(swarm, fit):
            p.best_fitness = float(f)
        g_idx = int(np.argmax([p.best_fitness for p in swarm]))
        G = swarm[g_idx].best_position.copy()
        g_fit = swarm[g_idx].best_fitness
        history = [g_fit]
        flat = 0
        it = 0
        for it in range(1, cfg.max_iter + 1):
            Gf = G.astype(float)
            for p in swarm:
                r1 = p.rng.random(pool_dim)
                r2 = p.rng.random(pool_dim)
                p.velocity = update_velocity(p, Gf, cfg, r1, r2)
                p.position = update_position(p)
            fit = evaluate([p.position for p in swarm], it)
            improved = False
            for p, f in zip(swarm, fit):
                if f > p.best_fitness:
                    p.best_fitness = float(f)
                    p.best_position = p.position.copy()
                if p.best_fitness > g_fit:
                    g_fit = p.best_fitness
                    G = p.best_position.copy()
                    improved = True
            history.append(g_fit)
            flat = 0 if improved else flat + 1
            if cfg.patience is not None and flat >= cfg.patience:
                break
    return PsoResult(G.astype(bool), float(g_fit), history, counter["calls"], len(cache), it)


# ------------------------------------------------------------------ fitness

METRICS = ("margin", "probability", "accuracy")
_LOGIT_CLIP = 1e-15


def _true_class_score(p_true: np.ndarray, metric: str) -> np.ndarray:
    if metric == "probability":
        return p_true
    p = np.clip(p_true, _LOGIT_CLIP, 1.0 - _LOGIT_CLIP)
    return np.log(p) - np.log1p(-p)


class SubsetFitness:
    """Internal stratified k-fold score of a fast evaluator minus a size penalty.

    ``fitness(mask) = mean_fold_score - size_penalty * popcount / dim``.
    The fold score over held-out rows is one of

    * ``"margin"``: mean log-odds of the true-class probability (for binary
      logistic this is the signed decision value),
    * ``"probability"``: mean probability of the true class,
    * ``"accuracy"``: fraction classified correctly.

    Fold assignment is fixed at construction, so the value is a pure
    function of the mask.
    """

    def __init__(self, X, y, n_classes: int, folds: int = 5, seed: int = 0,
                 size_penalty: float = 0.01, l2: float = 1.0, max_iter: int = 1000,
                 evaluator: str = "logistic", metric: str = "margin",
                 ensemble_params=None):
        self.X = np.ascontiguousarray(X, dtype=float)
        self.y = np.asarray(y, dtype=np.int64)
        self.n_classes = n_classes
        self.dim = self.X.shape[1]
        self.size_penalty = size_penalty
        self.l2 = l2
        self.max_iter = max_iter
        if evaluator not in ("logistic", "ensemble"):
            raise ValueError(f"unknown evaluator {evaluator!r}")
        if metric not in METRICS:
            raise ValueError(f"unknown fitness metric {metric!r}")
        self.evaluator = evaluator
        self.metric = metric
        self.ensemble_params = ensemble_params
        counts = np.bincount(self.y, minlength=n_classes)
        k = min(folds, int(counts[counts > 0].min()))
        if k < 2:
            raise FitnessError("a class has fewer than two training samples; cannot form folds")
        plan = make_fold_plan(self.y, k, seed, n_classes)
        self.folds = [(plan.train_indices(f), plan.test_indices(f)) for f in range(k)]
        self._batched = evaluator == "logistic" and n_classes == 2
        if self._batched:
            self._pack()

    def _pack(self):
        def stack(parts):
            m = max(len(r) for r in parts)
            Xs = np.zeros((len(parts), m, self.dim))
            ts = np.zeros((len(parts), m))
            ws = np.zeros((len(parts), m))
            for b, rows in enumerate(parts):
                Xs[b, : len(rows)] = self.X[rows]
                ts[b, : len(rows)] = self.y[rows]
                ws[b, : len(rows)] = 1.0
            return Xs, ts, ws
        self._tr = stack([tr for tr, _ in self.folds])
        self._te = stack([te for _, te in self.folds])

    def _fold_scores_batched(self, cols) -> np.ndarray:
        from .learners.logistic import batched_binary_newton
        Xtr, ttr, wtr = self._tr
        Xte, tte, wte = self._te
        theta = batched_binary_newton(Xtr[:, :, cols], ttr, wtr, self.l2, self.max_iter)
        z = (Xte[:, :, cols] @ theta[:, :-1, None])[..., 0] + theta[:, -1:]
        signed = np.where(tte == 1, z, -z)
        if self.metric == "accuracy":
            hit = ((z >= 0) == (tte == 1)).astype(float)
        elif self.metric == "probability":
            hit = expit(signed)
        else:
            hit = signed
        return (hit * wte).sum(axis=1) / wte.sum(axis=1)

    def _fold_scores_generic(self, cols) -> np.ndarray:
        from .learners.logistic import train_logistic
        out = []
        for tr, te in self.folds:
            Xtr = self.X[np.ix_(tr, cols)]
            Xte = self.X[np.ix_(te, cols)]
            if self.evaluator == "logistic":
                model = train_logistic((Xtr, self.y[tr]), self.l2, self.max_iter,
                                       solver="newton", n_classes=self.n_classes)
            else:
                from .dataset import Dataset
                from .pipeline import train_ensemble
                ds = Dataset(Xtr, self.y[tr], [str(c) for c in cols],
                             [str(c) for c in range(self.n_classes)])
                model = train_ensemble(ds, self.ensemble_params)
            if self.metric == "accuracy":
                out.append(np.mean(model.predict(Xte) == self.y[te]))
            else:
                P = model.predict_proba(Xte)
                out.append(np.mean(_true_class_score(P[np.arange(te.size), self.y[te]], self.metric)))
        return np.array(out)

    def fold_scores(self, mask) -> np.ndarray:
        cols = np.flatnonzero(np.asarray(mask, dtype=bool))
        if self._batched:
            return self._fold_scores_batched(cols)
        return self._fold_scores_generic(cols)

    def score(self, mask) -> float:
        return float(np.mean(self.fold_scores(mask)))

    def penalty(self, mask) -> float:
        return self.size_penalty * float(np.count_nonzero(mask)) / self.dim

    def __call__(self, mask) -> float:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            return -np.inf
        return self.score(mask) - self.penalty(mask)

    def spec(self) -> FitnessSpec:
        return FitnessSpec(self, f"{len(self.folds)}-fold {self.evaluator} {self.metric} "
                                 f"- {self.size_penalty} * |S|/{self.dim}")


def subset_fitness(mask, train, folds: int = 5, seed: int = 0, size_penalty: float = 0.01,
                   l2: float = 1.0, metric: str = "accuracy") -> float:
    return SubsetFitness(train.features, train.labels, train.n_classes, folds, seed,
                         size_penalty, l2, metric=metric)(mask)


def pso_config_dict(cfg: PsoConfig) -> dict:
    return asdict(cfg)
