"""Gaussian-process reward models and quasi-Monte Carlo expected hypervolume.

One independent GP per objective: constant mean, Matérn-5/2 kernel scaled by a
signal variance, Gaussian noise. Hyperparameters are fitted by maximizing the
log marginal likelihood plus log hyperprior densities (MAP) in the
coordinates ``h = (log lengthscale, log signal_var, mean, log noise_var)``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.special import gammaln
from scipy.stats import norm, qmc

from .evaluate import hypervolume

logger = logging.getLogger(__name__)

SQRT5 = math.sqrt(5.0)
JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)
PROTOCOL_SUBSET_SIZES = (12, 24, 48, 96, 192, 384)
PROTOCOL_QMC_SAMPLES = 256
PROTOCOL_REPEATS = 100


class GPFitError(RuntimeError):
    pass


@dataclass(frozen=True)
class KmerFeatures:
    """Length-normalized unigram and bigram counts, ``D = n + n**2``."""

    alphabet: str

    @property
    def dim(self) -> int:
        n = len(self.alphabet)
        return n + n * n

    def __call__(self, sequences: Sequence[str]) -> np.ndarray:
        n = len(self.alphabet)
        lookup = {c: i for i, c in enumerate(self.alphabet)}
        X = np.zeros((len(sequences), self.dim))
        for j, s in enumerate(sequences):
            idx = np.array([lookup[c] for c in s], dtype=np.int64)
            if idx.size:
                X[j, :n] = np.bincount(idx, minlength=n) / idx.size
            if idx.size > 1:
                X[j, n:] = np.bincount(idx[:-1] * n + idx[1:], minlength=n * n) / (idx.size - 1)
        return X


@dataclass(frozen=True)
class HyperPriors:
    dim: int
    ls_mu0: float = math.sqrt(2.0)
    ls_sigma0: float = math.sqrt(3.0)
    signal_shape: float = 5.0
    signal_rate: float = 5.0
    mean_sd: float = 3.0
    noise_shape: float = 1.1
    noise_rate: float = 0.5

    @property
    def ls_loc(self) -> float:
        return self.ls_mu0 + math.log(self.dim) / 2.0

    def log_density(self, h: np.ndarray) -> tuple[float, np.ndarray]:
        """Sum of log prior densities at ``h`` and its gradient w.r.t. ``h``."""
        log_ls, log_sf2, m, log_sn2 = h
        z = (log_ls - self.ls_loc) / self.ls_sigma0
        lp_ls = -log_ls - 0.5 * math.log(2 * math.pi) - math.log(self.ls_sigma0) - 0.5 * z * z
        d_ls = -1.0 - z / self.ls_sigma0

        def gamma(log_s, a, b):
            s = math.exp(log_s)
            return a * math.log(b) - gammaln(a) + (a - 1) * log_s - b * s, (a - 1) - b * s

        lp_sf, d_sf = gamma(log_sf2, self.signal_shape, self.signal_rate)
        lp_sn, d_sn = gamma(log_sn2, self.noise_shape, self.noise_rate)
        lp_m = -0.5 * math.log(2 * math.pi * self.mean_sd ** 2) - 0.5 * (m / self.mean_sd) ** 2
        d_m = -m / self.mean_sd ** 2
        return lp_ls + lp_sf + lp_sn + lp_m, np.array([d_ls, d_sf, d_m, d_sn])

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return np.array([
            rng.normal(self.ls_loc, self.ls_sigma0),
            math.log(rng.gamma(self.signal_shape, 1.0 / self.signal_rate)),
            rng.normal(0.0, self.mean_sd),
            math.log(rng.gamma(self.noise_shape, 1.0 / self.noise_rate)),
        ])


def matern52(x, x2, lengthscale: float, signal_var: float = 1.0) -> float:
    d = float(np.linalg.norm(np.asarray(x, dtype=np.float64) - np.asarray(x2, dtype=np.float64)))
    r = SQRT5 * d / lengthscale
    return signal_var * (1.0 + r + r * r / 3.0) * math.exp(-r)


def _distances(X1, X2):
    sq = (np.sum(X1 * X1, axis=1)[:, None] + np.sum(X2 * X2, axis=1)[None, :] - 2.0 * X1 @ X2.T)
    return np.sqrt(np.maximum(sq, 0.0))


def matern52_matrix(X1, X2, lengthscale: float, signal_var: float = 1.0) -> np.ndarray:
    r = SQRT5 * _distances(np.atleast_2d(X1), np.atleast_2d(X2)) / lengthscale
    return signal_var * (1.0 + r + r * r / 3.0) * np.exp(-r)


def _cholesky(A: np.ndarray) -> tuple[np.ndarray, float]:
    scale = max(float(np.mean(np.diag(A))), 1.0)
    for j in JITTERS:
        try:
            return cholesky(A + (j * scale) * np.eye(A.shape[0]), lower=True), j * scale
        except LinAlgError:
            continue
    raise LinAlgError(f"matrix not positive definite even with jitter {JITTERS[-1] * scale:g}")


def log_marginal_likelihood(h, X, y) -> tuple[float, np.ndarray]:
    """Gaussian log marginal likelihood and its gradient w.r.t. ``h``."""
    log_ls, log_sf2, m, log_sn2 = h
    ls, sf2, sn2 = math.exp(log_ls), math.exp(log_sf2), math.exp(log_sn2)
    n = X.shape[0]
    D = _distances(X, X)
    r = SQRT5 * D / ls
    e = np.exp(-r)
    Kf = sf2 * (1.0 + r + r * r / 3.0) * e
    L, _ = _cholesky(Kf + sn2 * np.eye(n))
    resid = y - m
    alpha = cho_solve((L, True), resid)
    lml = -0.5 * resid @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2 * math.pi)
    Kinv = cho_solve((L, True), np.eye(n))
    W = np.outer(alpha, alpha) - Kinv
    dK_ls = sf2 * (r * r / 3.0) * (1.0 + r) * e
    grad = np.array([
        0.5 * np.sum(W * dK_ls),
        0.5 * np.sum(W * Kf),
        alpha.sum(),
        0.5 * sn2 * np.trace(W),
    ])
    return float(lml), grad


@dataclass
class GPModel:
    mean: float
    lengthscale: float
    signal_var: float
    noise_var: float
    X: np.ndarray
    y: np.ndarray
    chol: np.ndarray = field(repr=False, default=None)
    alpha: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if not (self.lengthscale > 0 and self.signal_var > 0 and self.noise_var >= 0):
            raise ValueError("invalid GP hyperparameters")
        self.X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        self.y = np.asarray(self.y, dtype=np.float64)
        K = matern52_matrix(self.X, self.X, self.lengthscale, self.signal_var)
        self.chol, _ = _cholesky(K + self.noise_var * np.eye(self.X.shape[0]))
        self.alpha = cho_solve((self.chol, True), self.y - self.mean)

    @property
    def h(self) -> np.ndarray:
        return np.array([math.log(self.lengthscale), math.log(self.signal_var), self.mean,
                         math.log(self.noise_var) if self.noise_var > 0 else -np.inf])

    @classmethod
    def from_h(cls, h, X, y) -> "GPModel":
        return cls(float(h[2]), math.exp(h[0]), math.exp(h[1]), math.exp(h[3]), X, y)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "lengthscale": self.lengthscale, "signal_var": self.signal_var,
                "noise_var": self.noise_var, "n_train": int(self.X.shape[0]), "dim": int(self.X.shape[1])}


def log_posterior_density(model: GPModel, priors: HyperPriors | None) -> float:
    """MAP objective: log marginal likelihood plus log hyperprior densities."""
    K = matern52_matrix(model.X, model.X, model.lengthscale, model.signal_var)
    L, _ = _cholesky(K + model.noise_var * np.eye(model.X.shape[0]))
    resid = model.y - model.mean
    a = cho_solve((L, True), resid)
    n = model.X.shape[0]
    lml = -0.5 * resid @ a - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2 * math.pi)
    if priors is None:
        return float(lml)
    return float(lml + priors.log_density(model.h)[0])


def map_objective(h, X, y, priors: HyperPriors | None) -> tuple[float, np.ndarray]:
    lml, g = log_marginal_likelihood(h, X, y)
    if priors is None:
        return lml, g
    lp, gp_ = priors.log_density(h)
    return lml + lp, g + gp_


BOUNDS = [(-8.0, 12.0), (-14.0, 10.0), (-1e3, 1e3), (-18.0, 6.0)]


def fit_map(X, y, priors: HyperPriors | None = None, restarts: int = 5,
            rng: np.random.Generator | None = None) -> GPModel:
    """Best-of-restarts L-BFGS-B maximization of the MAP objective."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if y.size < 2:
        raise GPFitError("need at least two observations")
    priors = priors or HyperPriors(dim=X.shape[1])
    rng = rng if rng is not None else np.random.default_rng(0)
    var = float(np.var(y)) or 1.0
    starts = [np.array([priors.ls_loc, math.log(var), float(np.mean(y)), math.log(0.1 * var)])]
    for _ in range(max(restarts - 1, 0)):
        starts.append(priors.sample(rng))
    lo = np.array([b[0] for b in BOUNDS])
    hi = np.array([b[1] for b in BOUNDS])

    def negobj(h):
        try:
            v, g = map_objective(h, X, y, priors)
        except LinAlgError:
            return 1e25, np.zeros(4)
        return -v, -g

    best_h, best_v, errors = None, -np.inf, []
    for h0 in starts:
        h0 = np.clip(h0, lo, hi)
        try:
            v0 = -negobj(h0)[0]
            res = minimize(negobj, h0, jac=True, method="L-BFGS-B", bounds=BOUNDS)
            h, v = (res.x, -res.fun) if -res.fun >= v0 else (h0, v0)
        except (LinAlgError, ValueError, FloatingPointError) as exc:
            errors.append(repr(exc))
            continue
        if np.isfinite(v) and v > best_v:
            best_h, best_v = h, v
    if best_h is None:
        raise GPFitError(f"all {len(starts)} restarts failed: {errors}")
    return GPModel.from_h(best_h, X, y)


def posterior(model: GPModel, Xq, full_cov: bool = True, include_noise: bool = False):
    """Posterior mean and covariance (or variance) of the latent function at ``Xq``."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=np.float64))
    Ks = matern52_matrix(model.X, Xq, model.lengthscale, model.signal_var)
    mean = model.mean + Ks.T @ model.alpha
    v = solve_triangular(model.chol, Ks, lower=True)
    if full_cov:
        cov = matern52_matrix(Xq, Xq, model.lengthscale, model.signal_var) - v.T @ v
        cov = 0.5 * (cov + cov.T)
        if include_noise:
            cov = cov + model.noise_var * np.eye(Xq.shape[0])
        return mean, cov
    var = model.signal_var - np.sum(v * v, axis=0)
    var = np.maximum(var, 0.0) + (model.noise_var if include_noise else 0.0)
    return mean, var


def _psd_factor(C: np.ndarray) -> np.ndarray:
    if not np.any(np.diag(C) > 0):
        return np.zeros_like(C)
    return _cholesky(C)[0]


@dataclass
class EHVResult:
    rows: list[tuple[int, float, float]]
    metadata: dict


def expected_hypervolume(models: Sequence[GPModel], features: np.ndarray, subset_sizes=PROTOCOL_SUBSET_SIZES,
                         n_qmc: int = PROTOCOL_QMC_SAMPLES, n_repeats: int = PROTOCOL_REPEATS, reference=None,
                         rng: np.random.Generator | None = None, include_noise: bool = False) -> EHVResult:
    """Expected hypervolume of random size-``k`` subsets of the candidates.

    For each repeat a subset is drawn uniformly without replacement, joint
    posterior samples are generated from a scrambled Sobol point set pushed
    through the normal inverse CDF and the per-objective posterior Cholesky
    factors, and the exact hypervolume of each sample is averaged.
    """
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[0] == 0:
        raise ValueError("no candidates")
    post = [posterior(m, features, full_cov=True, include_noise=include_noise) for m in models]
    result = expected_hypervolume_from_posterior([p[0] for p in post], [p[1] for p in post], subset_sizes,
                                                 n_qmc, n_repeats, reference, rng)
    result.metadata["include_noise"] = include_noise
    return result


def expected_hypervolume_from_posterior(means: Sequence[np.ndarray], covs: Sequence[np.ndarray],
                                        subset_sizes=PROTOCOL_SUBSET_SIZES, n_qmc: int = PROTOCOL_QMC_SAMPLES,
                                        n_repeats: int = PROTOCOL_REPEATS, reference=None,
                                        rng: np.random.Generator | None = None) -> EHVResult:
    """Same estimator given per-objective posterior means ``(N,)`` and covariances ``(N, N)``."""
    N = len(means[0]) if len(means) else 0
    if N == 0:
        raise ValueError("no candidates")
    if n_qmc < 2:
        raise ValueError("n_qmc must be >= 2")
    if reference is None:
        raise ValueError("a reference point is required (e.g. the per-objective test-set minimum)")
    reference = np.asarray(reference, dtype=np.float64)
    n_obj = len(means)
    if reference.shape != (n_obj,):
        raise ValueError("reference dimension mismatch")
    rng = rng if rng is not None else np.random.default_rng(0)
    rows = []
    for k in subset_sizes:
        if k > N:
            raise ValueError(f"subset size {k} exceeds the candidate pool ({N})")
        hvs = np.empty(n_repeats)
        for rep in range(n_repeats):
            idx = np.sort(rng.choice(N, size=k, replace=False))
            mus = [np.asarray(mu)[idx] for mu in means]
            facs = [_psd_factor(np.asarray(C)[np.ix_(idx, idx)]) for C in covs]
            sob = qmc.Sobol(d=k * n_obj, scramble=True, seed=rng)
            U = np.clip(sob.random(n_qmc), 1e-12, 1 - 1e-12)
            Z = norm.ppf(U).reshape(n_qmc, n_obj, k)
            Y = np.stack([mus[j][None, :] + Z[:, j, :] @ facs[j].T for j in range(n_obj)], axis=-1)
            hvs[rep] = np.mean([hypervolume(Y[s], reference) for s in range(n_qmc)])
        std = float(np.std(hvs, ddof=1)) if n_repeats > 1 else 0.0
        rows.append((int(k), float(hvs.mean()), std))
    meta = {"subset_sizes": [int(k) for k in subset_sizes], "n_qmc": int(n_qmc), "n_repeats": int(n_repeats),
            "reference": reference.tolist(), "n_candidates": int(N)}
    return EHVResult(rows, meta)


def save_models(models: Sequence[GPModel], objectives: Sequence[str], path, extra: dict | None = None) -> None:
    doc = {"objectives": list(objectives), "models": [m.to_dict() for m in models], **(extra or {})}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_models(path, X, ys) -> list[GPModel]:
    """Rebuild fitted models from saved hyperparameters and the training data they refer to."""
    doc = json.loads(Path(path).read_text())
    return [GPModel(d["mean"], d["lengthscale"], d["signal_var"], d["noise_var"], X, y)
            for d, y in zip(doc["models"], ys)]
