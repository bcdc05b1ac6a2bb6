"""Off-policy evaluation, Pareto filtering and hypervolume."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from . import _kernels
from .core import RewardDataset
from .policy import Context, SequencePolicy, log_prob_batch

NORMALIZATIONS = ("double", "standard")


@dataclass(frozen=True)
class ExpectedReward:
    values: np.ndarray
    ess: np.ndarray
    label: str = ""
    weights: tuple = field(default=(), repr=False)


@dataclass(frozen=True)
class FrontPoint:
    values: np.ndarray
    tag: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise ValueError("front point values must be finite")
        object.__setattr__(self, "values", v)


def wis_from_logratios(log_ratios: Sequence[np.ndarray], rewards: Sequence[np.ndarray],
                       normalization: str = "double") -> tuple[np.ndarray, np.ndarray, list[np.ndarray]]:
    """Weighted importance sampling from per-context log-ratios ``log pi - log pi_0``.

    With ``normalization="double"`` each context's self-normalized sum is also
    divided by its size (the default); ``"standard"`` omits
    that factor (the conventional estimator). Returns ``(estimate, ess, weights)``.
    """
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    if not log_ratios:
        raise ValueError("no contexts")
    per_ctx, ess, weights = [], [], []
    for lr, r in zip(log_ratios, rewards):
        lr = np.asarray(lr, dtype=np.float64)
        if lr.size == 0:
            raise ValueError("context with zero items")
        e = np.exp(lr - lr.max())
        total = e.sum()
        w = e / total
        # with equal log-ratios e == 1 and this is exactly the context mean
        est = np.sum(e[:, None] * np.asarray(r, dtype=np.float64), axis=0) / total
        if normalization == "double":
            est = est / lr.size
        per_ctx.append(est)
        ess.append(1.0 / np.sum(w * w))
        weights.append(w)
    return np.mean(per_ctx, axis=0), np.array(ess), weights


def wis_expected_rewards(policy: SequencePolicy, ref: SequencePolicy, testset: RewardDataset,
                         normalization: str = "double", label: str = "") -> ExpectedReward:
    log_ratios = []
    for g in testset.groups:
        ctx = [Context(g.context_id, g.prompt)] * g.size
        log_ratios.append(log_prob_batch(policy, ctx, g.sequences) - log_prob_batch(ref, ctx, g.sequences))
    est, ess, w = wis_from_logratios(log_ratios, [g.rewards for g in testset.groups], normalization)
    return ExpectedReward(est, ess, label, tuple(w))


def _as_array(points) -> np.ndarray:
    if len(points) and isinstance(points[0], FrontPoint):
        return np.array([p.values for p in points])
    return np.asarray(points, dtype=np.float64).reshape(len(points), -1) if len(points) else np.zeros((0, 0))


def pareto_mask(Y: np.ndarray) -> np.ndarray:
    """Boolean mask of non-dominated rows (maximization)."""
    Y = np.asarray(Y, dtype=np.float64)
    n = Y.shape[0]
    keep = np.ones(n, dtype=bool)
    for i in range(n):
        if not keep[i]:
            continue
        ge = np.all(Y >= Y[i], axis=1) & np.any(Y > Y[i], axis=1)
        if ge.any():
            keep[i] = False
            continue
        # points i dominates are dropped eagerly
        dominated = np.all(Y[i] >= Y, axis=1) & np.any(Y[i] > Y, axis=1)
        keep &= ~dominated
    return keep


def pareto_filter(points, maximize: bool = True):
    """Non-dominated subset in input order; accepts FrontPoints or an ``(n, k)`` array."""
    if len(points) == 0:
        return points[:0] if isinstance(points, np.ndarray) else []
    Y = _as_array(points)
    mask = pareto_mask(Y if maximize else -Y)
    if isinstance(points, np.ndarray):
        return points[mask]
    return [p for p, keep in zip(points, mask) if keep]


def hypervolume(points, reference) -> float:
    """Exact dominated hypervolume (maximization) for 1-3 objectives.

    Points that are not strictly better than the reference in every
    coordinate enclose no volume and are dropped.
    """
    ref = np.asarray(reference, dtype=np.float64)
    Y = _as_array(points)
    if Y.size == 0:
        return 0.0
    k = Y.shape[1]
    if ref.shape != (k,):
        raise ValueError("reference dimension mismatch")
    Y = np.ascontiguousarray(Y[np.all(Y > ref, axis=1)])
    if Y.shape[0] == 0:
        return 0.0
    if k == 1:
        return float(Y.max() - ref[0])
    if k == 2:
        return float(_kernels.hv2d(Y, ref))
    if k == 3:
        return float(_kernels.hv3d(Y, ref))
    raise NotImplementedError(f"exact hypervolume supports k <= 3 (got {k}); use hypervolume_mc")


def hypervolume_mc(points, reference, n_samples: int, rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo hypervolume over the reference-bounded box; returns ``(estimate, stderr)``."""
    ref = np.asarray(reference, dtype=np.float64)
    Y = _as_array(points)
    if Y.size == 0:
        return 0.0, 0.0
    Y = Y[np.all(Y > ref, axis=1)]
    if Y.shape[0] == 0:
        return 0.0, 0.0
    upper = Y.max(axis=0)
    box = float(np.prod(upper - ref))
    if not box > 0:
        raise ValueError("degenerate sampling box")
    hits = np.zeros(n_samples, dtype=bool)
    chunk = max(1, min(n_samples, 2_000_000 // max(Y.shape[0], 1)))
    for s in range(0, n_samples, chunk):
        U = ref + (upper - ref) * rng.random((min(chunk, n_samples - s), Y.shape[1]))
        hits[s:s + U.shape[0]] = np.any(np.all(Y[None, :, :] >= U[:, None, :], axis=2), axis=1)
    p = hits.mean()
    return box * p, box * np.sqrt(p * (1 - p) / n_samples)


def default_reference(Y, margin: float = 1e-9) -> np.ndarray:
    return np.asarray(Y, dtype=np.float64).min(axis=0) - margin


@dataclass
class FrontSelection:
    front: list[int]
    hypervolume: float
    selected: list[int]
    reference: np.ndarray


def checkpoint_front(values, reference=None) -> FrontSelection:
    """Pareto front of candidate expected rewards and the best one or two of them.

    ``selected`` holds the front member (single-point front) or the pair of
    front members whose joint hypervolume is largest.
    """
    Y = _as_array(values)
    if Y.shape[0] == 0:
        raise ValueError("need at least one candidate")
    ref = default_reference(Y) if reference is None else np.asarray(reference, dtype=np.float64)
    front = [int(i) for i in np.flatnonzero(pareto_mask(Y))]
    hv = hypervolume(Y[front], ref)
    if len(front) == 1:
        return FrontSelection(front, hv, front[:1], ref)
    best, best_hv = None, -np.inf
    for a, b in combinations(front, 2):
        v = hypervolume(Y[[a, b]], ref)
        if v > best_hv:
            best, best_hv = [a, b], v
    return FrontSelection(front, hv, best, ref)
