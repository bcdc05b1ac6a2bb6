"""Reward scalarizations.

All functions broadcast over leading axes: a reward array of shape ``(..., k)``
yields values of shape ``(...)``. Standardization constants come from
:class:`tcheby.core.RewardStats`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import PreferenceVector, RewardStats

METHODS = ("linear", "stz", "hard-tcheby", "st", "st-policy")
LAMBDA_FLOOR = 1e-6


class NovelRewardWarning(UserWarning):
    """A distribution-relative reward was computed outside the training support."""


@dataclass(frozen=True)
class ScalarizedReward:
    value: np.ndarray | float
    method: str
    lam: np.ndarray
    tau: float | None = None
    gamma: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown scalarization {self.method!r}")
        v = np.asarray(self.value, dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise FloatingPointError(f"{self.method} scalarization produced non-finite values")
        object.__setattr__(self, "value", float(v) if v.ndim == 0 else v)


def _weights(lam) -> np.ndarray:
    if isinstance(lam, PreferenceVector):
        return lam.weights
    return np.asarray(lam, dtype=np.float64)


def normalize_lambda(lam) -> np.ndarray:
    """Clamp entries to ``LAMBDA_FLOOR`` and renormalize onto the simplex."""
    w = np.maximum(_weights(lam), LAMBDA_FLOOR)
    return w / w.sum()


def logsumexp_ext(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-shifted log-sum-exp, accumulating the shifted sum in long double."""
    a = np.asarray(a, dtype=np.float64)
    amax = np.max(a, axis=axis, keepdims=True)
    s = np.sum(np.exp((a - amax).astype(np.longdouble)), axis=axis)
    return (np.squeeze(amax, axis=axis) + np.log(s)).astype(np.float64)


def rho(r, group_index: int | None, stats: RewardStats, *, warn: bool = True) -> np.ndarray:
    """Distribution-relative rewards ``r_i/sigma_i - gamma*log Z_i(x_m)``.

    ``group_index=None`` means an unseen context: the mean log-partition over
    training contexts is used and a :class:`NovelRewardWarning` is emitted.
    """
    r = np.asarray(r, dtype=np.float64)
    if group_index is None:
        log_z = stats.log_partition.mean(axis=0)
        if warn:
            warnings.warn("unseen context: using mean training log-partition", NovelRewardWarning, stacklevel=2)
    else:
        if not 0 <= group_index < stats.log_partition.shape[0]:
            raise IndexError(f"group index {group_index} out of range")
        log_z = stats.log_partition[group_index]
    out = r / stats.sigma - stats.gamma * log_z
    if warn and np.any(out > 1e-12):
        warnings.warn("reward exceeds the observed range of its context (rho > 0)", NovelRewardWarning, stacklevel=2)
    return out


def linear_scalarize(r, lam, stats: RewardStats) -> ScalarizedReward:
    w = _weights(lam)
    r = np.asarray(r, dtype=np.float64)
    return ScalarizedReward(np.sum(w * r / stats.sigma, axis=-1), "linear", w)


def stz_scalarize(r, lam, stats: RewardStats) -> ScalarizedReward:
    w = _weights(lam)
    z = (np.asarray(r, dtype=np.float64) - stats.mu) / stats.sigma
    with np.errstate(divide="ignore"):
        logw = np.log(w)
    return ScalarizedReward(-logsumexp_ext(logw - z), "stz", w)


def hard_tcheby(rho_values, lam) -> np.ndarray | float:
    w = _weights(lam)
    v = np.min(w * np.asarray(rho_values, dtype=np.float64), axis=-1)
    return float(v) if np.ndim(v) == 0 else v


def _st_exponents(rho_values, lam, gamma, tau, log_pi=None):
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    w = normalize_lambda(lam)
    lam_min = w.min()
    a = -(w / (gamma * tau)) * np.asarray(rho_values, dtype=np.float64)
    if log_pi is not None:
        a = a + ((w - lam_min) / tau) * np.asarray(log_pi, dtype=np.float64)[..., None]
    return a, w, lam_min


def st_from_rho(rho_values, lam, gamma: float, tau: float, log_pi=None) -> np.ndarray:
    """Smooth Tchebysheff reward from precomputed distribution-relative rewards.

    With ``log_pi`` given this is the policy-dependent form; otherwise the
    policy-independent one. Both share one code path so that a uniform
    preference vector gives bit-identical results.
    """
    a, w, lam_min = _st_exponents(rho_values, lam, gamma, tau, log_pi)
    return -(gamma * tau / lam_min) * logsumexp_ext(a)


def st_policy_dlogpi(rho_values, lam, gamma: float, tau: float, log_pi) -> np.ndarray:
    """Derivative of the policy-dependent smooth Tchebysheff reward w.r.t. ``log_pi``."""
    a, w, lam_min = _st_exponents(rho_values, lam, gamma, tau, log_pi)
    p = np.exp(a - logsumexp_ext(a)[..., None])
    return -(gamma / lam_min) * np.sum(p * (w - lam_min), axis=-1)


def st_scalarize(r, group_index, lam, stats: RewardStats, gamma: float | None = None,
                 tau: float = 1.0) -> ScalarizedReward:
    gamma = _check_gamma(stats, gamma)
    rh = rho(r, group_index, stats, warn=False)
    return ScalarizedReward(st_from_rho(rh, lam, gamma, tau), "st", normalize_lambda(lam), tau, gamma)


def st_scalarize_policy(r, group_index, log_pi, lam, stats: RewardStats, gamma: float | None = None,
                        tau: float = 1.0) -> ScalarizedReward:
    gamma = _check_gamma(stats, gamma)
    if np.any(np.asarray(log_pi) > 0):
        raise ValueError("log_pi must be <= 0")
    rh = rho(r, group_index, stats, warn=False)
    return ScalarizedReward(st_from_rho(rh, lam, gamma, tau, log_pi=log_pi), "st-policy",
                            normalize_lambda(lam), tau, gamma)


def _check_gamma(stats: RewardStats, gamma):
    if gamma is None:
        return stats.gamma
    if not np.isclose(gamma, stats.gamma, rtol=0, atol=1e-15):
        raise ValueError(f"gamma={gamma} does not match the statistics (computed with gamma={stats.gamma})")
    return stats.gamma


def lambda_prime(lam, stats: RewardStats) -> PreferenceVector:
    w = _weights(lam) * stats.lambda_bar
    return PreferenceVector(w / w.sum())


def scalarize_group(method: str, rewards, group_index, lam, stats: RewardStats, tau: float = 1.0) -> np.ndarray:
    """Per-item scalar rewards for one context group (``rewards`` is ``(N, k)``)."""
    if method == "linear":
        return linear_scalarize(rewards, lam, stats).value
    if method == "stz":
        return stz_scalarize(rewards, lam, stats).value
    if method == "st":
        return np.atleast_1d(st_scalarize(rewards, group_index, lam, stats, tau=tau).value)
    if method == "hard-tcheby":
        return np.atleast_1d(hard_tcheby(rho(rewards, group_index, stats), normalize_lambda(lam)))
    raise ValueError(f"unknown scalarization {method!r}")
