"""Preference pairs and the paired-loss family.

Every loss is a sum over pairs of a function of
``z = beta * (logratio_w - logratio_l) - offset`` where ``offset`` is the
(clamped) reward margin net of ``delta``; DPO uses no offset. Gradients are
returned as flat parameter vectors for :class:`tcheby.policy.SequencePolicy`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .core import RewardDataset
from .policy import Context, EncodedBatch, SequencePolicy, encode_batch, grad_encoded, log_prob_encoded
from .scalarize import st_from_rho, st_policy_dlogpi


@dataclass(frozen=True)
class PreferencePair:
    group_index: int
    winner: int
    loser: int
    margin: float

    def __post_init__(self):
        if self.winner == self.loser:
            raise ValueError("winner and loser must differ")


@dataclass
class LossReport:
    total: float
    pref_term: float
    nll_term: float
    grad: np.ndarray
    n_pairs: int
    per_pair: np.ndarray = field(repr=False, default=None)


def build_pairs(scalarized, delta: float, max_pairs_per_context: int | None = None,
                rng: np.random.Generator | None = None, group_index: int = 0) -> list[PreferencePair]:
    """All ordered pairs with ``R[w] - R[l] > delta``, optionally subsampled.

    Subsampling draws without replacement and keeps the enumeration order,
    so the result depends only on the generator state.
    """
    if delta < 0:
        raise ValueError("delta must be >= 0")
    R = np.asarray(scalarized, dtype=np.float64)
    diff = R[:, None] - R[None, :]
    w_idx, l_idx = np.nonzero(diff > delta)
    if max_pairs_per_context is not None and w_idx.size > max_pairs_per_context:
        rng = rng if rng is not None else np.random.default_rng(0)
        keep = np.sort(rng.choice(w_idx.size, size=max_pairs_per_context, replace=False))
        w_idx, l_idx = w_idx[keep], l_idx[keep]
    return [PreferencePair(group_index, int(w), int(l), float(diff[w, l])) for w, l in zip(w_idx, l_idx)]


@dataclass(frozen=True)
class PairBatch:
    """Pairs packed for loss evaluation, with frozen reference log-probs cached."""

    pairs: tuple[PreferencePair, ...]
    winners: EncodedBatch
    losers: EncodedBatch
    ref_w: np.ndarray
    ref_l: np.ndarray
    len_w: np.ndarray
    reward_w: np.ndarray | None = None
    reward_l: np.ndarray | None = None
    rho_w: np.ndarray | None = None
    rho_l: np.ndarray | None = None

    def __len__(self):
        return len(self.pairs)

    def subset(self, idx) -> "PairBatch":
        idx = np.asarray(idx, dtype=np.int64)

        def take_enc(b: EncodedBatch) -> EncodedBatch:
            lengths = b.lengths[idx]
            offsets = np.zeros(idx.size + 1, dtype=np.int64)
            np.cumsum(lengths, out=offsets[1:])
            tokens = np.concatenate([b.tokens[b.offsets[i]:b.offsets[i + 1]] for i in idx]) if idx.size else b.tokens[:0]
            return EncodedBatch(b.cls[idx], b.start[idx], tokens.astype(np.int64), offsets)

        opt = lambda a: None if a is None else a[idx]  # noqa: E731
        return PairBatch(tuple(self.pairs[i] for i in idx), take_enc(self.winners), take_enc(self.losers),
                         self.ref_w[idx], self.ref_l[idx], self.len_w[idx], opt(self.reward_w),
                         opt(self.reward_l), opt(self.rho_w), opt(self.rho_l))


def prepare_pairs(ref_policy: SequencePolicy, dataset: RewardDataset, pairs, scalarized=None,
                  rho=None) -> PairBatch:
    """Pack ``pairs`` for loss evaluation.

    ``scalarized`` and ``rho`` are per-group arrays (item-indexed) of scalar
    rewards and distribution-relative reward vectors respectively.
    """
    pairs = tuple(pairs)
    ctx_w, seq_w, ctx_l, seq_l = [], [], [], []
    for p in pairs:
        g = dataset.groups[p.group_index]
        ctx = Context(g.context_id, g.prompt)
        ctx_w.append(ctx)
        ctx_l.append(ctx)
        seq_w.append(g.sequences[p.winner])
        seq_l.append(g.sequences[p.loser])
    winners = encode_batch(ref_policy, ctx_w, seq_w)
    losers = encode_batch(ref_policy, ctx_l, seq_l)

    def gather(per_group, which):
        if per_group is None:
            return None
        rows = [np.asarray(per_group[p.group_index])[getattr(p, which)] for p in pairs]
        return np.array(rows, dtype=np.float64)

    k = None if rho is None else np.asarray(rho[0]).shape[-1]
    rho_w, rho_l = gather(rho, "winner"), gather(rho, "loser")
    if rho is not None and not pairs:
        rho_w = rho_l = np.zeros((0, k))
    return PairBatch(pairs, winners, losers, log_prob_encoded(ref_policy, winners),
                     log_prob_encoded(ref_policy, losers), winners.lengths.astype(np.float64),
                     gather(scalarized, "winner"), gather(scalarized, "loser"), rho_w, rho_l)


def _offset(margin, delta, clamp):
    off = margin - delta
    if clamp is None:
        return off, np.ones_like(off, dtype=bool)
    return np.minimum(off, clamp), off < clamp


def _logistic(z):
    """``-log sigmoid(z)`` and its derivative."""
    return np.logaddexp(0.0, -z), -expit(-z)


def _assemble(policy, batch, pref, dz, dlp_w, dlp_l, nll=None, alpha=0.0):
    coefs_w = dz * dlp_w
    coefs_l = dz * dlp_l
    nll_total = 0.0
    if nll is not None:
        coefs_w = coefs_w + (-alpha / batch.len_w)
        nll_total = float(np.sum(nll))
    grad = grad_encoded(policy, batch.winners, coefs_w) + grad_encoded(policy, batch.losers, coefs_l)
    pref_total = float(np.sum(pref))
    return LossReport(pref_total + alpha * nll_total, pref_total, nll_total, grad, len(batch), pref)


def _logratios(policy, batch):
    lp_w = log_prob_encoded(policy, batch.winners)
    lp_l = log_prob_encoded(policy, batch.losers)
    return lp_w, lp_l, (lp_w - batch.ref_w) - (lp_l - batch.ref_l)


def _winner_nll(lp_w, batch, alpha):
    return (-lp_w / batch.len_w) if alpha else None


def dpo_loss(policy: SequencePolicy, batch: PairBatch, beta: float, alpha: float = 0.0) -> LossReport:
    """DPO over the pairs; ``alpha > 0`` adds the winners' length-averaged NLL."""
    if not beta > 0:
        raise ValueError("beta must be > 0")
    lp_w, _, dlr = _logratios(policy, batch)
    pref, dz = _logistic(beta * dlr)
    return _assemble(policy, batch, pref, dz, beta, -beta, _winner_nll(lp_w, batch, alpha), alpha)


def odpo_loss(policy: SequencePolicy, batch: PairBatch, beta: float, delta: float,
              clamp: float | None = 1.0, alpha: float = 0.0) -> LossReport:
    if not beta > 0:
        raise ValueError("beta must be > 0")
    lp_w, _, dlr = _logratios(policy, batch)
    offset, _ = _offset(batch.reward_w - batch.reward_l, delta, clamp)
    pref, dz = _logistic(beta * dlr - offset)
    return _assemble(policy, batch, pref, dz, beta, -beta, _winner_nll(lp_w, batch, alpha), alpha)


def squared_pref_loss(policy: SequencePolicy, batch: PairBatch, beta: float, delta: float,
                      clamp: float | None = 1.0, alpha: float = 0.0) -> LossReport:
    if not beta > 0:
        raise ValueError("beta must be > 0")
    lp_w, _, dlr = _logratios(policy, batch)
    offset, _ = _offset(batch.reward_w - batch.reward_l, delta, clamp)
    z = beta * dlr - offset
    return _assemble(policy, batch, z * z, 2.0 * z, beta, -beta, _winner_nll(lp_w, batch, alpha), alpha)


def stomp_loss(policy: SequencePolicy, batch: PairBatch, alpha: float, beta: float, gamma: float,
               delta: float, lam, tau: float, clamp: float | None = 1.0) -> LossReport:
    """Smooth-Tchebysheff offset loss plus the winners' length-averaged NLL.

    Pairs are expected to have been selected with the policy-independent
    reward; inside the loss the policy-dependent reward is used, and its
    dependence on ``log pi`` contributes to the gradient.
    """
    if not beta > 0:
        raise ValueError("beta must be > 0")
    lp_w, lp_l, dlr = _logratios(policy, batch)
    R_w = st_from_rho(batch.rho_w, lam, gamma, tau, log_pi=lp_w)
    R_l = st_from_rho(batch.rho_l, lam, gamma, tau, log_pi=lp_l)
    offset, live = _offset(R_w - R_l, delta, clamp)
    pref, dz = _logistic(beta * dlr - offset)
    s_w = np.where(live, st_policy_dlogpi(batch.rho_w, lam, gamma, tau, lp_w), 0.0)
    s_l = np.where(live, st_policy_dlogpi(batch.rho_l, lam, gamma, tau, lp_l), 0.0)
    nll = -lp_w / batch.len_w
    return _assemble(policy, batch, pref, dz, beta - s_w, -beta + s_l, nll=nll, alpha=alpha)
