"""Data model, dataset ingestion and reward statistics.

Rewards are kept in raw units everywhere; standardization happens lazily in
:mod:`tcheby.scalarize` using the constants gathered in :class:`RewardStats`.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

logger = logging.getLogger(__name__)

AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"
BOS = "<bos>"
EOS = "<eos>"

ALGORITHMS = ("dpo-lin", "odpo-lin", "odpo-stz", "odpo-sq", "stomp")


class DatasetError(ValueError):
    """Raised when a reward dataset cannot be parsed or fails validation."""


class ConfigError(ValueError):
    """Raised for invalid run configuration values."""


@dataclass(frozen=True)
class Vocabulary:
    """Ordered alphabet of single-character tokens plus reserved BOS/EOS.

    Letters occupy indices ``0 .. n_letters-1`` and EOS is ``n_letters``.
    BOS is never emitted; it only names the start state of a sequence.
    """

    alphabet: str = AMINO_ACIDS

    def __post_init__(self):
        if not self.alphabet:
            raise ValueError("alphabet must be non-empty")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise ValueError("alphabet tokens must be distinct")

    @property
    def n_letters(self) -> int:
        return len(self.alphabet)

    @property
    def size(self) -> int:
        """Number of emittable outcomes (letters + EOS)."""
        return len(self.alphabet) + 1

    @property
    def eos(self) -> int:
        return len(self.alphabet)

    def encode(self, seq: str) -> np.ndarray:
        lookup = self._lookup
        try:
            return np.fromiter((lookup[c] for c in seq), dtype=np.int64, count=len(seq))
        except KeyError as exc:
            raise DatasetError(f"token {exc.args[0]!r} not in vocabulary") from None

    def decode(self, tokens: Iterable[int]) -> str:
        return "".join(self.alphabet[int(t)] for t in tokens)

    @cached_property
    def _lookup(self) -> dict[str, int]:
        return {c: i for i, c in enumerate(self.alphabet)}


@dataclass(frozen=True)
class ContextGroup:
    context_id: str
    sequences: tuple[str, ...]
    rewards: np.ndarray  # (N, k)
    prompt: str = ""

    def __post_init__(self):
        rewards = np.asarray(self.rewards, dtype=np.float64)
        if rewards.ndim != 2 or rewards.shape[0] != len(self.sequences):
            raise DatasetError(f"context {self.context_id!r}: rewards must be (N, k) with N = #sequences")
        if len(self.sequences) == 0:
            raise DatasetError(f"context {self.context_id!r} has no items")
        if any(len(s) == 0 for s in self.sequences):
            raise DatasetError(f"context {self.context_id!r} contains an empty sequence")
        rewards.setflags(write=False)
        object.__setattr__(self, "rewards", rewards)

    @property
    def size(self) -> int:
        return len(self.sequences)


@dataclass(frozen=True)
class RewardDataset:
    objectives: tuple[str, ...]
    groups: tuple[ContextGroup, ...]
    vocab: Vocabulary = field(default_factory=Vocabulary)

    def __post_init__(self):
        object.__setattr__(self, "objectives", tuple(self.objectives))
        object.__setattr__(self, "groups", tuple(self.groups))
        k = len(self.objectives)
        if k < 1:
            raise DatasetError("need at least one objective")
        seen = set()
        for g in self.groups:
            if g.context_id in seen:
                raise DatasetError(f"duplicate context id {g.context_id!r}")
            seen.add(g.context_id)
            if g.rewards.shape[1] != k:
                raise DatasetError(f"context {g.context_id!r}: reward vectors must have length {k}")
            if not np.all(np.isfinite(g.rewards)):
                raise DatasetError(f"context {g.context_id!r}: non-finite reward")
            for s in (*g.sequences, g.prompt):
                bad = set(s) - set(self.vocab.alphabet)
                if bad:
                    raise DatasetError(f"context {g.context_id!r}: tokens {sorted(bad)} outside vocabulary")

    @property
    def k(self) -> int:
        return len(self.objectives)

    @property
    def n_items(self) -> int:
        return sum(g.size for g in self.groups)

    def all_rewards(self) -> np.ndarray:
        return np.concatenate([g.rewards for g in self.groups], axis=0)

    def group_index(self, context_id: str) -> int:
        for m, g in enumerate(self.groups):
            if g.context_id == context_id:
                return m
        raise KeyError(context_id)


def load_dataset(path, objectives: Sequence[str] | None = None, vocab: Vocabulary | None = None,
                 context_col: str = "context_id", sequence_col: str = "sequence",
                 prompt_col: str = "prompt") -> RewardDataset:
    """Read a ``context_id,sequence,<obj_1>,...,<obj_k>`` CSV file.

    Rows are grouped by context id; file order is preserved within a group
    and groups appear in order of first occurrence. ``objectives`` selects
    reward columns, defaulting to every column other than the id, sequence
    and optional prompt columns.
    """
    vocab = vocab or Vocabulary()
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"{path}: file not found")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if not header:
            raise DatasetError(f"{path}: empty file")
        for col in (context_col, sequence_col):
            if col not in header:
                raise DatasetError(f"{path}: missing column {col!r}")
        if objectives is None:
            objectives = [c for c in header if c not in (context_col, sequence_col, prompt_col)]
        else:
            for col in objectives:
                if col not in header:
                    raise DatasetError(f"{path}: missing column {col!r}")
        if not objectives:
            raise DatasetError(f"{path}: no objective columns")

        order: list[str] = []
        seqs: dict[str, list[str]] = {}
        rews: dict[str, list[list[float]]] = {}
        prompts: dict[str, str] = {}
        alphabet = set(vocab.alphabet)
        for rowno, row in enumerate(reader, start=2):
            cid = row[context_col]
            seq = (row[sequence_col] or "").strip()
            if not seq:
                raise DatasetError(f"{path}: row {rowno}: empty sequence")
            bad = set(seq) - alphabet
            if bad:
                raise DatasetError(f"{path}: row {rowno}: token(s) {sorted(bad)} outside vocabulary")
            values = []
            for col in objectives:
                raw = row[col]
                try:
                    v = float(raw)
                except (TypeError, ValueError):
                    raise DatasetError(f"{path}: row {rowno}: column {col!r} value {raw!r} is not a number") from None
                if not math.isfinite(v):
                    raise DatasetError(f"{path}: row {rowno}: column {col!r} is non-finite ({raw})")
                values.append(v)
            if cid not in seqs:
                order.append(cid)
                seqs[cid], rews[cid] = [], []
                prompts[cid] = (row.get(prompt_col) or "").strip()
            seqs[cid].append(seq)
            rews[cid].append(values)
    if not order:
        raise DatasetError(f"{path}: no data rows")
    groups = [ContextGroup(cid, tuple(seqs[cid]), np.array(rews[cid]), prompts[cid]) for cid in order]
    return RewardDataset(tuple(objectives), tuple(groups), vocab)


def save_dataset(ds: RewardDataset, path) -> None:
    with_prompt = any(g.prompt for g in ds.groups)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["context_id", "sequence", *ds.objectives] + (["prompt"] if with_prompt else []))
        for g in ds.groups:
            for seq, r in zip(g.sequences, g.rewards):
                row = [g.context_id, seq, *(repr(float(v)) for v in r)]
                w.writerow(row + ([g.prompt] if with_prompt else []))


@dataclass(frozen=True)
class RewardStats:
    """Standardization constants for a training set.

    ``log_partition[m, i]`` is the log-sum-exp over group ``m`` of
    ``r_i / (gamma * sigma_i)``.
    """

    sigma: np.ndarray
    mu: np.ndarray
    log_partition: np.ndarray  # (M, k)
    lambda_bar: np.ndarray
    gamma: float
    context_ids: tuple[str, ...] = ()

    @property
    def k(self) -> int:
        return self.sigma.shape[0]

    def log_partition_for(self, context_id: str | None) -> tuple[np.ndarray, bool]:
        """Log-partition row for a context; unseen contexts get the mean row.

        Returns ``(row, seen)``.
        """
        if context_id is not None and context_id in self.context_ids:
            return self.log_partition[self.context_ids.index(context_id)], True
        return self.log_partition.mean(axis=0), False

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma.tolist(),
            "mu": self.mu.tolist(),
            "log_partition": self.log_partition.tolist(),
            "lambda_bar": self.lambda_bar.tolist(),
            "gamma": self.gamma,
            "context_ids": list(self.context_ids),
        }


def compute_reward_stats(ds: RewardDataset, gamma: float) -> RewardStats:
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    variances, means = [], []
    for g in ds.groups:
        if g.size == 1:
            logger.warning("context %r has a single item; it contributes zero variance", g.context_id)
        variances.append(g.rewards.var(axis=0))
        means.append(g.rewards.mean(axis=0))
    sigma = np.sqrt(np.mean(variances, axis=0))
    if np.any(sigma <= 0):
        bad = [ds.objectives[i] for i in np.flatnonzero(sigma <= 0)]
        raise DatasetError(f"objective(s) {bad} have zero within-context variance")
    mu = np.mean(means, axis=0)
    log_z = np.stack([logsumexp(g.rewards / (gamma * sigma), axis=0) for g in ds.groups])

    # hierarchical mean of -rho_i; lambda_bar_i is proportional to its inverse
    neg_rho = np.mean([np.mean(gamma * log_z[m] - g.rewards / sigma, axis=0)
                       for m, g in enumerate(ds.groups)], axis=0)
    if np.any(neg_rho <= 0):
        raise DatasetError("distribution-relative rewards are identically zero; every context has one item")
    inv = 1.0 / neg_rho
    lambda_bar = inv / inv.sum()
    return RewardStats(sigma=sigma, mu=mu, log_partition=log_z, lambda_bar=lambda_bar, gamma=float(gamma),
                       context_ids=tuple(g.context_id for g in ds.groups))


@dataclass(frozen=True)
class PreferenceVector:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("preference vector must be a non-empty 1-D array")
        if np.any(w <= 0):
            raise ValueError(f"preference weights must be positive, got {w.tolist()}")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"preference weights must sum to 1, got {w.sum()!r}")
        object.__setattr__(self, "weights", w)

    @classmethod
    def parse(cls, text: str) -> "PreferenceVector":
        """Parse ``"1/3,2/3"`` style strings; values are renormalized."""
        from fractions import Fraction
        vals = np.array([float(Fraction(t.strip())) for t in text.split(",")])
        return cls(vals / vals.sum())

    def __len__(self):
        return self.weights.size

    def label(self) -> str:
        return "-".join(f"{w:.4f}" for w in self.weights)


@dataclass
class RunConfig:
    algorithm: str = "stomp"
    alpha: float = 0.01
    beta: float = 0.1
    gamma: float = 0.2
    delta: float = 1.0
    tau: float = 1.0
    lam: tuple[float, ...] = (0.5, 0.5)
    use_lambda_prime: bool = True
    clamp: float | None = 1.0
    total_steps: int = 200
    batch_size: int = 32
    warmup_steps: int = 20
    peak_lr: float = 0.05
    final_lr: float = 0.025
    adam_beta1: float = 0.9
    adam_beta2: float = 0.95
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    grad_clip: float | None = 10.0
    max_pairs_per_context: int | None = 512
    seed: int = 0
    checkpoints: tuple[float, ...] = (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)

    def __post_init__(self):
        self.lam = tuple(float(x) for x in self.lam)
        self.checkpoints = tuple(float(x) for x in self.checkpoints)
        self.validate()

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        for name in ("beta", "gamma", "tau"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        for name in ("alpha", "delta"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be >= 0")
        try:
            PreferenceVector(np.array(self.lam))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        cps = self.checkpoints
        if not cps or any(not 0 < c <= 1 for c in cps) or any(b <= a for a, b in zip(cps, cps[1:])):
            raise ConfigError("checkpoint fractions must be strictly increasing in (0, 1]")
        if self.total_steps < 0 or self.batch_size < 1:
            raise ConfigError("total_steps must be >= 0 and batch_size >= 1")
        if self.total_steps > 0 and not 0 <= self.warmup_steps < self.total_steps:
            raise ConfigError("warmup_steps must lie in [0, total_steps)")

    @property
    def preference(self) -> PreferenceVector:
        return PreferenceVector(np.array(self.lam))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lam"] = list(self.lam)
        d["checkpoints"] = list(self.checkpoints)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# tau and gamma are shared; (alpha, beta, delta) vary by dataset family.
PRESETS = {
    "pbrr": dict(alpha=0.02, beta=0.1, gamma=0.2, delta=1.0, tau=1.0),
    "dhfr": dict(alpha=0.05, beta=0.2, gamma=0.2, delta=1.0, tau=1.0),
    "amylase": dict(alpha=0.05, beta=0.05, gamma=0.2, delta=0.5, tau=1.0),
    "full-schedule": dict(total_steps=782, batch_size=64, warmup_steps=79, peak_lr=1e-5, final_lr=5e-6,
                           adam_beta1=0.9, adam_beta2=0.95),
}


def worker_count(requested: int | None = None) -> int:
    """Thread count for internal parallelism, capped by ``TCHEBY_THREADS``."""
    n = requested or os.cpu_count() or 1
    cap = os.environ.get("TCHEBY_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"TCHEBY_THREADS must be an integer, got {cap!r}") from None
    return max(1, n)
