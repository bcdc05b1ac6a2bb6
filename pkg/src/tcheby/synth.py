"""Seeded synthetic reward landscapes and non-convex front candidate sets.

Each context has a random wild type; items are substitution variants of it.
Latent objective scores are linear functions of length-normalized unigram and
bigram composition, whitened over the generated pool and mixed through the
square root of an equicorrelation matrix so the noise-free objectives have
exactly the requested Pearson correlation. The Pearson target is chosen so the
Spearman correlation of the noisy rewards lands near the requested value.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .core import AMINO_ACIDS, ContextGroup, DatasetError, RewardDataset, Vocabulary
from .gp import KmerFeatures


CONCAVE_BEND = 1.5


class InfeasibleCorrelation(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticSpec:
    k: int = 2
    correlation: float = 0.0
    front: str = "convex"
    n_contexts: int = 1
    items_per_context: int = 300
    seq_len: int = 12
    alphabet: str = AMINO_ACIDS
    noise: float = 0.1
    max_mutations: int = 3
    test_fraction: float = 0.3
    split: str = "random"
    train_max_mutations: int = 1
    seed: int = 0

    def __post_init__(self):
        if not -1.0 <= self.correlation <= 1.0:
            raise ValueError("correlation must lie in [-1, 1]")
        for name in ("k", "n_contexts", "items_per_context", "seq_len", "max_mutations"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.front not in ("convex", "concave"):
            raise ValueError("front must be 'convex' or 'concave'")
        if self.split not in ("random", "depth"):
            raise ValueError("split must be 'random' or 'depth'")
        if self.split == "depth" and not 1 <= self.train_max_mutations < self.max_mutations:
            raise ValueError("depth split needs 1 <= train_max_mutations < max_mutations")
        if self.noise < 0 or not 0 <= self.test_fraction < 1:
            raise ValueError("noise must be >= 0 and test_fraction in [0, 1)")
        if len(set(self.alphabet)) != len(self.alphabet) or len(self.alphabet) < 2:
            raise ValueError("alphabet needs at least two distinct letters")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        return cls(**d)


@dataclass
class Landscape:
    train: RewardDataset
    test: RewardDataset
    spec: SyntheticSpec
    wild_types: dict[str, str]
    _features: KmerFeatures
    _center: np.ndarray
    _transform: np.ndarray

    def mean_reward(self, sequences) -> np.ndarray:
        """Noise-free objective values, ``(n, k)``."""
        signal = (self._features(list(sequences)) - self._center) @ self._transform
        return np.exp(CONCAVE_BEND * signal) if self.spec.front == "concave" else signal


def pearson_target(spearman: float, noise: float) -> float:
    """Signal correlation giving Spearman ``spearman`` after adding independent noise."""
    pearson = 2.0 * math.sin(math.pi * spearman / 6.0)
    return pearson * (1.0 + noise * noise)


def _mixing(k: int, c: float) -> np.ndarray:
    C = np.full((k, k), c)
    np.fill_diagonal(C, 1.0)
    w, U = np.linalg.eigh(C)
    if w.min() < -1e-12:
        raise InfeasibleCorrelation(
            f"equicorrelation {c:.4f} is not attainable with k={k} objectives (needs >= {-1 / (k - 1):.4f})")
    return U * np.sqrt(np.maximum(w, 0.0)) @ U.T


def _variants(rng, wt: np.ndarray, n_letters: int, count: int, max_mut: int) -> list[np.ndarray]:
    L = wt.size
    seen, out = set(), []
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 50 * count + 1000:
            raise DatasetError("could not generate enough distinct variants; raise seq_len or max_mutations")
        m = int(rng.integers(1, min(max_mut, L) + 1))
        pos = rng.choice(L, size=m, replace=False)
        v = wt.copy()
        # shift by 1..n-1 so every chosen site really changes
        v[pos] = (v[pos] + rng.integers(1, n_letters, size=m)) % n_letters
        key = v.tobytes()
        if key not in seen:
            seen.add(key)
            out.append(v)
    return out


def gen_landscape(spec: SyntheticSpec) -> Landscape:
    """Generate train/test datasets with the requested objective correlation.

    ``split="random"`` holds out ``test_fraction`` of each context at random;
    ``split="depth"`` trains on variants with at most ``train_max_mutations``
    substitutions and tests on the deeper ones.
    """
    rng = np.random.default_rng(spec.seed)
    vocab = Vocabulary(spec.alphabet)
    n = vocab.n_letters
    c = pearson_target(spec.correlation, spec.noise) if spec.correlation not in (-1.0, 1.0) else spec.correlation
    if spec.noise > 0 and abs(c) > 1:
        raise InfeasibleCorrelation(f"correlation {spec.correlation} is unreachable with noise {spec.noise}")
    if spec.noise > 0 and abs(spec.correlation) == 1.0:
        raise InfeasibleCorrelation("perfect correlation requires noise = 0")
    if spec.k == 1:
        c = 1.0
    mix = _mixing(spec.k, c)

    feats = KmerFeatures(spec.alphabet)
    W = rng.standard_normal((feats.dim, 1 if spec.correlation == 1.0 else spec.k))
    if spec.correlation == 1.0:
        W = np.repeat(W, spec.k, axis=1)
    wild, seqs, depth = {}, [], []
    for m in range(spec.n_contexts):
        cid = f"ctx{m}"
        wt = rng.integers(0, n, size=spec.seq_len)
        wild[cid] = vocab.decode(wt)
        variants = _variants(rng, wt, n, spec.items_per_context, spec.max_mutations)
        seqs.append([vocab.decode(v) for v in variants])
        depth.append(np.array([np.count_nonzero(v != wt) for v in variants]))
    X = feats([s for group in seqs for s in group])
    Z = X @ W
    center = X.mean(axis=0)
    Zc = Z - Z.mean(axis=0)
    if spec.correlation == 1.0:
        scale = 1.0 / max(float(Zc[:, 0].std()), 1e-12)
        transform = W * scale
    else:
        cov = np.cov(Zc, rowvar=False, bias=True).reshape(spec.k, spec.k)
        Lc = np.linalg.cholesky(cov)
        # whiten the pool's latent scores, then impose the target correlation
        transform = W @ np.linalg.inv(Lc).T @ mix.T
    signal = (X - center) @ transform
    if spec.front == "concave":
        # a convex increasing map keeps ranks but bows the upper front inward
        R = np.exp(CONCAVE_BEND * (signal + spec.noise * rng.standard_normal(signal.shape)))
    else:
        R = signal + spec.noise * rng.standard_normal(signal.shape)

    objectives = tuple(f"obj{i + 1}" for i in range(spec.k))
    train, test = [], []
    at = 0
    for m, group in enumerate(seqs):
        cid = f"ctx{m}"
        rows = R[at:at + len(group)]
        at += len(group)
        if spec.split == "depth":
            # low-order variants train, higher-order variants test
            shallow = depth[m] <= spec.train_max_mutations
            tr, te = np.flatnonzero(shallow), np.flatnonzero(~shallow)
            if tr.size < 2:
                raise DatasetError(f"context {cid}: fewer than two training variants under the depth split")
        else:
            perm = rng.permutation(len(group))
            n_test = int(round(spec.test_fraction * len(group)))
            n_test = min(n_test, len(group) - 1)
            te, tr = np.sort(perm[:n_test]), np.sort(perm[n_test:])
        train.append(ContextGroup(cid, tuple(group[i] for i in tr), rows[tr]))
        if te.size:
            test.append(ContextGroup(cid, tuple(group[i] for i in te), rows[te]))
    return Landscape(RewardDataset(objectives, tuple(train), vocab), RewardDataset(objectives, tuple(test), vocab)
                     if test else None, spec, wild, feats, center, transform)


def gen_concave_front(n_points: int, q: float = 4.0) -> np.ndarray:
    """``n_points`` on ``(cos(t)**q, sin(t)**q)`` for an even grid of ``t`` in ``[0, pi/2]``.

    For ``q > 2`` the curve bows toward the origin, so the front is concave
    (the attainable set is non-convex) and every interior point lies strictly
    below the chord between its neighbours.
    """
    if n_points < 3:
        raise ValueError("n_points must be >= 3")
    if not q > 2:
        raise ValueError("q must exceed 2 for a concave front")
    t = np.linspace(0.0, math.pi / 2, n_points)
    c, s = np.cos(t), np.sin(t)
    c[-1], s[0] = 0.0, 0.0
    return np.column_stack([c ** q, s ** q])


def save_spec(spec: SyntheticSpec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
