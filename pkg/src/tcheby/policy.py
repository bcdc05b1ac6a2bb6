"""Toy context-conditioned first-order Markov sequence policy.

The policy plays the role of the language model: exact log-likelihoods,
analytic parameter gradients, nucleus sampling, and an energy gradient with
respect to a relaxed one-hot encoding for gradient-informed MCMC.

Parameters live in one flat vector so optimizers can treat them uniformly:
``init`` logits ``(C, V)`` followed by ``trans`` logits ``(C, V, V)``, one
block per context class. ``V`` counts the letters plus EOS.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import log_softmax, softmax

from . import _kernels
from .core import DatasetError, RewardDataset, Vocabulary

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Context:
    context_id: str = ""
    prompt: str = ""


@dataclass
class SequencePolicy:
    vocab: Vocabulary
    max_len: int
    theta: np.ndarray
    context_classes: dict[str, int] = field(default_factory=dict)
    n_classes: int = 1

    def __post_init__(self):
        if self.max_len < 1:
            raise ValueError("max_len must be positive")
        V = self.vocab.size
        expected = self.n_classes * V * (V + 1)
        self.theta = np.ascontiguousarray(self.theta, dtype=np.float64)
        if self.theta.shape != (expected,):
            raise ValueError(f"theta must have {expected} entries, got {self.theta.shape}")
        if any(not 0 <= c < self.n_classes for c in self.context_classes.values()):
            raise ValueError("context class index out of range")

    @classmethod
    def uniform(cls, vocab: Vocabulary, max_len: int, n_classes: int = 1,
                context_classes: dict[str, int] | None = None) -> "SequencePolicy":
        V = vocab.size
        return cls(vocab, max_len, np.zeros(n_classes * V * (V + 1)), dict(context_classes or {}), n_classes)

    @classmethod
    def random(cls, vocab: Vocabulary, max_len: int, rng: np.random.Generator, scale: float = 1.0,
               n_classes: int = 1) -> "SequencePolicy":
        V = vocab.size
        return cls(vocab, max_len, scale * rng.standard_normal(n_classes * V * (V + 1)), {}, n_classes)

    @property
    def init(self) -> np.ndarray:
        C, V = self.n_classes, self.vocab.size
        return self.theta[: C * V].reshape(C, V)

    @property
    def trans(self) -> np.ndarray:
        C, V = self.n_classes, self.vocab.size
        return self.theta[C * V:].reshape(C, V, V)

    def log_tables(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.ascontiguousarray(log_softmax(self.init, axis=-1)),
                np.ascontiguousarray(log_softmax(self.trans, axis=-1)))

    def prob_tables(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.ascontiguousarray(softmax(self.init, axis=-1)),
                np.ascontiguousarray(softmax(self.trans, axis=-1)))

    def copy(self) -> "SequencePolicy":
        return copy.deepcopy(self)

    def class_of(self, context) -> int:
        cid = getattr(context, "context_id", context) if context is not None else None
        return self.context_classes.get(cid, 0)

    def start_state(self, context) -> int:
        prompt = getattr(context, "prompt", "") if context is not None else ""
        if not prompt:
            return -1
        return int(self.vocab.encode(prompt[-1])[0])

    def start_row(self, context) -> tuple[np.ndarray, np.ndarray]:
        """Log-prob row for the first token and the class's transition table."""
        lpi, lpt = self.log_tables()
        c, s = self.class_of(context), self.start_state(context)
        first = lpi[c] if s < 0 else lpt[c, s]
        return np.ascontiguousarray(first), np.ascontiguousarray(lpt[c])


def _encode(policy: SequencePolicy, sequences) -> tuple[np.ndarray, np.ndarray]:
    arrays = []
    for s in sequences:
        a = policy.vocab.encode(s) if isinstance(s, str) else np.asarray(s, dtype=np.int64)
        if a.size and (a.min() < 0 or a.max() >= policy.vocab.n_letters):
            raise DatasetError("token index outside the letter range")
        if a.size > policy.max_len:
            raise DatasetError(f"sequence of length {a.size} exceeds max_len={policy.max_len}")
        arrays.append(a)
    lengths = np.array([a.size for a in arrays], dtype=np.int64)
    offsets = np.zeros(len(arrays) + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    tokens = np.concatenate(arrays).astype(np.int64) if arrays else np.zeros(0, dtype=np.int64)
    return tokens, offsets


@dataclass(frozen=True)
class EncodedBatch:
    """Sequences packed for the kernels; reusable across parameter updates."""

    cls: np.ndarray
    start: np.ndarray
    tokens: np.ndarray
    offsets: np.ndarray

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.offsets)

    def __len__(self):
        return self.cls.shape[0]


def encode_batch(policy: SequencePolicy, contexts: Sequence, sequences: Sequence) -> EncodedBatch:
    if len(contexts) != len(sequences):
        raise ValueError("contexts and sequences must have equal length")
    tokens, offsets = _encode(policy, sequences)
    cls = np.array([policy.class_of(c) for c in contexts], dtype=np.int64)
    start = np.array([policy.start_state(c) for c in contexts], dtype=np.int64)
    return EncodedBatch(cls, start, tokens, offsets)


def log_prob_encoded(policy: SequencePolicy, batch: EncodedBatch) -> np.ndarray:
    lpi, lpt = policy.log_tables()
    return _kernels.markov_logprob(lpi, lpt, batch.cls, batch.start, batch.tokens, batch.offsets,
                                   policy.vocab.eos, policy.max_len)


def grad_encoded(policy: SequencePolicy, batch: EncodedBatch, coefs) -> np.ndarray:
    """``sum_j coefs[j] * grad log pi(seq_j)`` as a flat parameter-shaped vector."""
    pi, pt = policy.prob_tables()
    C, V = policy.n_classes, policy.vocab.size
    g_init = np.zeros((C, V))
    g_trans = np.zeros((C, V, V))
    _kernels.markov_grad(pi, pt, batch.cls, batch.start, batch.tokens, batch.offsets,
                         np.ascontiguousarray(coefs, dtype=np.float64), policy.vocab.eos, policy.max_len,
                         g_init, g_trans)
    return np.concatenate([g_init.ravel(), g_trans.ravel()])


def log_prob(policy: SequencePolicy, context, sequence) -> float:
    return float(log_prob_encoded(policy, encode_batch(policy, [context], [sequence]))[0])


def log_prob_batch(policy: SequencePolicy, contexts: Sequence, sequences: Sequence) -> np.ndarray:
    return log_prob_encoded(policy, encode_batch(policy, contexts, sequences))


def log_prob_grad(policy: SequencePolicy, context, sequence) -> np.ndarray:
    return grad_encoded(policy, encode_batch(policy, [context], [sequence]), np.ones(1))


def sample(policy: SequencePolicy, context, temperature: float = 1.0, top_p: float = 1.0,
           rng: np.random.Generator | None = None, n: int | None = None):
    """Ancestral nucleus sampling. Returns a string, or a list when ``n`` is given."""
    if not 0 < top_p <= 1:
        raise ValueError("top_p must lie in (0, 1]")
    if not temperature > 0:
        raise ValueError("temperature must be > 0")
    rng = rng if rng is not None else np.random.default_rng()
    count = 1 if n is None else n
    first, trans = policy.start_row(context)
    # first step uses the start row; later steps the class transition table
    uniforms = rng.random((count, policy.max_len))
    toks, lengths = _sample_rows(policy, first, trans, temperature, top_p, uniforms)
    out = [policy.vocab.decode(toks[j, : lengths[j]]) for j in range(count)]
    return out[0] if n is None else out


def _sample_rows(policy, first, trans, temperature, top_p, uniforms):
    return _kernels.markov_sample(first, trans, policy.vocab.eos, policy.max_len, float(temperature),
                                  float(top_p), np.ascontiguousarray(uniforms))


def mean_nll(policy: SequencePolicy, dataset: RewardDataset) -> float:
    contexts, seqs = _dataset_items(dataset)
    return float(-log_prob_batch(policy, contexts, seqs).mean())


def _dataset_items(dataset: RewardDataset):
    contexts, seqs = [], []
    for g in dataset.groups:
        ctx = Context(g.context_id, g.prompt)
        for s in g.sequences:
            contexts.append(ctx)
            seqs.append(s)
    return contexts, seqs


def mle_pretrain(dataset: RewardDataset, epochs: int = 300, lr: float = 2.0, max_len: int | None = None,
                 context_classes: dict[str, int] | None = None, n_classes: int = 1,
                 init: SequencePolicy | None = None) -> SequencePolicy:
    """Fit the reference policy by full-batch gradient ascent on mean log-likelihood.

    The objective is concave in the logits, so plain gradient ascent from the
    uniform model never ends above the uniform model's NLL.
    """
    contexts, seqs = _dataset_items(dataset)
    if not seqs:
        raise DatasetError("cannot pretrain on an empty dataset")
    if init is not None:
        policy = init.copy()
    else:
        if max_len is None:
            max_len = max(len(s) for s in seqs) + 1
        policy = SequencePolicy.uniform(dataset.vocab, max_len, n_classes, context_classes)
    batch = encode_batch(policy, contexts, seqs)
    coefs = np.full(len(seqs), 1.0 / len(seqs))
    for _ in range(epochs):
        policy.theta += lr * grad_encoded(policy, batch, coefs)
    return policy


def energy_grad_onehot(policy: SequencePolicy, context, sequence) -> np.ndarray:
    """Gradient of ``-log pi(y|x)`` w.r.t. the relaxed one-hot sequence, shape ``(L, n_letters)``."""
    seq = policy.vocab.encode(sequence) if isinstance(sequence, str) else np.asarray(sequence, dtype=np.int64)
    if seq.size == 0:
        raise DatasetError("empty sequence")
    if seq.min() < 0 or seq.max() >= policy.vocab.n_letters:
        raise DatasetError("token index outside the letter range")
    first, trans = policy.start_row(context)
    return _kernels.energy_grad(first, trans, policy.vocab.eos, policy.max_len, policy.vocab.n_letters, seq)


def relaxed_energy(policy: SequencePolicy, context, onehot: np.ndarray) -> float:
    """Bilinear relaxation of ``-log pi`` evaluated at a real-valued ``(L, n_letters)`` matrix."""
    first, trans = policy.start_row(context)
    nl = policy.vocab.n_letters
    X = np.asarray(onehot, dtype=np.float64)
    T = trans[:nl, :nl]
    e = -X[0] @ first[:nl]
    for t in range(1, X.shape[0]):
        e -= X[t - 1] @ T @ X[t]
    if X.shape[0] < policy.max_len:
        e -= X[-1] @ trans[:nl, policy.vocab.eos]
    return float(e)


def save_policy(policy: SequencePolicy, path) -> None:
    doc = {
        "format": "tcheby-markov-policy",
        "version": FORMAT_VERSION,
        "alphabet": policy.vocab.alphabet,
        "max_len": policy.max_len,
        "n_classes": policy.n_classes,
        "context_classes": dict(sorted(policy.context_classes.items())),
        "init": policy.init.tolist(),
        "trans": policy.trans.tolist(),
    }
    Path(path).write_text(json.dumps(doc, indent=None, separators=(",", ":")) + "\n")


def load_policy(path) -> SequencePolicy:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "tcheby-markov-policy" or doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: not a version-{FORMAT_VERSION} policy checkpoint")
    theta = np.concatenate([np.asarray(doc["init"]).ravel(), np.asarray(doc["trans"]).ravel()])
    return SequencePolicy(Vocabulary(doc["alphabet"]), int(doc["max_len"]), theta,
                          {k: int(v) for k, v in doc["context_classes"].items()}, int(doc["n_classes"]))
