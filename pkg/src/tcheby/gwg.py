"""Gibbs-with-Gradients sampling of substitution variants around a wild type.

The energy is the policy NLL ``E(y) = -log pi(y|x)``. Proposals pick one
(position, token) substitution with probability proportional to
``exp(-dE_hat / temp)``, where ``dE_hat`` is the first-order estimate of the
energy change from the gradient w.r.t. the one-hot encoding; the exact energy
change enters the Metropolis-Hastings test.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .core import DatasetError, worker_count
from .policy import SequencePolicy

DEFAULT_PROPOSAL_TEMP = 2.0
DEFAULT_BURN_IN = 0.1
PROTOCOL = {"n_trajectories": 1500, "n_steps": 300, "max_mutations": 10}


def _tables(policy: SequencePolicy, context):
    return policy.start_row(context)


def _tokens(policy: SequencePolicy, sequence) -> np.ndarray:
    seq = policy.vocab.encode(sequence) if isinstance(sequence, str) else np.asarray(sequence, dtype=np.int64)
    if seq.size == 0 or seq.size > policy.max_len:
        raise DatasetError(f"sequence length {seq.size} outside [1, {policy.max_len}]")
    if seq.min() < 0 or seq.max() >= policy.vocab.n_letters:
        raise DatasetError("token index outside the letter range")
    return seq


def energy(policy: SequencePolicy, context, sequence) -> float:
    S, T = _tables(policy, context)
    return float(_kernels.sequence_energy(S, T, policy.vocab.eos, policy.max_len, _tokens(policy, sequence)))


def proposal_logprobs(policy: SequencePolicy, context, sequence, proposal_temp: float) -> np.ndarray:
    """Log-probabilities of every (position, token) substitution; the current tokens get ``-inf``."""
    if not proposal_temp > 0:
        raise ValueError("proposal_temp must be > 0")
    S, T = _tables(policy, context)
    return _kernels.gwg_proposal_logprobs(S, T, policy.vocab.eos, policy.max_len, policy.vocab.n_letters,
                                          _tokens(policy, sequence), float(proposal_temp))


def hamming(a: str, b: str) -> int:
    if len(a) != len(b):
        raise ValueError("hamming distance needs equal lengths")
    return sum(x != y for x, y in zip(a, b))


@dataclass(frozen=True)
class GwgState:
    sequence: str
    energy: float
    step: int = 0
    trajectory: int = 0
    wild_type: str = ""

    @classmethod
    def start(cls, policy: SequencePolicy, context, wild_type: str, trajectory: int = 0) -> "GwgState":
        return cls(wild_type, energy(policy, context, wild_type), 0, trajectory, wild_type)

    @property
    def n_mutations(self) -> int:
        return hamming(self.sequence, self.wild_type) if self.wild_type else 0


def propose(state: GwgState, policy: SequencePolicy, context, proposal_temp: float,
            rng: np.random.Generator) -> tuple[str, float, float]:
    """Draw a single-site substitution; returns ``(candidate, log q_fwd, log q_rev)``."""
    lq = proposal_logprobs(policy, context, state.sequence, proposal_temp)
    L, n = lq.shape
    flat = np.exp(lq.ravel())
    idx = int(rng.choice(flat.size, p=flat / flat.sum()))
    pos, tok = divmod(idx, n)
    seq = _tokens(policy, state.sequence)
    cand = seq.copy()
    cand[pos] = tok
    lq_rev = proposal_logprobs(policy, context, cand, proposal_temp)
    return policy.vocab.decode(cand), float(lq[pos, tok]), float(lq_rev[pos, seq[pos]])


def accept(state: GwgState, candidate: str, log_q_fwd: float, log_q_rev: float, policy: SequencePolicy,
           context, rng: np.random.Generator) -> GwgState:
    """Metropolis-Hastings step with acceptance ``min(1, exp(-dE) q_rev / q_fwd)``."""
    if len(candidate) != len(state.sequence):
        raise ValueError("substitution moves keep the sequence length fixed")
    e_cand = energy(policy, context, candidate)
    log_a = -(e_cand - state.energy) + log_q_rev - log_q_fwd
    if np.log(rng.random()) < log_a:
        return replace(state, sequence=candidate, energy=e_cand, step=state.step + 1)
    return replace(state, step=state.step + 1)


def acceptance_probability(state: GwgState, candidate: str, log_q_fwd: float, log_q_rev: float,
                           policy: SequencePolicy, context) -> float:
    e_cand = energy(policy, context, candidate)
    return float(min(1.0, np.exp(-(e_cand - state.energy) + log_q_rev - log_q_fwd)))


def transition_matrix(policy: SequencePolicy, context, length: int, proposal_temp: float):
    """Exact GWG transition kernel over all letter sequences of ``length``.

    Returns ``(states, P)`` with ``states`` in lexicographic token order.
    Intended for small spaces (``n_letters ** length`` states).
    """
    n = policy.vocab.n_letters
    grids = np.indices((n,) * length).reshape(length, -1).T
    index = {tuple(s): i for i, s in enumerate(grids)}
    S, T = _tables(policy, context)
    eos, ml = policy.vocab.eos, policy.max_len
    E = np.array([_kernels.sequence_energy(S, T, eos, ml, s) for s in grids])
    LQ = [_kernels.gwg_proposal_logprobs(S, T, eos, ml, n, s, float(proposal_temp)) for s in grids]
    P = np.zeros((len(grids), len(grids)))
    for a, s in enumerate(grids):
        for pos in range(length):
            for tok in range(n):
                if tok == s[pos]:
                    continue
                c = s.copy()
                c[pos] = tok
                b = index[tuple(c)]
                log_a = -(E[b] - E[a]) + LQ[b][pos, s[pos]] - LQ[a][pos, tok]
                P[a, b] = np.exp(LQ[a][pos, tok]) * min(1.0, np.exp(log_a))
        P[a, a] = 1.0 - P[a].sum()
    return [policy.vocab.decode(s) for s in grids], P, E


@dataclass(frozen=True)
class GwgSample:
    trajectory: int
    step: int
    sequence: str
    energy: float
    n_mutations: int


def _run_one(args):
    S, T, eos, max_len, n_letters, seq0, temp, uniforms = args
    return _kernels.gwg_chain(S, T, eos, max_len, n_letters, seq0, temp, uniforms)


def run_trajectories(policy: SequencePolicy, context, wild_type: str, n_trajectories: int, n_steps: int,
                     max_mutations: int, proposal_temp: float = DEFAULT_PROPOSAL_TEMP,
                     rng: np.random.Generator | None = None, burn_in: float = DEFAULT_BURN_IN,
                     thin: int = 1, workers: int | None = None) -> list[GwgSample]:
    """Run independent chains from the wild type and keep nearby post-burn-in states.

    Each trajectory visits steps ``0..n_steps`` (step 0 is the wild type);
    steps before ``int(burn_in * n_steps)`` are dropped, every ``thin``-th of
    the rest is kept, and states more than ``max_mutations`` substitutions
    from the wild type are filtered out. Each trajectory draws from its own
    child generator, so results do not depend on the worker count.
    """
    if n_trajectories < 0 or n_steps < 0 or max_mutations < 0:
        raise ValueError("counts must be non-negative")
    if not 0 <= burn_in < 1 or thin < 1:
        raise ValueError("burn_in must lie in [0, 1) and thin >= 1")
    if not proposal_temp > 0:
        raise ValueError("proposal_temp must be > 0")
    rng = rng if rng is not None else np.random.default_rng(0)
    wt = _tokens(policy, wild_type)
    S, T = _tables(policy, context)
    eos, ml, n = policy.vocab.eos, policy.max_len, policy.vocab.n_letters
    e0 = float(_kernels.sequence_energy(S, T, eos, ml, wt))
    children = rng.spawn(n_trajectories)
    jobs = [(S, T, eos, ml, n, wt, float(proposal_temp), c.random((n_steps, 2))) for c in children]
    with ThreadPoolExecutor(max_workers=worker_count(workers)) as pool:
        chains = list(pool.map(_run_one, jobs))
    first = int(burn_in * n_steps)
    out = []
    for j, (states, energies, _) in enumerate(chains):
        for step in range(first, n_steps + 1, thin):
            seq = wt if step == 0 else states[step - 1]
            n_mut = int(np.count_nonzero(seq != wt))
            if n_mut <= max_mutations:
                e = e0 if step == 0 else float(energies[step - 1])
                out.append(GwgSample(j, step, policy.vocab.decode(seq), e, n_mut))
    return out


def write_samples(samples: list[GwgSample], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trajectory", "step", "sequence", "energy", "n_mutations"])
        for s in samples:
            w.writerow([s.trajectory, s.step, s.sequence, repr(s.energy), s.n_mutations])
