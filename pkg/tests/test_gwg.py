import itertools
import time

import numpy as np
import pytest

from tcheby.core import Vocabulary
from tcheby.gwg import (DEFAULT_BURN_IN, PROTOCOL, GwgState, accept, acceptance_probability, energy, hamming,
                        proposal_logprobs, propose, run_trajectories, transition_matrix, write_samples)
from tcheby.policy import SequencePolicy, log_prob


def toy_policy(seed=0, letters="ACG", max_len=3, scale=1.0):
    return SequencePolicy.random(Vocabulary(letters), max_len, np.random.default_rng(seed), scale=scale)


def test_energy_is_nll():
    pol = toy_policy(max_len=6)
    assert energy(pol, None, "ACGA") == pytest.approx(-log_prob(pol, None, "ACGA"), rel=1e-13)


def test_uniform_model_proposal_is_uniform():
    pol = SequencePolicy.uniform(Vocabulary("ACGT"), 8)
    lq = proposal_logprobs(pol, None, "ACGTA", 2.0)
    q = np.exp(lq)
    cur = pol.vocab.encode("ACGTA")
    assert np.all(q[np.arange(5), cur] == 0)
    off = np.ones_like(q, dtype=bool)
    off[np.arange(5), cur] = False
    np.testing.assert_allclose(q[off], 1 / (5 * 3), atol=1e-9)


@pytest.mark.parametrize("L,letters", [(1, "AC"), (3, "ACG"), (5, "ACGTD")])
def test_proposal_normalized(L, letters):
    pol = toy_policy(seed=L, letters=letters, max_len=6, scale=2.0)
    rng = np.random.default_rng(L)
    seq = "".join(rng.choice(list(letters), size=L))
    for temp in (0.3, 1.0, 5.0):
        assert np.exp(proposal_logprobs(pol, None, seq, temp)).sum() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        proposal_logprobs(pol, None, seq, 0.0)


def test_hot_proposal_approaches_uniform():
    pol = toy_policy(seed=1, letters="ACGT", max_len=6, scale=3.0)
    tv = []
    for temp in (1.0, 10.0, 1e3, 1e6):
        q = np.exp(proposal_logprobs(pol, None, "ACGTA", temp)).ravel()
        q = q[q > 0]
        tv.append(0.5 * np.abs(q - 1 / q.size).sum())
    assert tv == sorted(tv, reverse=True) and tv[-1] < 1e-5


def test_accept_extremes():
    pol = SequencePolicy.uniform(Vocabulary("ACG"), 3)
    st = GwgState.start(pol, None, "AAA")
    assert acceptance_probability(st, "ACA", -1.0, -1.0, pol, None) == 1.0
    hard = toy_policy(seed=2)
    hard.init[0, 1] = -500.0  # a leading C is essentially impossible
    st = GwgState.start(hard, None, "AAA")
    assert acceptance_probability(st, "CAA", -1.0, -1.0, hard, None) < 1e-100
    with pytest.raises(ValueError):
        accept(st, "AA", 0.0, 0.0, hard, None, np.random.default_rng(0))


def test_step_energy_bookkeeping():
    pol = toy_policy(seed=3, letters="ACGT", max_len=8)
    rng = np.random.default_rng(0)
    st = GwgState.start(pol, None, "ACGTACG")
    for _ in range(200):
        cand, f, r = propose(st, pol, None, 2.0, rng)
        assert hamming(cand, st.sequence) == 1
        st = accept(st, cand, f, r, pol, None, rng)
        assert abs(st.energy - energy(pol, None, st.sequence)) <= 1e-9
    assert st.step == 200 and st.n_mutations == hamming(st.sequence, "ACGTACG")


def test_detailed_balance_27_states():
    pol = toy_policy(seed=4, scale=1.5)
    states, P, E = transition_matrix(pol, None, 3, 2.0)
    assert len(states) == 27
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    assert P.min() >= 0
    pi = np.exp(-E - np.logaddexp.reduce(-E))
    flow = pi[:, None] * P
    assert np.abs(flow - flow.T).max() <= 1e-9


def test_empirical_stationary_distribution():
    pol = toy_policy(seed=4, scale=1.5)
    states, _, E = transition_matrix(pol, None, 3, 2.0)
    target = np.exp(-E - np.logaddexp.reduce(-E))
    t0 = time.perf_counter()
    samples = run_trajectories(pol, None, "AAA", 1, 100_000, 3, 2.0, np.random.default_rng(0), burn_in=0.01)
    elapsed = time.perf_counter() - t0
    index = {s: i for i, s in enumerate(states)}
    counts = np.bincount([index[s.sequence] for s in samples], minlength=27)
    tv = 0.5 * np.abs(counts / counts.sum() - target).sum()
    assert tv <= 0.05 and elapsed < 30


def test_run_trajectories_trivia(tmp_path):
    pol = toy_policy(seed=5, letters="ACGT", max_len=10)
    out = run_trajectories(pol, None, "ACGTACGT", 3, 0, 5, rng=np.random.default_rng(0))
    assert [s.sequence for s in out] == ["ACGTACGT"] * 3 and all(s.step == 0 for s in out)
    out = run_trajectories(pol, None, "ACGTACGT", 4, 30, 0, rng=np.random.default_rng(0))
    assert {s.sequence for s in out} <= {"ACGTACGT"}
    out = run_trajectories(pol, None, "ACGTACGT", 4, 50, 2, rng=np.random.default_rng(0))
    assert all(s.n_mutations <= 2 and s.step >= int(DEFAULT_BURN_IN * 50) for s in out)
    assert {s.trajectory for s in out} <= {0, 1, 2, 3}
    for s in out:
        assert abs(s.energy - energy(pol, None, s.sequence)) <= 1e-9
    write_samples(out, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "trajectory,step,sequence,energy,n_mutations"
    assert PROTOCOL == {"n_trajectories": 1500, "n_steps": 300, "max_mutations": 10}


def test_run_trajectories_deterministic_across_workers():
    pol = toy_policy(seed=6, letters="ACGT", max_len=10)
    a = run_trajectories(pol, None, "ACGTACGT", 6, 40, 8, rng=np.random.default_rng(1), workers=1)
    b = run_trajectories(pol, None, "ACGTACGT", 6, 40, 8, rng=np.random.default_rng(1), workers=4)
    assert a == b
    c = run_trajectories(pol, None, "ACGTACGT", 6, 40, 8, rng=np.random.default_rng(2), workers=1)
    assert a != c


def test_hamming():
    assert hamming("ACG", "AGG") == 1
    with pytest.raises(ValueError):
        hamming("A", "AC")
    assert all(hamming(a, a) == 0 for a in map("".join, itertools.product("AC", repeat=3)))
