import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from mpmath import mp

from tcheby.core import ALGORITHMS, ContextGroup, RewardDataset, RunConfig, Vocabulary, compute_reward_stats
from tcheby.losses import (PreferencePair, build_pairs, dpo_loss, odpo_loss, prepare_pairs, squared_pref_loss,
                           stomp_loss)
from tcheby.policy import SequencePolicy
from tcheby.scalarize import rho, scalarize_group
from tcheby.trainer import evaluate_loss, prepare_training

from conftest import central_diff, random_dataset, rel_err


def toy(seed, algorithm="stomp", k=2, alpha=0.3, clamp=1.0, n_items=5, lam=None, **kw):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, k=k, n_groups=2, n_items=n_items, max_len=4)
    ref = SequencePolicy.random(ds.vocab, 5, rng, scale=0.5)
    if lam is None:
        lam = tuple(rng.dirichlet(np.ones(k)) * 0.9 + 0.1 / k)
    cfg = RunConfig(algorithm=algorithm, alpha=alpha, beta=0.7, gamma=0.3, delta=0.05, tau=0.8, lam=lam,
                    clamp=clamp, max_pairs_per_context=None, **kw)
    data = prepare_training(cfg, ds, ref, np.random.default_rng(seed))
    pol = ref.copy()
    pol.theta += rng.normal(scale=0.5, size=pol.theta.shape)
    return cfg, ds, ref, pol, data


def with_theta(pol, theta):
    p = pol.copy()
    p.theta = np.array(theta)
    return p


def test_build_pairs_examples():
    assert build_pairs([1.0, 1.0], 0.0) == []
    pairs = build_pairs([3.0, 1.0], 1.0)
    assert pairs == [PreferencePair(0, 0, 1, 2.0)]
    R = [0.0, 1.0, 2.0, 3.0]
    pairs = build_pairs(R, 0.0)
    brute = {(w, l) for w in range(4) for l in range(4) if R[w] - R[l] > 0}
    assert len(pairs) == 6 and {(p.winner, p.loser) for p in pairs} == brute
    with pytest.raises(ValueError):
        build_pairs(R, -1.0)
    with pytest.raises(ValueError):
        PreferencePair(0, 1, 1, 0.0)


def test_build_pairs_subsample_seeded():
    R = np.arange(30.0)
    a = build_pairs(R, 0.5, 20, np.random.default_rng(1))
    b = build_pairs(R, 0.5, 20, np.random.default_rng(1))
    assert a == b and len(a) == 20 and all(p.margin > 0.5 for p in a)


def single_pair_batch(policy_ref, r_w=0.0, r_l=0.0, seqs=("AC", "CA")):
    ds = RewardDataset(("a",), (ContextGroup("g", seqs, [[r_w], [r_l]]),), policy_ref.vocab)
    pair = [PreferencePair(0, 0, 1, r_w - r_l)]
    return prepare_pairs(policy_ref, ds, pair, scalarized=[np.array([r_w, r_l])],
                         rho=[np.array([[r_w], [r_l]])])


def test_at_reference_losses_are_ln2_or_zero():
    ref = SequencePolicy.random(Vocabulary("AC"), 4, np.random.default_rng(0))
    b = single_pair_batch(ref)
    assert dpo_loss(ref, b, 0.1).total == pytest.approx(math.log(2), abs=1e-15)
    assert odpo_loss(ref, b, 0.1, 0.0).total == pytest.approx(math.log(2), abs=1e-15)
    assert squared_pref_loss(ref, b, 0.1, 0.0).total == 0.0
    assert stomp_loss(ref, b, 0.0, 0.1, 0.2, 0.0, [1.0], 1.0).total == pytest.approx(math.log(2), abs=1e-15)


def manual_logprob(pol, seq):
    """Markov log-likelihood written out step by step from softmax tables."""
    from scipy.special import log_softmax
    init, trans = log_softmax(pol.init[0]), log_softmax(pol.trans[0], axis=-1)
    toks = list(pol.vocab.encode(seq))
    lp = init[toks[0]] + sum(trans[a, b] for a, b in zip(toks, toks[1:]))
    if len(toks) < pol.max_len:
        lp += trans[toks[-1], pol.vocab.eos]
    return lp


def shifted(seed):
    ref = SequencePolicy.random(Vocabulary("AC"), 4, np.random.default_rng(seed))
    pol = ref.copy()
    pol.init[0] += [1.0, -1.0, 0.0]
    d = (manual_logprob(pol, "AC") - manual_logprob(ref, "AC")) - (manual_logprob(pol, "CA") - manual_logprob(ref, "CA"))
    return ref, pol, d


def test_dpo_large_margin():
    ref, pol, d = shifted(1)
    rep = dpo_loss(pol, single_pair_batch(ref), 10.0 / d)
    oracle = float(-mp.log(1 / (1 + mp.e ** -10)))
    assert abs(oracle - 4.54e-5) < 1e-7
    assert rep.total == pytest.approx(oracle, rel=1e-9)


def test_odpo_clamp_and_oracle():
    ref, pol, d = shifted(2)
    beta = 0.2 / d
    # margin - delta = 3.5 exceeds the clamp, so the offset is 1
    b = single_pair_batch(ref, 4.0, 0.0)
    rep = odpo_loss(pol, b, beta, 0.5)
    assert rep.total == pytest.approx(float(mp.log(1 + mp.e ** -(mp.mpf(0.2) - 1))), rel=1e-10)
    unclamped = odpo_loss(pol, b, beta, 0.5, clamp=None).total
    assert unclamped == pytest.approx(float(mp.log(1 + mp.e ** -(mp.mpf(0.2) - 3.5))), rel=1e-10)
    assert squared_pref_loss(pol, b, beta, 0.5).total == pytest.approx((0.2 - 1.0) ** 2, rel=1e-10)
    below = single_pair_batch(ref, 0.8, 0.0)
    assert odpo_loss(pol, below, beta, 0.5).total == pytest.approx(
        float(mp.log(1 + mp.e ** -(mp.mpf(0.2) - 0.3))), rel=1e-10)


@pytest.mark.parametrize("algorithm", ALGORITHMS)
@pytest.mark.parametrize("seed", range(20))
def test_gradients_match_finite_differences(algorithm, seed):
    cfg, ds, ref, pol, data = toy(seed, algorithm, k=2 + seed % 2)
    if len(data.batch) == 0:
        pytest.skip("no pairs")
    rep = evaluate_loss(cfg, pol, data.batch, data.lam)
    fd = central_diff(lambda th: evaluate_loss(cfg, with_theta(pol, th), data.batch, data.lam).total, pol.theta)
    assert rel_err(rep.grad, fd) <= 1e-5
    assert rep.total == pytest.approx(rep.pref_term + cfg.alpha * rep.nll_term, rel=1e-14)


@pytest.mark.parametrize("seed", range(8))
def test_losses_nonnegative(seed):
    for algo in ALGORITHMS:
        cfg, _, _, pol, data = toy(seed, algo)
        rep = evaluate_loss(cfg, pol, data.batch, data.lam)
        assert np.all(rep.per_pair >= 0) and np.isfinite(rep.total)
        if algo != "odpo-sq":
            assert np.all(rep.per_pair > 0)


@pytest.mark.parametrize("seed", range(10))
def test_stomp_uniform_lambda_equals_odpo_on_st_rewards(seed):
    cfg, ds, ref, pol, data = toy(seed, "stomp", k=2, lam=(0.5, 0.5), use_lambda_prime=False)
    b = data.batch
    s = stomp_loss(pol, b, 0.0, cfg.beta, cfg.gamma, cfg.delta, data.lam, cfg.tau, cfg.clamp)
    o = odpo_loss(pol, b, cfg.beta, cfg.delta, cfg.clamp)
    assert s.total == o.total
    np.testing.assert_array_equal(s.grad, o.grad)


@pytest.mark.parametrize("seed", range(10))
def test_stomp_single_objective_reduces_to_odpo_on_rho(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, k=1, n_items=5, max_len=4)
    ref = SequencePolicy.random(ds.vocab, 5, rng)
    pol = with_theta(ref, ref.theta + rng.normal(scale=0.3, size=ref.theta.shape))
    stats = compute_reward_stats(ds, 0.2)
    rhos = [rho(g.rewards, m, stats, warn=False) for m, g in enumerate(ds.groups)]
    pairs = []
    for m in range(len(ds.groups)):
        R = scalarize_group("st", ds.groups[m].rewards, m, [1.0], stats)
        np.testing.assert_allclose(R, rhos[m][:, 0], rtol=1e-14, atol=1e-14)
        pairs += build_pairs(R, 0.1, group_index=m)
    b = prepare_pairs(ref, ds, pairs, scalarized=[r[:, 0] for r in rhos], rho=rhos)
    s = stomp_loss(pol, b, 0.0, 0.5, 0.2, 0.1, [1.0], 1.0)
    o = odpo_loss(pol, b, 0.5, 0.1)
    assert s.total == pytest.approx(o.total, rel=1e-12)
    np.testing.assert_allclose(s.grad, o.grad, rtol=1e-10, atol=1e-12)


def test_stomp_nll_term_counts_winners_per_pair():
    ref = SequencePolicy.random(Vocabulary("AC"), 4, np.random.default_rng(3))
    b = single_pair_batch(ref, 2.0, 0.0)
    r0 = stomp_loss(ref, b, 0.0, 0.1, 0.2, 0.0, [1.0], 1.0)
    r1 = stomp_loss(ref, b, 0.5, 0.1, 0.2, 0.0, [1.0], 1.0)
    lp_w = -r0.nll_term * 2
    assert r1.total - r0.total == pytest.approx(0.5 * -lp_w / 2, rel=1e-12)


@given(st.integers(0, 10_000), st.sampled_from(ALGORITHMS))
def test_item_permutation_invariance(seed, algorithm):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, k=2, n_groups=1, n_items=5, max_len=4)
    ref = SequencePolicy.random(ds.vocab, 5, rng)
    pol = with_theta(ref, ref.theta + rng.normal(scale=0.3, size=ref.theta.shape))
    cfg = RunConfig(algorithm=algorithm, alpha=0.2, beta=0.5, delta=0.1, max_pairs_per_context=None)
    g = ds.groups[0]
    p = rng.permutation(g.size)
    ds2 = RewardDataset(ds.objectives, (ContextGroup("c0", tuple(g.sequences[i] for i in p), g.rewards[p]),),
                        ds.vocab)
    a = prepare_training(cfg, ds, ref, np.random.default_rng(0))
    b = prepare_training(cfg, ds2, ref, np.random.default_rng(0))
    ra = evaluate_loss(cfg, pol, a.batch, a.lam)
    rb = evaluate_loss(cfg, pol, b.batch, b.lam)
    assert ra.total == pytest.approx(rb.total, rel=1e-12, abs=1e-14)
    np.testing.assert_allclose(ra.grad, rb.grad, rtol=1e-10, atol=1e-12)


def test_beta_must_be_positive():
    ref = SequencePolicy.random(Vocabulary("AC"), 4, np.random.default_rng(0))
    b = single_pair_batch(ref)
    for fn in (lambda: dpo_loss(ref, b, 0.0), lambda: odpo_loss(ref, b, -1.0, 0.0),
               lambda: squared_pref_loss(ref, b, 0.0, 0.0),
               lambda: stomp_loss(ref, b, 0.0, 0.0, 0.2, 0.0, [1.0], 1.0)):
        with pytest.raises(ValueError):
            fn()
