import numpy as np
import pytest
from scipy.stats import spearmanr

from tcheby.core import load_dataset, save_dataset
from tcheby.evaluate import pareto_mask
from tcheby.synth import InfeasibleCorrelation, SyntheticSpec, gen_concave_front, gen_landscape, save_spec


def all_rewards(ds):
    return np.vstack([g.rewards for g in ds.groups])


def test_perfect_correlation_gives_spearman_one():
    land = gen_landscape(SyntheticSpec(k=2, correlation=1.0, noise=0.0, items_per_context=200, alphabet="ACGT"))
    R = all_rewards(land.train)
    assert spearmanr(R[:, 0], R[:, 1]).statistic == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_anticorrelated_landscape_hits_target(seed):
    land = gen_landscape(SyntheticSpec(k=2, correlation=-0.8, items_per_context=1000, seq_len=16,
                                       test_fraction=0.0, seed=seed))
    R = all_rewards(land.train)
    assert len(R) == 1000
    assert -0.9 <= spearmanr(R[:, 0], R[:, 1]).statistic <= -0.7


@pytest.mark.parametrize("target", [0.0, 0.5])
def test_other_correlation_targets(target):
    land = gen_landscape(SyntheticSpec(k=2, correlation=target, items_per_context=1000, seq_len=16,
                                       test_fraction=0.0))
    R = all_rewards(land.train)
    assert abs(spearmanr(R[:, 0], R[:, 1]).statistic - target) <= 0.1


def test_context_grouping_preserved_in_splits():
    spec = SyntheticSpec(k=2, n_contexts=2, items_per_context=50, seq_len=10, alphabet="ACGT")
    land = gen_landscape(spec)
    assert [g.context_id for g in land.train.groups] == ["ctx0", "ctx1"]
    assert [g.context_id for g in land.test.groups] == ["ctx0", "ctx1"]
    for tr, te in zip(land.train.groups, land.test.groups):
        assert tr.size + te.size == 50 and not set(tr.sequences) & set(te.sequences)
        wt = land.wild_types[tr.context_id]
        assert all(sum(a != b for a, b in zip(s, wt)) >= 1 for s in tr.sequences + te.sequences)


def test_depth_split():
    spec = SyntheticSpec(items_per_context=200, seq_len=12, max_mutations=3, split="depth", train_max_mutations=1)
    land = gen_landscape(spec)
    wt = land.wild_types["ctx0"]
    depth = lambda s: sum(a != b for a, b in zip(s, wt))  # noqa: E731
    assert all(depth(s) == 1 for s in land.train.groups[0].sequences)
    assert all(depth(s) > 1 for s in land.test.groups[0].sequences)


def test_seeded_bit_reproducible(tmp_path):
    spec = SyntheticSpec(k=3, correlation=0.2, n_contexts=2, items_per_context=40, seq_len=8, seed=5)
    a, b = gen_landscape(spec), gen_landscape(spec)
    save_dataset(a.train, tmp_path / "a.csv")
    save_dataset(b.train, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    c = gen_landscape(SyntheticSpec(**{**spec.to_dict(), "seed": 6}))
    assert not np.array_equal(all_rewards(a.train), all_rewards(c.train))
    back = load_dataset(tmp_path / "a.csv")
    np.testing.assert_array_equal(all_rewards(back), all_rewards(a.train))
    save_spec(spec, tmp_path / "spec.json")
    assert SyntheticSpec.from_dict(__import__("json").loads((tmp_path / "spec.json").read_text())) == spec


def test_mean_reward_matches_noise_free_data():
    land = gen_landscape(SyntheticSpec(k=2, correlation=0.3, noise=0.0, items_per_context=60, seq_len=10))
    g = land.train.groups[0]
    np.testing.assert_allclose(land.mean_reward(g.sequences), g.rewards, rtol=1e-10, atol=1e-12)


def test_concave_landscape_is_positive():
    land = gen_landscape(SyntheticSpec(front="concave", items_per_context=60, seq_len=10))
    assert np.all(all_rewards(land.train) > 0)


def test_infeasible_correlations():
    with pytest.raises(InfeasibleCorrelation):
        gen_landscape(SyntheticSpec(k=3, correlation=-0.9, noise=0.0, items_per_context=20, seq_len=8))
    with pytest.raises(InfeasibleCorrelation):
        gen_landscape(SyntheticSpec(k=2, correlation=-1.0, noise=0.1, items_per_context=20, seq_len=8))
    for bad in (dict(correlation=1.5), dict(k=0), dict(items_per_context=0), dict(front="wavy"),
                dict(alphabet="A"), dict(split="depth", train_max_mutations=3, max_mutations=3)):
        with pytest.raises(ValueError):
            SyntheticSpec(**bad)


@pytest.mark.parametrize("n", [3, 11, 50])
def test_concave_front_shape(n):
    Y = gen_concave_front(n)
    assert Y.shape == (n, 2)
    assert tuple(Y[0]) == (1.0, 0.0) and tuple(Y[-1]) == (0.0, 1.0)
    assert pareto_mask(Y).all()
    for i in range(1, n - 1):
        # the point lies strictly below the chord joining its neighbours
        a, b, p = Y[i - 1], Y[i + 1], Y[i]
        cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
        assert cross > 0


def test_concave_front_errors():
    with pytest.raises(ValueError):
        gen_concave_front(2)
    with pytest.raises(ValueError):
        gen_concave_front(5, q=2.0)
