import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from mpmath import mp

from tcheby.core import (PRESETS, ConfigError, ContextGroup, DatasetError, PreferenceVector, RewardDataset,
                         RunConfig, Vocabulary, compute_reward_stats, load_dataset, save_dataset, worker_count)
from tcheby.scalarize import rho

from conftest import random_dataset


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_three_rows(tmp_path):
    p = write(tmp_path, "context_id,sequence,a,b\nx,ACD,1,2\nx,AC,3,4\nx,D,5,6\n")
    ds = load_dataset(p)
    assert ds.k == 2 and len(ds.groups) == 1 and ds.groups[0].size == 3
    assert ds.groups[0].sequences == ("ACD", "AC", "D")
    np.testing.assert_array_equal(ds.groups[0].rewards, [[1, 2], [3, 4], [5, 6]])


def test_load_preserves_order_across_groups(tmp_path):
    p = write(tmp_path, "context_id,sequence,a\ny,A,1\nx,C,2\ny,D,3\n")
    ds = load_dataset(p)
    assert [g.context_id for g in ds.groups] == ["y", "x"]
    assert ds.groups[0].sequences == ("A", "D")


@pytest.mark.parametrize("body,needle", [
    ("x,A,nan\n", "row 2"),
    ("x,A,1\nx,C,inf\n", "row 3"),
    ("x,AZ,1\n", "row 2"),
    ("x,A,abc\n", "row 2"),
    ("x,,1\n", "row 2"),
])
def test_load_errors_name_rows(tmp_path, body, needle):
    p = write(tmp_path, "context_id,sequence,a\n" + body)
    with pytest.raises(DatasetError, match=needle):
        load_dataset(p)


def test_load_missing_column_and_empty(tmp_path):
    with pytest.raises(DatasetError, match="missing column"):
        load_dataset(write(tmp_path, "context_id,a\nx,1\n"))
    with pytest.raises(DatasetError, match="empty"):
        load_dataset(write(tmp_path, "", "e.csv"))
    with pytest.raises(DatasetError, match="no data rows"):
        load_dataset(write(tmp_path, "context_id,sequence,a\n", "h.csv"))
    with pytest.raises(DatasetError, match="not found"):
        load_dataset(tmp_path / "nope.csv")


def test_pbrr_sized_file(tmp_path):
    rng = np.random.default_rng(1)
    rows = ["context_id,sequence,pb,zn"]
    for _ in range(1155):
        s = "".join(rng.choice(list("ACDEFGHIKLMNPQRSTVWY"), size=10))
        rows.append(f"pbrr,{s},{rng.normal()!r},{rng.normal()!r}")
    ds = load_dataset(write(tmp_path, "\n".join(rows) + "\n"))
    assert len(ds.groups) == 1 and ds.groups[0].size == 1155 and ds.k == 2


def test_save_load_roundtrip(tmp_path):
    ds = random_dataset(np.random.default_rng(3), alphabet="ACDEFGHIKLMNPQRSTVWY")
    save_dataset(ds, tmp_path / "r.csv")
    back = load_dataset(tmp_path / "r.csv")
    assert back.objectives == ds.objectives
    for a, b in zip(ds.groups, back.groups):
        assert a.sequences == b.sequences
        np.testing.assert_array_equal(a.rewards, b.rewards)


def test_dataset_invariants():
    v = Vocabulary("AC")
    with pytest.raises(DatasetError):
        RewardDataset(("a",), (ContextGroup("x", ("A",), [[1.0]]), ContextGroup("x", ("C",), [[1.0]])), v)
    with pytest.raises(DatasetError):
        RewardDataset(("a", "b"), (ContextGroup("x", ("A",), [[1.0]]),), v)
    with pytest.raises(DatasetError):
        RewardDataset(("a",), (ContextGroup("x", ("AG",), [[1.0]]),), v)
    with pytest.raises(DatasetError):
        ContextGroup("x", (), np.zeros((0, 1)))


def one_group(values, gamma=1.0):
    r = np.array(values, dtype=float).reshape(-1, 1)
    seqs = tuple("A" * (i + 1) for i in range(len(values)))
    return RewardDataset(("a",), (ContextGroup("g", seqs, r),), Vocabulary("A"))


def test_log_partition_examples():
    # rewards {0,0}: sigma is zero, so check the logsumexp through a second objective
    ds = RewardDataset(("a", "b"), (ContextGroup("g", ("A", "AA"), [[0.0, 1.0], [0.0, -1.0]]),), Vocabulary("A"))
    with pytest.raises(DatasetError, match="zero"):
        compute_reward_stats(ds, 1.0)
    # direct example through the sigma = 1 case: rewards {1,2,3} have population std sqrt(2/3)
    ds = one_group([1, 2, 3])
    sigma = math.sqrt(2 / 3)
    stats = compute_reward_stats(ds, 1.0 / sigma)  # gamma * sigma = 1
    mp.dps = 30
    oracle = float(mp.log(mp.e + mp.e ** 2 + mp.e ** 3))
    assert abs(oracle - 3.407606) < 1e-6
    assert stats.log_partition[0, 0] == pytest.approx(oracle, abs=1e-12)


def test_log_partition_symmetric_and_single():
    # group 1 has {0,0} on objective a; group 2 gives objective a nonzero variance
    ds = RewardDataset(("a",), (ContextGroup("g1", ("A", "AA"), [[0.0], [0.0]]),
                                ContextGroup("g2", ("A", "AA"), [[1.0], [-1.0]])), Vocabulary("A"))
    stats = compute_reward_stats(ds, 1.0)
    assert stats.log_partition[0, 0] == pytest.approx(math.log(2), abs=1e-15)
    ds = RewardDataset(("a",), (ContextGroup("g1", ("A",), [[0.0]]),
                                ContextGroup("g2", ("A", "AA"), [[1.0], [-1.0]])), Vocabulary("A"))
    stats = compute_reward_stats(ds, 1.0)
    assert stats.log_partition[0, 0] == 0.0


def test_hierarchical_sigma_mu():
    ds = RewardDataset(("a",), (ContextGroup("g1", ("A", "AA"), [[0.0], [2.0]]),
                                ContextGroup("g2", ("A", "AA", "AAA"), [[1.0], [1.0], [4.0]])), Vocabulary("A"))
    stats = compute_reward_stats(ds, 0.5)
    assert stats.sigma[0] ** 2 == pytest.approx((1.0 + 2.0) / 2)
    assert stats.mu[0] == pytest.approx((1.0 + 2.0) / 2)


@given(st.integers(0, 10_000), st.integers(1, 3), st.floats(0.05, 3.0))
def test_stats_invariants(seed, k, gamma):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, k=k, n_groups=int(rng.integers(1, 4)), n_items=int(rng.integers(2, 7)))
    stats = compute_reward_stats(ds, gamma)
    assert np.all(stats.sigma > 0)
    assert np.all(stats.lambda_bar > 0) and abs(stats.lambda_bar.sum() - 1) < 1e-12
    for m, g in enumerate(ds.groups):
        assert np.all(g.rewards.max(axis=0) / (gamma * stats.sigma) <= stats.log_partition[m] + 1e-12)
        assert np.all(rho(g.rewards, m, stats, warn=False) <= 1e-12)
    # equal-means property of lambda_bar
    means = np.mean([np.mean(-stats.lambda_bar * rho(g.rewards, m, stats, warn=False), axis=0)
                     for m, g in enumerate(ds.groups)], axis=0)
    assert np.ptp(means) <= 1e-9 * max(1.0, float(np.abs(means).max()))


@given(st.integers(0, 10_000))
def test_stats_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, n_groups=3)
    a = compute_reward_stats(ds, 0.2)
    groups = []
    for g in reversed(ds.groups):
        p = rng.permutation(g.size)
        groups.append(ContextGroup(g.context_id, tuple(g.sequences[i] for i in p), g.rewards[p]))
    b = compute_reward_stats(RewardDataset(ds.objectives, tuple(groups), ds.vocab), 0.2)
    np.testing.assert_allclose(a.sigma, b.sigma, rtol=1e-12)
    np.testing.assert_allclose(a.mu, b.mu, rtol=1e-12)
    np.testing.assert_allclose(a.lambda_bar, b.lambda_bar, rtol=1e-12)
    np.testing.assert_allclose(a.log_partition, b.log_partition[::-1], rtol=1e-12)


def test_single_item_group_warns(caplog):
    ds = RewardDataset(("a",), (ContextGroup("g1", ("A",), [[0.0]]),
                                ContextGroup("g2", ("A", "AA"), [[1.0], [-1.0]])), Vocabulary("A"))
    with caplog.at_level("WARNING"):
        compute_reward_stats(ds, 1.0)
    assert "single item" in caplog.text


def test_preference_vector():
    assert np.allclose(PreferenceVector.parse("1/3,2/3").weights, [1 / 3, 2 / 3])
    with pytest.raises(ValueError):
        PreferenceVector(np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        PreferenceVector(np.array([0.5, 0.6]))
    assert PreferenceVector(np.array([0.5, 0.5])).label() == "0.5000-0.5000"


def test_run_config_validation():
    RunConfig()
    for bad in (dict(beta=0), dict(gamma=-1), dict(tau=0), dict(alpha=-0.1), dict(delta=-1),
                dict(algorithm="ppo"), dict(checkpoints=(0.5, 0.4)), dict(checkpoints=(0.0, 1.0)),
                dict(lam=(0.5, 0.6))):
        with pytest.raises(ConfigError):
            RunConfig(**bad)
    with pytest.raises(ConfigError, match="unknown"):
        RunConfig.from_dict({"bogus": 1})
    c = RunConfig(seed=3)
    assert RunConfig.from_dict(c.to_dict()) == c
    assert c.digest() == RunConfig(seed=3).digest() != RunConfig(seed=4).digest()


def test_presets_match_hyperparameter_table():
    assert PRESETS["pbrr"] == dict(alpha=0.02, beta=0.1, gamma=0.2, delta=1.0, tau=1.0)
    assert PRESETS["amylase"]["delta"] == 0.5 and PRESETS["amylase"]["beta"] == 0.05
    full = PRESETS["full-schedule"]
    assert (full["total_steps"], full["batch_size"], full["warmup_steps"]) == (782, 64, 79)
    assert (full["peak_lr"], full["final_lr"]) == (1e-5, 5e-6)
    RunConfig(**PRESETS["full-schedule"])


def test_worker_count(monkeypatch):
    monkeypatch.setenv("TCHEBY_THREADS", "2")
    assert worker_count(8) == 2
    monkeypatch.setenv("TCHEBY_THREADS", "x")
    with pytest.raises(ConfigError):
        worker_count()
