import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tcheby._kernels import backends
from tcheby.core import ContextGroup, RewardDataset, Vocabulary

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(params=sorted(backends()))
def backend(request):
    return backends()[request.param]


def random_dataset(rng, k=2, n_groups=2, n_items=6, alphabet="ACG", min_len=1, max_len=4):
    vocab = Vocabulary(alphabet)
    groups = []
    for m in range(n_groups):
        seqs = set()
        while len(seqs) < n_items:
            L = int(rng.integers(min_len, max_len + 1))
            seqs.add("".join(rng.choice(list(alphabet), size=L)))
        seqs = tuple(sorted(seqs))
        groups.append(ContextGroup(f"c{m}", seqs, rng.normal(size=(n_items, k)) * rng.uniform(0.5, 3, size=k)))
    return RewardDataset(tuple(f"o{i}" for i in range(k)), tuple(groups), vocab)


@pytest.fixture
def small_dataset():
    return random_dataset(np.random.default_rng(0))


def rel_err(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


def central_diff(f, x, h=1e-5):
    x = np.array(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g
