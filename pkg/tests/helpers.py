"""Independent reference computations shared by the unit and acceptance tests."""
import numpy as np

from semibandit.core import PolicyClass, SimplexWeights
from semibandit.environments import Instance
from semibandit.fw_objective import Phase1Batch
from semibandit.oracle import WeightedExample, erm


def random_class(K, m, X, n, rng):
    return PolicyClass(np.sort(np.argsort(rng.random((n, X, K)), axis=2)[:, :, :m], axis=2), K)


def random_bernoulli_instance(K, m, s, X, rng):
    means = rng.random((X, K))
    means *= min(1.0, s / max(means.sum(axis=1).max(), 1e-12))
    return Instance.bernoulli(rng.dirichlet(np.ones(X)), means, m, s)


def random_batch(inst, cls, n, rng):
    from semibandit.core import sample_uniform_actions

    contexts, rewards = inst.sample(n, rng)
    return Phase1Batch.from_rounds(contexts, rewards, sample_uniform_actions(cls.K, cls.m, n, rng))


def interior_point(n, rng):
    return SimplexWeights.normalized(rng.dirichlet(np.ones(n)) + 0.05)


def erm_from_batch(batch, cls, p, gamma):
    """ERM over per-record importance-weighted rewards, one example per record."""
    K, m = cls.K, cls.m
    data = []
    for x, a, obs in zip(batch.contexts, batch.actions, batch.observed):
        rhat = {}
        for y, r in zip(a, obs):
            q = (1 - gamma) * float(np.dot(p, cls.member[:, x, y])) + gamma * m / K
            rhat[int(y)] = K / m * (1 - gamma) * r / q
        data.append(WeightedExample(int(x), rhat))
    return erm(cls, data)


def central_difference(f, p, h=1e-6):
    p = np.asarray(p, dtype=float)
    out = np.empty(p.size)
    for j in range(p.size):
        e = np.zeros(p.size)
        e[j] = h
        out[j] = (f(p + e) - f(p - e)) / (2 * h)
    return out


def enumerate_mixed_law(p, cls, x, gamma):
    """Exact law of the phase-2 action at context ``x``: dict subset -> probability."""
    from itertools import combinations

    law = {}
    subsets = list(combinations(range(cls.K), cls.m))
    for a in subsets:
        law[a] = law.get(a, 0.0) + gamma / len(subsets)
    for j, w in enumerate(np.asarray(p)):
        a = tuple(int(y) for y in cls.table[j, x])
        law[a] = law.get(a, 0.0) + (1 - gamma) * w
    return law
