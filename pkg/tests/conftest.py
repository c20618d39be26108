import numpy as np
import pytest

from semibandit.core import PolicyClass
from semibandit.environments import Instance


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def two_policy_class(K=3):
    """Single context; policy 0 plays {0}, policy 1 plays {1}."""
    return PolicyClass(np.array([[[0]], [[1]]]), K)


def single_context_instance(rewards, m, s):
    return Instance.deterministic([1.0], [rewards], m, s)
