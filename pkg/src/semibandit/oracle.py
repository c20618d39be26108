"""ERM and linear-optimization oracles over a finite policy class.

Both are exhaustive scans; ties go to the lowest policy index.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import ContractViolation, PolicyClass


@dataclass(frozen=True)
class WeightedExample:
    x: int
    rhat: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if any(v < 0 for v in self.rhat.values()):
            raise ContractViolation("estimated rewards must be nonnegative")


def erm(cls: PolicyClass, data: Sequence[WeightedExample]) -> int:
    """Index maximizing ``sum_i sum_{y in pi(x_i)} rhat_i(y)``; empty data gives 0."""
    scores = np.zeros(cls.n_policies)
    for ex in data:
        cls.check_context(ex.x)
        for y, v in ex.rhat.items():
            if not 0 <= y < cls.K:
                raise ContractViolation(f"action {y} out of range")
            scores += v * cls.member[:, ex.x, y]
    return int(np.argmax(scores))


def erm_dense(cls: PolicyClass, contexts: np.ndarray, rhat: np.ndarray) -> int:
    """:func:`erm` on a dataset given as contexts (n,) and dense estimates (n, K)."""
    W = np.zeros((cls.n_contexts, cls.K))
    np.add.at(W, np.asarray(contexts), rhat)
    return erm_aggregated(cls, W)


def erm_aggregated(cls: PolicyClass, W: np.ndarray) -> int:
    """:func:`erm` where examples sharing a context were summed into ``W[x, y]``."""
    if np.any(W < 0):
        raise ContractViolation("estimated rewards must be nonnegative")
    return int(np.argmax(np.einsum("jxy,xy->j", cls.member, W)))


def loo(cls: PolicyClass, g: np.ndarray) -> int:
    """Vertex of the simplex minimizing ``g . p`` (lowest index on ties)."""
    g = np.asarray(g, dtype=float)
    if g.shape != (cls.n_policies,):
        raise ContractViolation("gradient length does not match the policy class")
    if np.isnan(g).any():
        raise ContractViolation("NaN in linear objective")
    return int(np.argmin(g))


class CountingOracle:
    """ERM oracle wrapper that counts calls."""

    def __init__(self, cls: PolicyClass) -> None:
        self.cls = cls
        self.calls = 0

    def aggregated(self, W: np.ndarray) -> int:
        self.calls += 1
        return erm_aggregated(self.cls, W)

    def dense(self, contexts: np.ndarray, rhat: np.ndarray) -> int:
        self.calls += 1
        return erm_dense(self.cls, contexts, rhat)

    def __call__(self, data: Sequence[WeightedExample]) -> int:
        self.calls += 1
        return erm(self.cls, data)
