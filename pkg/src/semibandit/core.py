"""Domain types and shared sampling primitives.

Policies are tabular over a finite context universe. A :class:`PolicyClass`
keeps a dense membership tensor ``member[j, x, y] = 1{y in pi_j(x)}`` so that
the per-action marginals ``Q_p(y|x)`` for every context come out of one
contraction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

SIMPLEX_TOL = 1e-9


class ContractViolation(ValueError):
    """Raised when an operation's precondition or a type invariant fails."""


def make_rng(seed: int | np.random.Generator | np.random.SeedSequence | None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """Independent child generators derived from one seed (trial-level splitting)."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


@dataclass(frozen=True)
class ActionSubset:
    members: tuple[int, ...]
    K: int

    def __post_init__(self) -> None:
        members = tuple(sorted(int(y) for y in self.members))
        if self.K <= 0:
            raise ContractViolation(f"K must be positive, got {self.K}")
        if len(set(members)) != len(members):
            raise ContractViolation(f"duplicate actions in {members}")
        if len(members) == 0 or len(members) > self.K:
            raise ContractViolation(f"subset size {len(members)} invalid for K={self.K}")
        if members[0] < 0 or members[-1] >= self.K:
            raise ContractViolation(f"actions {members} out of range [0, {self.K})")
        object.__setattr__(self, "members", members)

    @property
    def m(self) -> int:
        return len(self.members)

    def __contains__(self, y: object) -> bool:
        return y in self.members

    def __iter__(self):
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)

    def indicator(self) -> np.ndarray:
        a = np.zeros(self.K)
        a[list(self.members)] = 1.0
        return a


@dataclass(frozen=True)
class RewardVector:
    """Per-action rewards in [0, 1] with ``sum <= s``.

    ``strict=False`` skips the sparsity check; used for Bernoulli instances whose
    sparsity only holds with high probability.
    """

    values: np.ndarray
    s: float
    strict: bool = True

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ContractViolation("reward vector must be one-dimensional")
        if not np.all(np.isfinite(v)) or np.any(v < 0.0) or np.any(v > 1.0):
            raise ContractViolation("rewards must lie in [0, 1]")
        if self.s <= 0:
            raise ContractViolation(f"sparsity budget must be positive, got {self.s}")
        if self.strict and v.sum() > self.s + 1e-12:
            raise ContractViolation(f"||r||_1 = {v.sum():.6g} exceeds s = {self.s}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def K(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SimplexWeights:
    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ContractViolation("simplex weights must be a nonempty vector")
        if not np.all(np.isfinite(w)) or np.any(w < 0.0):
            raise ContractViolation("simplex weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > SIMPLEX_TOL:
            raise ContractViolation(f"simplex weights sum to {w.sum()!r}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def delta(cls, n: int, index: int = 0) -> "SimplexWeights":
        w = np.zeros(n)
        w[index] = 1.0
        return cls(w)

    @classmethod
    def uniform(cls, n: int) -> "SimplexWeights":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def normalized(cls, w: Sequence[float] | np.ndarray) -> "SimplexWeights":
        """Explicit renormalization; the constructor never rescales."""
        w = np.asarray(w, dtype=float)
        return cls(w / w.sum())

    def __len__(self) -> int:
        return self.weights.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.weights, dtype=dtype)


@dataclass(frozen=True)
class Policy:
    """Total map from context id to an action subset."""

    table: tuple[ActionSubset, ...]

    def __call__(self, x: int) -> ActionSubset:
        return self.table[x]

    @property
    def n_contexts(self) -> int:
        return len(self.table)


@dataclass(frozen=True)
class SemiBanditFeedback:
    pairs: tuple[tuple[int, float], ...]

    @classmethod
    def observe(cls, a: ActionSubset, r: RewardVector | np.ndarray) -> "SemiBanditFeedback":
        values = r.values if isinstance(r, RewardVector) else np.asarray(r, dtype=float)
        return cls(tuple((y, float(values[y])) for y in a.members))

    def check_matches(self, a: ActionSubset) -> None:
        if tuple(y for y, _ in self.pairs) != a.members:
            raise ContractViolation("feedback does not cover exactly the played subset")


@dataclass(frozen=True, eq=False)
class PolicyClass:
    """Finite tabular policy class.

    ``table[j, x]`` holds the sorted members of ``pi_j(x)``; policy index order is
    the tie-breaking order used by every oracle.
    """

    table: np.ndarray
    K: int
    member: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        t = np.array(self.table, dtype=np.int64)
        if t.ndim != 3 or t.shape[0] == 0 or t.shape[1] == 0:
            raise ContractViolation("policy table must have shape (n_policies, n_contexts, m)")
        n, X, m = t.shape
        if m == 0 or m > self.K:
            raise ContractViolation(f"m={m} invalid for K={self.K}")
        if t.min() < 0 or t.max() >= self.K:
            raise ContractViolation("policy actions out of range")
        t = np.sort(t, axis=2)
        if m > 1 and np.any(np.diff(t, axis=2) == 0):
            raise ContractViolation("policy images must have m distinct actions")
        member = np.zeros((n, X, self.K))
        np.put_along_axis(member, t, 1.0, axis=2)
        t.setflags(write=False)
        member.setflags(write=False)
        object.__setattr__(self, "table", t)
        object.__setattr__(self, "member", member)

    @classmethod
    def from_policies(cls, policies: Iterable[Policy], K: int) -> "PolicyClass":
        rows = [[list(a.members) for a in pol.table] for pol in policies]
        return cls(np.array(rows, dtype=np.int64), K)

    @property
    def n_policies(self) -> int:
        return self.table.shape[0]

    @property
    def n_contexts(self) -> int:
        return self.table.shape[1]

    @property
    def m(self) -> int:
        return self.table.shape[2]

    def __len__(self) -> int:
        return self.n_policies

    def policy(self, j: int) -> Policy:
        return Policy(tuple(ActionSubset(tuple(row), self.K) for row in self.table[j]))

    @property
    def policies(self) -> list[Policy]:
        return [self.policy(j) for j in range(self.n_policies)]

    def check_context(self, x: int) -> None:
        if not 0 <= x < self.n_contexts:
            raise ContractViolation(f"context {x} outside universe of size {self.n_contexts}")

    def marginals(self, p: SimplexWeights | np.ndarray) -> np.ndarray:
        """``Q_p(y|x)`` for all contexts and actions, shape (n_contexts, K)."""
        w = np.asarray(p, dtype=float)
        if w.shape != (self.n_policies,):
            raise ContractViolation("weight vector length does not match the policy class")
        return np.tensordot(w, self.member, axes=1)

    def smoothed_marginals(self, p: SimplexWeights | np.ndarray, gamma: float) -> np.ndarray:
        return (1.0 - gamma) * self.marginals(p) + gamma * self.m / self.K


def _check_gamma(gamma: float) -> None:
    if not 0.0 < gamma <= 1.0:
        raise ContractViolation(f"gamma must lie in (0, 1], got {gamma}")


def marginal_probability(p: SimplexWeights, cls: PolicyClass, x: int, y: int) -> float:
    """Probability that ``y`` belongs to ``pi(x)`` when ``pi ~ p``."""
    cls.check_context(x)
    if not 0 <= y < cls.K:
        raise ContractViolation(f"action {y} out of range [0, {cls.K})")
    w = np.asarray(p, dtype=float)
    if w.shape != (cls.n_policies,):
        raise ContractViolation("weight vector length does not match the policy class")
    return float(min(1.0, w @ cls.member[:, x, y]))


def smoothed_marginal(p: SimplexWeights, cls: PolicyClass, x: int, y: int, gamma: float) -> float:
    """``(1 - gamma) Q_p(y|x) + gamma m / K``; never below ``gamma m / K``."""
    _check_gamma(gamma)
    return (1.0 - gamma) * marginal_probability(p, cls, x, y) + gamma * cls.m / cls.K


def sample_uniform_action(K: int, m: int, rng: np.random.Generator) -> ActionSubset:
    """Uniform size-``m`` subset of ``[K]`` via a partial Fisher-Yates shuffle."""
    if not 0 < m <= K:
        raise ContractViolation(f"cannot draw {m} of {K} actions")
    perm = list(range(K))
    for i in range(m):
        j = i + int(rng.integers(K - i))
        perm[i], perm[j] = perm[j], perm[i]
    return ActionSubset(tuple(perm[:m]), K)


def sample_uniform_actions(K: int, m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` independent uniform subsets as a sorted (n, m) index array."""
    if not 0 < m <= K:
        raise ContractViolation(f"cannot draw {m} of {K} actions")
    if n == 0:
        return np.zeros((0, m), dtype=np.int64)
    if m == K:
        return np.tile(np.arange(K), (n, 1))
    # the m smallest of K iid uniform keys index a uniformly random subset
    keys = rng.random((n, K))
    return np.sort(np.argpartition(keys, m - 1, axis=1)[:, :m], axis=1)


def sample_mixed_action(
    p: SimplexWeights, cls: PolicyClass, x: int, gamma: float, rng: np.random.Generator
) -> tuple[ActionSubset, str]:
    """With probability ``gamma`` a uniform subset, otherwise ``pi(x)`` for ``pi ~ p``."""
    cls.check_context(x)
    if gamma > 0.0 and rng.random() < gamma:
        return sample_uniform_action(cls.K, cls.m, rng), "uniform"
    j = int(rng.choice(cls.n_policies, p=np.asarray(p)))
    return ActionSubset(tuple(cls.table[j, x]), cls.K), "policy"


def sample_mixed_actions(
    p: SimplexWeights | np.ndarray, cls: PolicyClass, contexts: np.ndarray, gamma: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`sample_mixed_action`; returns (actions (n, m), uniform-flag (n,))."""
    n = len(contexts)
    uniform = rng.random(n) < gamma
    w = np.asarray(p, dtype=float)
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    picks = np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), cls.n_policies - 1)
    actions = cls.table[picks, contexts].copy()
    n_unif = int(uniform.sum())
    if n_unif:
        actions[uniform] = sample_uniform_actions(cls.K, cls.m, n_unif, rng)
    return actions, uniform


def policy_value(pi: Policy, x: int, r: RewardVector | np.ndarray) -> float:
    values = r.values if isinstance(r, RewardVector) else np.asarray(r, dtype=float)
    return float(sum(values[y] for y in pi(x).members))
