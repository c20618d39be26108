"""Finite-support instances, synthetic generators and exact-expectation oracles."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ActionSubset, ContractViolation, Policy, PolicyClass, RewardVector, SIMPLEX_TOL

SCHEMA_VERSION = 1
FIXED = "fixed"
BERNOULLI = "bernoulli"


class EnvironmentExhausted(RuntimeError):
    """A finite round stream ran out before the requested number of rounds."""


@dataclass(frozen=True, eq=False)
class Instance:
    """Distribution over (context, reward-law) pairs with finite context support.

    ``means[x]`` is the reward vector for a fixed law, or the per-action success
    probabilities for a product-Bernoulli law.
    """

    probs: np.ndarray
    means: np.ndarray
    kinds: tuple[str, ...]
    K: int
    m: int
    s: float

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=float)
        means = np.array(self.means, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise ContractViolation("need at least one context")
        if means.shape != (probs.size, self.K):
            raise ContractViolation(f"means shape {means.shape} != ({probs.size}, {self.K})")
        if len(self.kinds) != probs.size or any(k not in (FIXED, BERNOULLI) for k in self.kinds):
            raise ContractViolation("each context needs a law of type 'fixed' or 'bernoulli'")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > SIMPLEX_TOL:
            raise ContractViolation("context probabilities must form a distribution")
        if not 0 < self.m <= self.K:
            raise ContractViolation(f"m={self.m} invalid for K={self.K}")
        if np.any(means < 0) or np.any(means > 1):
            raise ContractViolation("reward means must lie in [0, 1]")
        for x, kind in enumerate(self.kinds):
            if kind == FIXED:
                RewardVector(means[x], self.s)
        probs.setflags(write=False)
        means.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "kinds", tuple(self.kinds))

    @property
    def n_contexts(self) -> int:
        return self.probs.size

    @property
    def surely_sparse(self) -> bool:
        """False when some context has a Bernoulli law (sparsity only w.h.p.)."""
        return all(k == FIXED for k in self.kinds)

    @classmethod
    def deterministic(cls, probs, rewards, m: int, s: float) -> "Instance":
        rewards = np.asarray(rewards, dtype=float)
        return cls(np.asarray(probs, dtype=float), rewards, (FIXED,) * len(rewards), rewards.shape[1], m, s)

    @classmethod
    def bernoulli(cls, probs, means, m: int, s: float) -> "Instance":
        means = np.asarray(means, dtype=float)
        return cls(np.asarray(probs, dtype=float), means, (BERNOULLI,) * len(means), means.shape[1], m, s)

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """``n`` i.i.d. rounds as (contexts (n,), rewards (n, K))."""
        contexts = rng.choice(self.n_contexts, size=n, p=self.probs)
        rewards = self.means[contexts].copy()
        bern = np.array([k == BERNOULLI for k in self.kinds])[contexts]
        if bern.any():
            draws = rng.random((int(bern.sum()), self.K))
            rewards[bern] = (draws < rewards[bern]).astype(float)
        return contexts, rewards

    def to_json(self) -> dict:
        ctxs = []
        for x in range(self.n_contexts):
            key = "r" if self.kinds[x] == FIXED else "means"
            ctxs.append({"prob": float(self.probs[x]),
                         "law": {"type": self.kinds[x], key: [float(v) for v in self.means[x]]}})
        return {"version": SCHEMA_VERSION, "K": self.K, "m": self.m, "s": self.s, "contexts": ctxs}

    @classmethod
    def from_json(cls, doc: dict) -> "Instance":
        _check_version(doc)
        kinds, means, probs = [], [], []
        for c in doc["contexts"]:
            law = c["law"]
            kinds.append(law["type"])
            means.append(law["r"] if law["type"] == FIXED else law["means"])
            probs.append(c["prob"])
        return cls(np.array(probs), np.array(means, dtype=float), tuple(kinds), int(doc["K"]), int(doc["m"]), doc["s"])


def _check_version(doc: dict) -> None:
    if doc.get("version") != SCHEMA_VERSION:
        raise ContractViolation(f"unsupported schema version {doc.get('version')!r}")


def policy_class_to_json(cls: PolicyClass) -> dict:
    return {"version": SCHEMA_VERSION, "K": cls.K, "m": cls.m, "policies": cls.table.tolist()}


def policy_class_from_json(doc: dict) -> PolicyClass:
    _check_version(doc)
    cls = PolicyClass(np.array(doc["policies"], dtype=np.int64), int(doc["K"]))
    if cls.m != int(doc["m"]):
        raise ContractViolation("declared m does not match policy images")
    return cls


def save_json(doc: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


class RoundStream:
    """Source of (context, reward) rounds with exact consumption accounting."""

    consumed: int = 0

    def take(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError


class InstanceStream(RoundStream):
    def __init__(self, inst: Instance, rng: np.random.Generator) -> None:
        self.inst = inst
        self.rng = rng
        self.consumed = 0

    def take(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        self.consumed += n
        return self.inst.sample(n, self.rng)


class SequenceStream(RoundStream):
    """Precomputed finite sequence (an oblivious adversary)."""

    def __init__(self, contexts: np.ndarray, rewards: np.ndarray) -> None:
        self.contexts = np.asarray(contexts, dtype=np.int64)
        self.rewards = np.asarray(rewards, dtype=float)
        self.consumed = 0

    def take(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        if self.consumed + n > len(self.contexts):
            raise EnvironmentExhausted(
                f"requested {n} rounds, only {len(self.contexts) - self.consumed} left")
        sl = slice(self.consumed, self.consumed + n)
        self.consumed += n
        return self.contexts[sl], self.rewards[sl]


def sample_round(inst: Instance, rng: np.random.Generator) -> tuple[int, RewardVector]:
    contexts, rewards = inst.sample(1, rng)
    x = int(contexts[0])
    return x, RewardVector(rewards[0], inst.s, strict=inst.kinds[x] == FIXED)


def exact_policy_reward(inst: Instance, pi: Policy | PolicyClass, index: int | None = None) -> float:
    """``E[r . pi(x)]`` by summation over the finite support."""
    if isinstance(pi, PolicyClass):
        return float(exact_policy_rewards(inst, pi)[index])
    return float(sum(inst.probs[x] * inst.means[x, list(pi(x).members)].sum()
                     for x in range(inst.n_contexts)))


def exact_policy_rewards(inst: Instance, cls: PolicyClass) -> np.ndarray:
    """Exact expected reward of every policy in the class."""
    _check_compatible(inst, cls)
    return np.einsum("jxy,xy->j", cls.member, inst.probs[:, None] * inst.means)


def exact_gap_to_best(inst: Instance, cls: PolicyClass, pi: Policy | int) -> float:
    values = exact_policy_rewards(inst, cls)
    own = values[pi] if isinstance(pi, (int, np.integer)) else exact_policy_reward(inst, pi)
    return float(max(values.max() - own, 0.0))


def _check_compatible(inst: Instance, cls: PolicyClass) -> None:
    if inst.K != cls.K or inst.n_contexts != cls.n_contexts or inst.m != cls.m:
        raise ContractViolation("instance and policy class disagree on K, m or context universe")


def _random_policy_table(K: int, m: int, n_contexts: int, n_policies: int, rng) -> np.ndarray:
    keys = rng.random((n_policies, n_contexts, K))
    return np.sort(np.argsort(keys, axis=2)[:, :, :m], axis=2)


def random_sparse_instance(K: int, m: int, s: float, n_contexts: int, n_policies: int,
                           rng: np.random.Generator) -> tuple[Instance, PolicyClass]:
    """Deterministic-reward instance with ``||r||_1 <= s`` surely, plus a random policy class.

    One policy (at a seeded random index) plays the top-``m`` actions of every
    context, so the class has a clear best policy.
    """
    if s > K or m > K:
        raise ContractViolation("need s <= K and m <= K")
    rewards = np.zeros((n_contexts, K))
    for x in range(n_contexts):
        support = rng.choice(K, size=min(K, max(m, math.ceil(s))), replace=False)
        vals = rng.random(support.size)
        budget = s * rng.uniform(0.5, 1.0)
        if vals.sum() > budget:
            vals *= budget / vals.sum()
        rewards[x, support] = vals
    probs = rng.dirichlet(np.full(n_contexts, 2.0))
    table = _random_policy_table(K, m, n_contexts, n_policies, rng)
    best = int(rng.integers(n_policies))
    table[best] = np.sort(np.argsort(-rewards, axis=1, kind="stable")[:, :m], axis=1)
    return Instance.deterministic(probs, rewards, m, s), PolicyClass(table, K)


def planted_gap_instance(K: int, m: int, s: float, n_contexts: int, n_policies: int, gap: float,
                         rng: np.random.Generator, tol: float = 1e-12) -> tuple[Instance, PolicyClass]:
    """Deterministic instance whose best policy beats the runner-up by exactly ``gap``.

    Rewards are ``lam * u + (1 - lam) * w`` with ``u`` concentrated on the planted
    policy's actions and ``w`` random sparse; ``lam`` is found by bisection.
    """
    top = min(1.0, s / m)
    table = _random_policy_table(K, m, n_contexts, n_policies, rng)
    best = int(rng.integers(n_policies))
    planted = np.sort(np.argsort(rng.random((n_contexts, K)), axis=1)[:, :m], axis=1)
    table[best] = planted
    for j in range(n_policies):
        if j == best:
            continue
        for x in range(n_contexts):
            while np.array_equal(table[j, x], planted[x]):
                table[j, x] = np.sort(rng.choice(K, size=m, replace=False))
    cls = PolicyClass(table, K)
    u = np.zeros((n_contexts, K))
    np.put_along_axis(u, planted, top, axis=1)
    w = np.zeros((n_contexts, K))
    for x in range(n_contexts):
        support = rng.choice(K, size=min(K, max(m, math.ceil(s))), replace=False)
        vals = rng.random(support.size)
        if vals.sum() > s:
            vals *= s / vals.sum()
        w[x, support] = vals
    probs = rng.dirichlet(np.full(n_contexts, 2.0))

    def gap_at(lam: float) -> float:
        vals = np.einsum("jxy,xy->j", cls.member, probs[:, None] * (lam * u + (1 - lam) * w))
        return vals[best] - np.delete(vals, best).max()

    if n_policies == 1:
        raise ContractViolation("a planted gap needs at least two policies")
    lo, hi = 0.0, 1.0
    if gap_at(hi) < gap:
        raise ContractViolation(f"gap {gap} unattainable (max {gap_at(hi):.4g})")
    if gap_at(lo) >= gap:
        hi = lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if gap_at(mid) >= gap:
            hi = mid
        else:
            lo = mid
    rewards = hi * u + (1 - hi) * w
    return Instance.deterministic(probs, rewards, m, s), cls


@dataclass(frozen=True)
class LowerBoundSpec:
    K: int
    m: int
    s: float
    eps: float
    good_set: ActionSubset

    def __post_init__(self) -> None:
        if self.good_set.K != self.K or self.good_set.m != self.m:
            raise ContractViolation("good set must be a size-m subset of [K]")
        if self.m > self.K / 2:
            raise ContractViolation(f"need m <= K/2, got m={self.m}, K={self.K}")
        for mean in self.means():
            if not 0.0 <= mean <= 1.0:
                raise ContractViolation(f"Bernoulli mean {mean:.6g} outside [0, 1]")

    def means(self) -> tuple[float, float]:
        """(mean of a good action, mean of any other action)."""
        base = self.s / (2 * self.K)
        return base + self.eps / self.m, base - self.eps / (self.K - self.m)


def lower_bound_instance(spec: LowerBoundSpec) -> Instance:
    """Single-context product-Bernoulli instance with a hidden good subset."""
    good, bad = spec.means()
    means = np.full(spec.K, bad)
    means[list(spec.good_set.members)] = good
    return Instance.bernoulli([1.0], means[None, :], spec.m, spec.s)


@dataclass(frozen=True, eq=False)
class ListClassificationInstance:
    """Per-context true-label sets; reward is the 0/1 indicator of the set."""

    probs: np.ndarray
    label_sets: tuple[frozenset[int], ...]
    K: int
    m: int
    s: int

    def __post_init__(self) -> None:
        sets = tuple(frozenset(int(y) for y in ys) for ys in self.label_sets)
        for ys in sets:
            if len(ys) > self.s:
                raise ContractViolation(f"label set {sorted(ys)} larger than s={self.s}")
            if any(not 0 <= y < self.K for y in ys):
                raise ContractViolation("labels out of range")
        object.__setattr__(self, "label_sets", sets)


def list_instance_to_rewards(lci: ListClassificationInstance) -> Instance:
    rewards = np.zeros((len(lci.label_sets), lci.K))
    for x, ys in enumerate(lci.label_sets):
        rewards[x, sorted(ys)] = 1.0
    return Instance.deterministic(lci.probs, rewards, lci.m, lci.s)


def random_list_instance(K: int, m: int, s: int, n_contexts: int, rng: np.random.Generator,
                         ) -> ListClassificationInstance:
    sets = []
    for _ in range(n_contexts):
        size = int(rng.integers(0, s + 1))
        sets.append(frozenset(int(y) for y in rng.choice(K, size=size, replace=False)))
    return ListClassificationInstance(rng.dirichlet(np.full(n_contexts, 2.0)), tuple(sets), K, m, s)


def monte_carlo_policy_rewards(inst: Instance, cls: PolicyClass, n: int, rng: np.random.Generator,
                               ) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and standard error of each policy's reward over ``n`` rounds."""
    total = np.zeros(cls.n_policies)
    total_sq = np.zeros(cls.n_policies)
    done = 0
    while done < n:
        chunk = min(100_000, n - done)
        contexts, rewards = inst.sample(chunk, rng)
        vals = np.einsum("jny,ny->nj", cls.member[:, contexts, :], rewards)
        total += vals.sum(axis=0)
        total_sq += (vals ** 2).sum(axis=0)
        done += chunk
    mean = total / n
    var = (total_sq - n * mean ** 2) / (n - 1)
    return mean, np.sqrt(np.maximum(var, 0.0) / n)


def context_frequencies(contexts: Sequence[int], n_contexts: int) -> np.ndarray:
    return np.bincount(np.asarray(contexts), minlength=n_contexts) / len(contexts)


def hot_action_instance(K: int, m: int, s: int, n_contexts: int, n_policies: int,
                        seed: int) -> tuple[Instance, PolicyClass]:
    """Uniform contexts, each with ``s`` reward-1 actions; policy 0 covers the first ``min(m, s)``.

    Hot sets are prefixes of one seeded permutation per context, so instances
    for different ``s`` (same seed) are nested and share the policy class.
    """
    if not 1 <= s <= K:
        raise ContractViolation("need 1 <= s <= K")
    rng = np.random.default_rng(seed)
    perms = np.argsort(rng.random((n_contexts, K)), axis=1)
    table = _random_policy_table(K, m, n_contexts, n_policies, rng)
    table[0] = np.sort(perms[:, :m], axis=1)
    rewards = np.zeros((n_contexts, K))
    np.put_along_axis(rewards, perms[:, :s], 1.0, axis=1)
    probs = np.full(n_contexts, 1.0 / n_contexts)
    return Instance.deterministic(probs, rewards, m, s), PolicyClass(table, K)


def loss_sequence(inst: Instance, T: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Oblivious loss sequence ``l_t = -r_t`` drawn i.i.d. from ``inst``."""
    contexts, rewards = inst.sample(T, rng)
    return contexts, -rewards
