"""Log-barrier exploration objective and Frank-Wolfe over the policy simplex.

Every objective handled here has the form

    F(p) = -scale * sum_{x, y} W[x, y] * log(Q^gamma_p(y|x))

for a nonnegative weight table ``W``: the empirical phase-1 objective
(``W`` = rewards observed per context/action, ``scale = K / (m N)``), the
single-label objective (``W`` = match counts, ``scale = 1 / |S|``) and the
exact population objective (``W = P(x) E[r(y)|x]``, ``scale = 1``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import ActionSubset, ContractViolation, PolicyClass, SemiBanditFeedback, SimplexWeights, _check_gamma
from .environments import Instance, _check_compatible
from .oracle import CountingOracle, loo


@dataclass(frozen=True)
class Phase1Record:
    x: int
    a: ActionSubset
    observed: SemiBanditFeedback

    def __post_init__(self) -> None:
        self.observed.check_matches(self.a)


@dataclass(frozen=True, eq=False)
class Phase1Batch:
    """Array form of a list of :class:`Phase1Record`."""

    contexts: np.ndarray
    actions: np.ndarray
    observed: np.ndarray

    def __len__(self) -> int:
        return len(self.contexts)

    @classmethod
    def from_records(cls, records: Sequence[Phase1Record]) -> "Phase1Batch":
        if not records:
            raise ContractViolation("empty phase-1 batch")
        return cls(
            np.array([r.x for r in records], dtype=np.int64),
            np.array([r.a.members for r in records], dtype=np.int64),
            np.array([[v for _, v in r.observed.pairs] for r in records], dtype=float),
        )

    @classmethod
    def from_rounds(cls, contexts: np.ndarray, rewards: np.ndarray, actions: np.ndarray) -> "Phase1Batch":
        observed = np.take_along_axis(np.asarray(rewards, dtype=float), actions, axis=1)
        return cls(np.asarray(contexts, dtype=np.int64), np.asarray(actions, dtype=np.int64), observed)

    def records(self, K: int) -> list[Phase1Record]:
        out = []
        for x, a, obs in zip(self.contexts, self.actions, self.observed):
            sub = ActionSubset(tuple(int(y) for y in a), K)
            out.append(Phase1Record(int(x), sub, SemiBanditFeedback(tuple(zip(sub.members, map(float, obs))))))
        return out

    def reward_table(self, n_contexts: int, K: int) -> np.ndarray:
        """``W[x, y] = sum_i 1{x_i = x, y in a_i} r_i(y)``."""
        W = np.zeros((n_contexts, K))
        np.add.at(W, (np.repeat(self.contexts, self.actions.shape[1]), self.actions.ravel()), self.observed.ravel())
        return W


def _as_batch(batch: Phase1Batch | Sequence[Phase1Record]) -> Phase1Batch:
    return batch if isinstance(batch, Phase1Batch) else Phase1Batch.from_records(batch)


class LogBarrierObjective:
    """``p -> -scale * sum W log Q^gamma_p`` with its gradient and ERM reweighting."""

    def __init__(self, cls: PolicyClass, W: np.ndarray, scale: float, gamma: float) -> None:
        _check_gamma(gamma)
        W = np.asarray(W, dtype=float)
        if W.shape != (cls.n_contexts, cls.K) or np.any(W < 0):
            raise ContractViolation("weight table must be nonnegative with shape (n_contexts, K)")
        self.cls = cls
        self.W = W
        self.scale = float(scale)
        self.gamma = float(gamma)
        self.floor = gamma * cls.m / cls.K
        # only cells with positive weight contribute
        self._support = np.flatnonzero(W.ravel() > 0)
        self._w = W.ravel()[self._support]
        self._M = cls.member.reshape(cls.n_policies, -1)[:, self._support]

    @property
    def n(self) -> int:
        return self.cls.n_policies

    def _smoothed(self, p: np.ndarray) -> np.ndarray:
        return (1.0 - self.gamma) * (p @ self._M) + self.floor

    def value(self, p) -> float:
        q = self._smoothed(np.asarray(p, dtype=float))
        return float(-self.scale * (self._w @ np.log(q)))

    def reweighted(self, p) -> np.ndarray:
        """``scale (1 - gamma) W / Q^gamma_p`` on the support cells."""
        return self.scale * (1.0 - self.gamma) * self._w / self._smoothed(np.asarray(p, dtype=float))

    def gradient(self, p) -> np.ndarray:
        return -(self._M @ self.reweighted(p))

    def value_and_gradient(self, p) -> tuple[float, np.ndarray]:
        q = self._smoothed(np.asarray(p, dtype=float))
        value = -self.scale * (self._w @ np.log(q))
        grad = -(self._M @ (self.scale * (1.0 - self.gamma) * self._w / q))
        return float(value), grad

    def erm_table(self, p) -> np.ndarray:
        """Dense (n_contexts, K) estimated-reward table handed to the ERM oracle."""
        table = np.zeros(self.W.size)
        table[self._support] = self.reweighted(p)
        return table.reshape(self.W.shape)


def empirical_log_barrier(batch: Phase1Batch | Sequence[Phase1Record], cls: PolicyClass,
                          gamma: float) -> LogBarrierObjective:
    batch = _as_batch(batch)
    if len(batch) == 0:
        raise ContractViolation("empty phase-1 batch")
    W = batch.reward_table(cls.n_contexts, cls.K)
    return LogBarrierObjective(cls, W, cls.K / (cls.m * len(batch)), gamma)


def population_log_barrier(inst: Instance, cls: PolicyClass, gamma: float) -> LogBarrierObjective:
    _check_compatible(inst, cls)
    return LogBarrierObjective(cls, inst.probs[:, None] * inst.means, 1.0, gamma)


def stochastic_objective(p: SimplexWeights, rec: Phase1Record, cls: PolicyClass, gamma: float) -> float:
    """``-(K/m) sum_{y in a} r(y) log Q^gamma_p(y|x)`` for one record."""
    _check_gamma(gamma)
    cls.check_context(rec.x)
    q = cls.smoothed_marginals(p, gamma)[rec.x]
    total = 0.0
    for y, r in rec.observed.pairs:
        if r != 0.0:
            total -= r * np.log(q[y])
    return cls.K / cls.m * total


def empirical_objective(p: SimplexWeights, batch, cls: PolicyClass, gamma: float) -> float:
    return empirical_log_barrier(batch, cls, gamma).value(p)


def empirical_gradient(p: SimplexWeights, batch, cls: PolicyClass, gamma: float) -> np.ndarray:
    return empirical_log_barrier(batch, cls, gamma).gradient(p)


def exact_population_objective(p: SimplexWeights, inst: Instance, cls: PolicyClass,
                               gamma: float) -> tuple[float, np.ndarray]:
    return population_log_barrier(inst, cls, gamma).value_and_gradient(p)


def exact_estimator_audit(p: SimplexWeights, inst: Instance, cls: PolicyClass, gamma: float) -> np.ndarray:
    """``E[sum_{y in pi(x)} r(y) / Q^gamma_p(y|x)]`` for every policy, exactly."""
    _check_compatible(inst, cls)
    q = cls.smoothed_marginals(p, gamma)
    return np.einsum("jxy,xy->j", cls.member, inst.probs[:, None] * inst.means / q)


@dataclass
class FrankWolfeResult:
    p: SimplexWeights
    objective: np.ndarray
    gap_proxy: np.ndarray
    oracle_calls: int

    def trace_rows(self) -> list[tuple[int, float, float]]:
        return [(t + 1, float(v), float(g)) for t, (v, g) in enumerate(zip(self.objective, self.gap_proxy))]


def run_frank_wolfe(objective: LogBarrierObjective, T: int, p1: SimplexWeights | None = None,
                    oracle: CountingOracle | None = None, record: bool = True,
                    callback: Callable[[int, np.ndarray], None] | None = None) -> FrankWolfeResult:
    """Frank-Wolfe with step ``2 / (2 + t)``.

    With ``oracle`` each vertex comes from one ERM call on the reweighted
    dataset; otherwise from :func:`loo` on the gradient.
    """
    if T < 1:
        raise ContractViolation("need at least one Frank-Wolfe iteration")
    n = objective.n
    p = np.array(np.asarray(p1 if p1 is not None else SimplexWeights.delta(n)), dtype=float)
    values = np.empty(T if record else 0)
    gaps = np.empty(T if record else 0)
    calls = 0
    for t in range(1, T + 1):
        if record:
            value, g = objective.value_and_gradient(p)
        else:
            g = objective.gradient(p)
        if oracle is not None:
            j = oracle.aggregated(objective.erm_table(p))
        else:
            j = loo(objective.cls, g)
        calls += 1
        if record:
            values[t - 1] = value
            gaps[t - 1] = g @ p - g[j]
        eta = 2.0 / (2.0 + t)
        p *= 1.0 - eta
        p[j] += eta
        if callback is not None:
            callback(t, p)
    return FrankWolfeResult(SimplexWeights.normalized(p), values, gaps, calls)


def frank_wolfe(batch, cls: PolicyClass, gamma: float, T: int, p1: SimplexWeights | None = None,
                oracle: CountingOracle | None = None, record: bool = True) -> FrankWolfeResult:
    """Minimize the empirical phase-1 objective of ``batch``; ``p1`` defaults to a delta on policy 0."""
    return run_frank_wolfe(empirical_log_barrier(batch, cls, gamma), T, p1, oracle, record)


def population_frank_wolfe(inst: Instance, cls: PolicyClass, gamma: float, T: int,
                           p1: SimplexWeights | None = None, record: bool = False) -> FrankWolfeResult:
    """Frank-Wolfe on the exact population objective (reference minimizers)."""
    return run_frank_wolfe(population_log_barrier(inst, cls, gamma), T, p1, None, record)


def smoothness_constant(s: float, K: int, m: int, gamma: float) -> float:
    """L1-smoothness parameter ``s K^3 / (gamma^2 m^3)`` of the empirical objective."""
    return s * K ** 3 / (gamma ** 2 * m ** 3)
