"""Adversarial regret minimization over a finite policy class.

FTRL on the simplex with a negative-entropy plus log-barrier regularizer,

    p_{t+1} = argmin_p  p . C_t + H(p) / eta + Phi(p) / nu,
    H(p) = sum p_i log p_i,   Phi(p) = -sum log p_i,

fed with importance-weighted loss estimates built from semi-bandit feedback.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core import ContractViolation, PolicyClass, SimplexWeights

OUTER_CAP = 200
INNER_CAP = 100
KKT_TOL = 1e-8


class FtrlSolverError(RuntimeError):
    """The FTRL stationarity system did not converge within the iteration caps."""


@dataclass(frozen=True)
class FtrlSolution:
    p: np.ndarray
    lam: float
    residual: float
    iterations: int


def _barrier_map(u: np.ndarray, eta: float, nu: float) -> np.ndarray:
    """Derivative of the regularizer in log-coordinates: ``(u + 1)/eta - exp(-u)/nu``."""
    return (u + 1.0) / eta - np.exp(-u) / nu


def _solve_coordinates(target: np.ndarray, eta: float, nu: float, u0: np.ndarray | None = None) -> np.ndarray:
    """Solve ``(u + 1)/eta - exp(-u)/nu = target`` coordinatewise.

    The left side is increasing and convex in ``u``, so Newton converges
    monotonically once an iterate lands right of the root (which the first
    step always does).
    """
    if u0 is None:
        u = eta * target - 1.0
        neg = target < 0
        u[neg] = np.maximum(u[neg], -np.log(-nu * target[neg]))
    else:
        u = u0.copy()
    for _ in range(INNER_CAP):
        e = np.exp(-u)
        g = (u + 1.0) / eta - e / nu - target
        step = g / (1.0 / eta + e / nu)
        u -= step
        if np.all(np.abs(step) <= 4e-16 * (1.0 + np.abs(u))):
            return u
    raise FtrlSolverError("per-coordinate Newton did not converge")


def solve_ftrl(C: np.ndarray, eta: float, nu: float, lam_hint: float | None = None) -> FtrlSolution:
    """Interior minimizer of ``p . C + H(p)/eta + Phi(p)/nu`` over the simplex.

    Outer safeguarded Newton/bisection on the multiplier ``lam``, inner Newton
    per coordinate. ``lam_hint`` warm-starts the multiplier.
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 1 or C.size == 0 or not np.all(np.isfinite(C)):
        raise ContractViolation("cumulative loss must be a finite nonempty vector")
    if not (eta > 0 and nu > 0):
        raise ContractViolation("need eta > 0 and nu > 0")
    n = C.size
    if n == 1:
        return FtrlSolution(np.ones(1), -C[0] - float(_barrier_map(np.zeros(1), eta, nu)[0]), 0.0, 0)
    shift = C.min()
    Cs = C - shift
    # Sum of p is decreasing in lam; these bracket the root.
    lo = -float(_barrier_map(np.zeros(1), eta, nu)[0])
    hi = -float(_barrier_map(np.array([-math.log(n)]), eta, nu)[0])
    lam = lo + 0.5 * (hi - lo) if lam_hint is None else lam_hint + shift
    if not lo <= lam <= hi:
        lam = lo + 0.5 * (hi - lo)
    u = None
    for it in range(1, OUTER_CAP + 1):
        u = _solve_coordinates(-Cs - lam, eta, nu, u)
        p = np.exp(u)
        excess = p.sum() - 1.0
        if excess > 0:
            lo = lam
        else:
            hi = lam
        if abs(excess) <= 2e-16 * n or hi - lo <= 4e-16 * max(1.0, abs(lam)):
            break
        slope = -np.sum(p / (1.0 / eta + np.exp(-u) / nu))
        cand = lam - excess / slope
        lam = cand if lo < cand < hi else 0.5 * (lo + hi)
    else:
        raise FtrlSolverError("multiplier search did not converge")
    p = p / p.sum()
    lam_orig = lam - shift
    residual = kkt_residual(C, p, lam_orig, eta, nu)
    if residual > KKT_TOL:
        raise FtrlSolverError(f"KKT residual {residual:.3g} above tolerance")
    return FtrlSolution(p, lam_orig, residual, it)


def kkt_residual(C: np.ndarray, p: np.ndarray, lam: float, eta: float, nu: float) -> float:
    """Max-norm violation of stationarity and of the simplex constraint."""
    stat = C + (np.log(p) + 1.0) / eta - 1.0 / (nu * p) + lam
    return float(max(np.abs(stat).max(), abs(p.sum() - 1.0)))


def ftrl_objective(p: np.ndarray, C: np.ndarray, eta: float, nu: float) -> float:
    p = np.asarray(p, dtype=float)
    return float(p @ C + (p @ np.log(p)) / eta - np.log(p).sum() / nu)


def ftrl_solve(C: np.ndarray, eta: float, nu: float) -> SimplexWeights:
    return SimplexWeights(solve_ftrl(C, eta, nu).p)


def exponential_weights(C: np.ndarray, eta: float) -> np.ndarray:
    """Closed-form entropy-only FTRL: ``p ~ exp(-eta C)``."""
    z = -eta * (np.asarray(C, dtype=float) - np.min(C))
    w = np.exp(z)
    return w / w.sum()


def loss_estimate(p: SimplexWeights | np.ndarray, cls: PolicyClass, x: int, a, losses) -> np.ndarray:
    """Importance-weighted policy losses ``sum_{y in pi_i(x) & a} l(y) / Q_t(y)``.

    ``losses`` are the observed losses on the members of ``a``, in order.
    """
    a = np.asarray(getattr(a, "members", a), dtype=np.int64)
    losses = np.asarray(losses, dtype=float)
    member = cls.member[:, x, :][:, a]
    q = np.asarray(p, dtype=float) @ member
    if np.any(q <= 0.0):
        raise ContractViolation("observed an action with zero inclusion probability")
    return member @ (losses / q)


def default_rates(n_policies: int, m: int, s: float, T: int) -> tuple[float, float]:
    """``(eta, nu) = (sqrt(log|Pi| / (m s T)), 1/16)``; eta falls back to 1 for one policy."""
    if n_policies <= 1 or T <= 0:
        return 1.0, 1.0 / 16
    return math.sqrt(math.log(n_policies) / (m * s * T)), 1.0 / 16


@dataclass
class RegretRun:
    actions: np.ndarray  # (T, m) played subsets
    chosen: np.ndarray  # (T,) sampled policy indices
    learner_loss: np.ndarray  # (T,) loss of the played subset
    regret: np.ndarray  # (T,) cumulative regret vs best fixed policy so far
    min_p: np.ndarray  # (T,) min_i p_t(i)
    max_ratio: np.ndarray  # (T,) max_i p_{t+1}(i) / p_t(i)
    p_final: np.ndarray

    @property
    def terminal_regret(self) -> float:
        return float(self.regret[-1]) if len(self.regret) else 0.0

    def trace_rows(self) -> list[tuple[int, float, float, float, float]]:
        return [(t + 1, float(a), float(b), float(c), float(d))
                for t, (a, b, c, d) in enumerate(zip(self.learner_loss, self.regret, self.min_p, self.max_ratio))]


def policy_loss_matrix(cls: PolicyClass, contexts: np.ndarray, losses: np.ndarray) -> np.ndarray:
    """True loss of every policy on every round, shape (T, n_policies)."""
    picked = np.take_along_axis(losses[None, :, :], cls.table[:, contexts, :], axis=2)
    return picked.sum(axis=2).T


def regret_trace(cls: PolicyClass, contexts: np.ndarray, losses: np.ndarray, actions: np.ndarray,
                 ) -> tuple[np.ndarray, np.ndarray]:
    """(per-round learner loss, cumulative regret against the best policy in hindsight up to t)."""
    learner = np.take_along_axis(losses, actions, axis=1).sum(axis=1)
    best = np.cumsum(policy_loss_matrix(cls, contexts, losses), axis=0).min(axis=1)
    return learner, np.cumsum(learner) - best


def _check_losses(contexts: np.ndarray, losses: np.ndarray, cls: PolicyClass) -> None:
    if losses.ndim != 2 or losses.shape != (len(contexts), cls.K):
        raise ContractViolation("loss sequence must have shape (T, K)")
    if np.any(losses > 0.0) or np.any(losses < -1.0):
        raise ContractViolation("losses must lie in [-1, 0]")
    if len(contexts) and (contexts.min() < 0 or contexts.max() >= cls.n_contexts):
        raise ContractViolation("context id outside the policy class universe")


def _run(contexts, losses, cls: PolicyClass, T: int | None, update, rng: np.random.Generator) -> RegretRun:
    contexts = np.asarray(contexts, dtype=np.int64)
    losses = np.asarray(losses, dtype=float)
    T = len(contexts) if T is None else T
    contexts, losses = contexts[:T], losses[:T]
    _check_losses(contexts, losses, cls)
    n = cls.n_policies
    p = np.full(n, 1.0 / n)
    C = np.zeros(n)
    chosen = np.empty(T, dtype=np.int64)
    min_p = np.empty(T)
    max_ratio = np.empty(T)
    draws = rng.random(T)
    for t in range(T):
        x = contexts[t]
        cdf = np.cumsum(p)
        j = min(int(np.searchsorted(cdf, draws[t] * cdf[-1], side="right")), n - 1)
        chosen[t] = j
        a = cls.table[j, x]
        C += loss_estimate(p, cls, x, a, losses[t, a])
        p_next = update(C)
        min_p[t] = p.min()
        max_ratio[t] = np.max(p_next / p)
        p = p_next
    actions = cls.table[chosen, contexts] if T else np.zeros((0, cls.m), dtype=np.int64)
    learner, regret = regret_trace(cls, contexts, losses, actions)
    return RegretRun(actions, chosen, learner, regret, min_p, max_ratio, p)


def exp4_comb_sparse(contexts, losses, cls: PolicyClass, T: int | None = None, eta: float | None = None,
                     nu: float = 1.0 / 16, rng: np.random.Generator | None = None, s: float | None = None,
                     ) -> RegretRun:
    """Hybrid entropy/log-barrier FTRL with semi-bandit loss estimates.

    ``eta`` defaults to ``sqrt(log|Pi| / (m s T))``; ``s`` then defaults to the
    largest squared loss norm in the sequence.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    losses = np.asarray(losses, dtype=float)
    horizon = len(contexts) if T is None else T
    if eta is None:
        s = s if s is not None else max(float((losses[:horizon] ** 2).sum(axis=1).max(initial=0.0)), 1e-12)
        eta = default_rates(cls.n_policies, cls.m, s, horizon)[0]
    if cls.n_policies == 1:
        def update(C):
            return np.ones(1)
    else:
        state = {"lam": None}

        def update(C):
            sol = solve_ftrl(C, eta, nu, state["lam"])
            state["lam"] = sol.lam
            return sol.p
    return _run(contexts, losses, cls, T, update, rng)


def exp4_entropy_baseline(contexts, losses, cls: PolicyClass, T: int | None = None, eta: float | None = None,
                          nu: float | None = None, rng: np.random.Generator | None = None) -> RegretRun:
    """Same loop with the log-barrier removed (exponential weights); ``nu`` is ignored.

    Without the barrier there is no sparsity-adaptive guarantee, so ``eta``
    defaults to the classical ``sqrt(log|Pi| / (m K T))``.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    horizon = len(contexts) if T is None else T
    if eta is None:
        eta = default_rates(cls.n_policies, cls.m, cls.K, horizon)[0]
    return _run(contexts, losses, cls, T, lambda C: exponential_weights(C, eta), rng)


def read_loss_sequence(path) -> tuple[np.ndarray, np.ndarray]:
    """CSV rows ``context, l_0, ..., l_{K-1}``; a non-numeric first row is a header."""
    contexts, rows = [], []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                vals = [float(v) for v in row]
            except ValueError:
                if i == 0:
                    continue
                raise ContractViolation(f"non-numeric loss row {i}")
            contexts.append(int(vals[0]))
            rows.append(vals[1:])
    return np.array(contexts, dtype=np.int64), np.array(rows, dtype=float)


def write_loss_sequence(path, contexts: np.ndarray, losses: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["context"] + [f"l{y}" for y in range(losses.shape[1])])
        for x, row in zip(contexts, losses):
            w.writerow([int(x)] + [repr(float(v)) for v in row])
