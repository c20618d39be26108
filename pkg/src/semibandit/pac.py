"""Two-phase PAC learner for contextual combinatorial semi-bandits.

Phase 1 explores uniformly and runs Frank-Wolfe on the empirical log-barrier
objective to find a low-variance exploration distribution ``p_hat``. Phase 2
explores with the ``gamma``-smoothed ``p_hat`` and returns the ERM policy of
the importance-weighted rewards.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import ContractViolation, PolicyClass, SimplexWeights, sample_mixed_actions, sample_uniform_actions
from .environments import Instance, InstanceStream, RoundStream, exact_gap_to_best
from .fw_objective import (
    FrankWolfeResult,
    LogBarrierObjective,
    Phase1Batch,
    exact_estimator_audit,
    exact_population_objective,
    empirical_log_barrier,
    run_frank_wolfe,
)
from .oracle import CountingOracle

log = logging.getLogger(__name__)

UNINFORMATIVE = "uninformative-phase1"


@dataclass(frozen=True)
class PacConfig:
    N1: int
    N2: int
    T: int
    gamma: float = 0.5
    seed: int = 0
    diagnostics: bool = True

    def __post_init__(self) -> None:
        if min(self.N1, self.N2, self.T) < 1:
            raise ContractViolation("N1, N2 and T must be positive")
        if not 0.0 < self.gamma <= 0.5:
            raise ContractViolation(f"gamma must lie in (0, 1/2], got {self.gamma}")

    @classmethod
    def scaled(cls, K: int, m: int, s: float, eps: float, delta: float, n_policies: int,
                       c: float = 1.0, seed: int = 0) -> "PacConfig":
        """Sizes with the exponents of the combinatorial PAC guarantee, scaled by ``c``."""
        logf = math.log(n_policies / delta)
        return cls(
            N1=max(1, math.ceil(c * K ** 9 / m ** 8 * logf)),
            N2=max(1, math.ceil(c * (K / (m * eps) + s * m / eps ** 2) * logf)),
            T=max(1, math.ceil(c * (K / m) ** 5)),
            gamma=0.5,
            seed=seed,
        )

    @classmethod
    def single_label_scaled(cls, K: int, eps: float, delta: float, n_hypotheses: int,
                            c: float = 1.0, seed: int = 0) -> "PacConfig":
        logf = math.log(n_hypotheses / delta)
        return cls(
            N1=max(1, math.ceil(c * K ** 7 * logf)),
            N2=max(1, math.ceil(c * (K / eps + 1 / eps ** 2) * logf)),
            T=max(1, math.ceil(c * K ** 4)),
            gamma=0.5,
            seed=seed,
        )


@dataclass
class Phase1Output:
    p_hat: SimplexWeights
    batch: Phase1Batch
    fw: FrankWolfeResult
    flags: list[str] = field(default_factory=list)


@dataclass
class Phase2Output:
    out_policy: int
    estimates: np.ndarray  # per-policy mean of R_i(pi)
    variances: np.ndarray  # per-policy sample variance of R_i(pi)
    max_estimator: float


@dataclass
class PacReport:
    out_policy: int
    samples_used: int
    erm_calls: int
    p_hat: list[float]
    gap: float | None = None
    grad_inf_norm: float | None = None
    variance_audit: list[float] | None = None
    exact_audit: list[float] | None = None
    estimates: list[float] | None = None
    flags: list[str] = field(default_factory=list)
    matched: int | None = None

    @property
    def max_policy_variance(self) -> float | None:
        return None if self.variance_audit is None else max(self.variance_audit)

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["version"] = 1
        doc["max_policy_variance"] = self.max_policy_variance
        return doc


def _fw_phase(objective: LogBarrierObjective, cfg: PacConfig, oracle: CountingOracle) -> FrankWolfeResult:
    return run_frank_wolfe(objective, cfg.T, SimplexWeights.delta(objective.n, 0), oracle,
                           record=cfg.diagnostics)


def run_phase1(stream: RoundStream, cls: PolicyClass, cfg: PacConfig, rng: np.random.Generator,
               oracle: CountingOracle | None = None) -> Phase1Output:
    """Uniform exploration for ``N1`` rounds, then ``T`` Frank-Wolfe steps from a delta on policy 0."""
    oracle = oracle if oracle is not None else CountingOracle(cls)
    contexts, rewards = stream.take(cfg.N1)
    actions = sample_uniform_actions(cls.K, cls.m, cfg.N1, rng)
    batch = Phase1Batch.from_rounds(contexts, rewards, actions)
    flags = [] if np.any(batch.observed > 0) else [UNINFORMATIVE]
    fw = _fw_phase(empirical_log_barrier(batch, cls, cfg.gamma), cfg, oracle)
    return Phase1Output(fw.p, batch, fw, flags)


def phase2_estimates(cls: PolicyClass, p_hat: SimplexWeights, gamma: float, contexts: np.ndarray,
                     rewards: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Importance-weighted rewards ``1{y in a_i} r_i(y) / Q^gamma_{p_hat}(y|x_i)``, shape (n, K)."""
    q = cls.smoothed_marginals(p_hat, gamma)[contexts]
    played = np.zeros_like(q)
    np.put_along_axis(played, actions, 1.0, axis=1)
    return played * rewards / q


def policy_estimators(cls: PolicyClass, contexts: np.ndarray, rhat: np.ndarray) -> np.ndarray:
    """``R_i(pi_j) = sum_{y in pi_j(x_i)} rhat_i(y)``, shape (n, n_policies)."""
    picked = np.take_along_axis(rhat[None, :, :], cls.table[:, contexts, :], axis=2)
    return picked.sum(axis=2).T


def run_phase2(stream: RoundStream, cls: PolicyClass, p_hat: SimplexWeights, cfg: PacConfig,
               rng: np.random.Generator, oracle: CountingOracle | None = None) -> Phase2Output:
    oracle = oracle if oracle is not None else CountingOracle(cls)
    contexts, rewards = stream.take(cfg.N2)
    actions, _ = sample_mixed_actions(p_hat, cls, contexts, cfg.gamma, rng)
    rhat = phase2_estimates(cls, p_hat, cfg.gamma, contexts, rewards, actions)
    out = oracle.dense(contexts, rhat)
    R = policy_estimators(cls, contexts, rhat)
    var = R.var(axis=0, ddof=1) if len(R) > 1 else np.zeros(cls.n_policies)
    return Phase2Output(out, R.mean(axis=0), var, float(R.max(initial=0.0)))


def _diagnose(report: PacReport, inst: Instance, cls: PolicyClass, p_hat: SimplexWeights, gamma: float) -> None:
    report.gap = exact_gap_to_best(inst, cls, report.out_policy)
    _, grad = exact_population_objective(p_hat, inst, cls, gamma)
    report.grad_inf_norm = float(np.abs(grad).max())
    report.exact_audit = exact_estimator_audit(p_hat, inst, cls, gamma).tolist()


def pac_comband(inst: Instance | None, cls: PolicyClass, cfg: PacConfig,
                stream: RoundStream | None = None) -> PacReport:
    """End-to-end two-phase learner; exact diagnostics need ``inst``."""
    if inst is None and stream is None:
        raise ContractViolation("need an instance or a round stream")
    rng = np.random.default_rng(cfg.seed)
    stream = stream if stream is not None else InstanceStream(inst, rng)
    start = stream.consumed
    oracle = CountingOracle(cls)
    ph1 = run_phase1(stream, cls, cfg, rng, oracle)
    ph2 = run_phase2(stream, cls, ph1.p_hat, cfg, rng, oracle)
    report = PacReport(
        out_policy=ph2.out_policy,
        samples_used=stream.consumed - start,
        erm_calls=oracle.calls,
        p_hat=ph1.p_hat.weights.tolist(),
        variance_audit=ph2.variances.tolist(),
        estimates=ph2.estimates.tolist(),
        flags=list(ph1.flags),
    )
    if inst is not None and cfg.diagnostics:
        _diagnose(report, inst, cls, ph1.p_hat, cfg.gamma)
    log.debug("pac run seed=%d out=%d gap=%s", cfg.seed, report.out_policy, report.gap)
    return report


def pac_single_label(stream: RoundStream, cls: PolicyClass, cfg: PacConfig,
                     inst: Instance | None = None) -> PacReport:
    """Single-label variant: keep only matched rounds, no importance weighting in phase 1."""
    if cls.m != 1:
        raise ContractViolation("single-label learning needs m = 1")
    rng = np.random.default_rng(cfg.seed)
    start = stream.consumed
    oracle = CountingOracle(cls)

    contexts, rewards = stream.take(cfg.N1)
    guesses = sample_uniform_actions(cls.K, 1, cfg.N1, rng)[:, 0]
    feedback = rewards[np.arange(cfg.N1), guesses]
    if np.any((feedback != 0.0) & (feedback != 1.0)):
        raise ContractViolation("single-label feedback must be zero-one")
    hit = feedback == 1.0
    n_matched = int(hit.sum())
    W = np.zeros((cls.n_contexts, cls.K))
    np.add.at(W, (contexts[hit], guesses[hit]), 1.0)
    flags = []
    if n_matched == 0:
        flags.append(UNINFORMATIVE)
        warnings.warn("no phase-1 prediction matched a label; exploration falls back to a delta", RuntimeWarning)
    fw = _fw_phase(LogBarrierObjective(cls, W, 1.0 / max(n_matched, 1), cfg.gamma), cfg, oracle)

    ph2 = run_phase2(stream, cls, fw.p, cfg, rng, oracle)
    report = PacReport(
        out_policy=ph2.out_policy,
        samples_used=stream.consumed - start,
        erm_calls=oracle.calls,
        p_hat=fw.p.weights.tolist(),
        variance_audit=ph2.variances.tolist(),
        estimates=ph2.estimates.tolist(),
        flags=flags,
        matched=n_matched,
    )
    if inst is not None and cfg.diagnostics:
        _diagnose(report, inst, cls, fw.p, cfg.gamma)
    return report


def pac_sample_budget(s: float, m: int, eps: float, delta: float, n_policies: int, c: float = 16.0) -> int:
    """Phase-2 size ``ceil(c * (s m / eps^2) * ln(|Pi| / delta))``."""
    return math.ceil(c * (s * m / eps ** 2) * math.log(n_policies / delta))

