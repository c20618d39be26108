"""Acceptance criteria, one test per criterion.

Each test prints a single ``CRITERION n: PASS|FAIL`` line (visible under
``pytest -v``) before asserting, so the run log doubles as the report.
"""
import math
import time
from itertools import product

import numpy as np
import pytest

from semibandit.core import ActionSubset, SimplexWeights, sample_mixed_actions, sample_uniform_actions
from semibandit.environments import (
    Instance,
    LowerBoundSpec,
    exact_policy_rewards,
    lower_bound_instance,
    loss_sequence,
    planted_gap_instance,
    random_sparse_instance,
)
from semibandit.fw_objective import (
    Phase1Batch,
    empirical_gradient,
    empirical_log_barrier,
    exact_estimator_audit,
    exact_population_objective,
    population_frank_wolfe,
    run_frank_wolfe,
)
from semibandit.harness import lower_bound_sanity, sparsity_sweep
from semibandit.oracle import loo
from semibandit.pac import PacConfig, pac_comband, pac_sample_budget, phase2_estimates, policy_estimators
from semibandit.regret import exp4_comb_sparse, loss_estimate, solve_ftrl

from helpers import (
    central_difference,
    enumerate_mixed_law,
    erm_from_batch,
    interior_point,
    random_batch,
    random_bernoulli_instance,
    random_class,
)
from test_regret import two_policy_reference


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail

    return _report


def bernoulli_outcomes(means):
    """All reward vectors of a product-Bernoulli law with their probabilities."""
    K = len(means)
    vecs = np.array(list(product((0.0, 1.0), repeat=K)))
    probs = np.prod(np.where(vecs == 1.0, means, 1.0 - means), axis=1)
    return vecs, probs


def test_1_exact_unbiasedness(report):
    start = time.perf_counter()
    worst_pac = worst_regret = 0.0
    n_inst = 20
    for seed in range(n_inst):
        rng = np.random.default_rng(seed)
        K = int(rng.integers(3, 6))
        m = int(rng.integers(1, 3))
        n = int(rng.integers(2, 6))
        X = int(rng.integers(1, 4))
        cls = random_class(K, m, X, n, rng)
        inst = random_bernoulli_instance(K, m, 2.0, X, rng)
        p = SimplexWeights(rng.dirichlet(np.ones(n)))
        gamma = float(rng.uniform(0.05, 0.5))
        truth = exact_policy_rewards(inst, cls)
        e_pac = np.zeros(n)
        e_regret = np.zeros(n)
        for x in range(X):
            vecs, rprobs = bernoulli_outcomes(inst.means[x])
            law = enumerate_mixed_law(p, cls, x, gamma)
            for a, pa in law.items():
                acts = np.tile(np.array(a), (len(vecs), 1))
                ctx = np.full(len(vecs), x)
                R = policy_estimators(cls, ctx, phase2_estimates(cls, p, gamma, ctx, vecs, acts))
                e_pac += inst.probs[x] * pa * (rprobs @ R)
            for j in range(n):
                if p.weights[j] == 0:
                    continue
                a = cls.table[j, x]
                chat = np.array([loss_estimate(p, cls, x, a, -r[a]) for r in vecs])
                e_regret += inst.probs[x] * p.weights[j] * (rprobs @ chat)
        worst_pac = max(worst_pac, np.abs(e_pac - truth).max())
        worst_regret = max(worst_regret, np.abs(e_regret + truth).max())
    elapsed = time.perf_counter() - start
    ok = worst_pac <= 1e-12 and worst_regret <= 1e-12 and elapsed < 10
    report(1, ok, f"{n_inst} instances, max |E R - r| = {worst_pac:.2e}, max |E c_hat - c| = {worst_regret:.2e}, "
                  f"{elapsed:.1f}s")


def test_2_gradient_finite_differences(report):
    start = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        cls = random_class(6, 2, 3, 5, rng)
        inst = random_bernoulli_instance(6, 2, 2.0, 3, rng)
        p = interior_point(5, rng).weights
        batch = random_batch(inst, cls, 50, rng)
        emp = empirical_log_barrier(batch, cls, 0.5)
        for value, grad in ((emp.value, empirical_gradient(p, batch, cls, 0.5)),
                            (lambda w: exact_population_objective(w, inst, cls, 0.5)[0],
                             exact_population_objective(p, inst, cls, 0.5)[1])):
            fd = central_difference(value, p, 1e-6)
            worst = max(worst, np.abs(fd - grad).max() / np.abs(grad).max())
    elapsed = time.perf_counter() - start
    report(2, worst <= 1e-5 and elapsed < 10, f"20 pairs x 2 objectives, max relative error {worst:.2e}, "
                                              f"{elapsed:.1f}s")


def test_3_loo_equals_erm(report):
    start = time.perf_counter()
    cases = mismatches = 0
    for seed in range(25):
        rng = np.random.default_rng(200 + seed)
        n = int(rng.integers(2, 8))
        cls = random_class(6, 2, 3, n, rng)
        inst = random_bernoulli_instance(6, 2, 2.0, 3, rng)
        batch = random_batch(inst, cls, int(rng.integers(5, 60)), rng)
        # FW iterates plus random interior points
        obj = empirical_log_barrier(batch, cls, 0.5)
        iterates = []
        run_frank_wolfe(obj, 3, callback=lambda t, p: iterates.append(p.copy()))
        points = iterates + [interior_point(n, rng).weights]
        for p in points:
            cases += 1
            if loo(cls, empirical_gradient(p, batch, cls, 0.5)) != erm_from_batch(batch, cls, p, 0.5):
                mismatches += 1
    elapsed = time.perf_counter() - start
    report(3, cases >= 100 and mismatches == 0 and elapsed < 5,
           f"{cases} cases, {mismatches} index mismatches, {elapsed:.1f}s")


def fw_fixture():
    """Fixed 5-policy, K = 6, m = 2 batch of 3000 uniform-exploration records."""
    rng = np.random.default_rng(3)
    K, m = 6, 2
    cls = random_class(K, m, 3, 5, rng)
    rewards = rng.random((3, K))
    rewards *= (2.0 / rewards.sum(axis=1))[:, None] * 0.9
    inst = Instance.deterministic(np.full(3, 1 / 3), np.minimum(rewards, 1.0), m, 2.0)
    contexts, rw = inst.sample(3000, rng)
    return cls, Phase1Batch.from_rounds(contexts, rw, sample_uniform_actions(K, m, 3000, rng))


def test_4_frank_wolfe_convergence(report):
    start = time.perf_counter()
    cls, batch = fw_fixture()
    obj = empirical_log_barrier(batch, cls, 0.5)
    f_star = obj.value(run_frank_wolfe(obj, 200_000, record=False).p)
    gaps = [obj.value(run_frank_wolfe(obj, T, record=False).p) - f_star for T in (50, 200, 2000)]
    elapsed = time.perf_counter() - start
    monotone = gaps[0] >= gaps[1] >= gaps[2]
    ratio = gaps[2] / gaps[0]
    report(4, monotone and ratio <= 1e-3 and elapsed < 60,
           f"gaps at T=50/200/2000: {gaps[0]:.3e}/{gaps[1]:.3e}/{gaps[2]:.3e}, ratio {ratio:.2e}, {elapsed:.1f}s")


S_BOUND = 2.0
GAMMA = 0.5


@pytest.fixture(scope="module")
def sparse_instances():
    """Ten seeded sure-sparse instances with reference minimizers of the exact objective."""
    start = time.perf_counter()
    out = []
    for seed in range(10):
        inst, cls = random_sparse_instance(6, 2, S_BOUND, 3, 5, np.random.default_rng(300 + seed))
        p_star = population_frank_wolfe(inst, cls, GAMMA, 200_000).p
        out.append((inst, cls, p_star))
    return out, time.perf_counter() - start


def within_gap_points(inst, cls, p_star, mu, rng, n_dirs=20):
    """Points on segments from ``p_star`` whose exact-objective gap is at most ``mu``."""
    f = lambda w: exact_population_objective(w, inst, cls, GAMMA)[0]
    f_star = f(p_star.weights)
    pts = []
    for k in range(n_dirs):
        q = np.eye(cls.n_policies)[k % cls.n_policies] if k < cls.n_policies else rng.dirichlet(np.ones(cls.n_policies))
        d = q - p_star.weights
        lo, hi = 0.0, 1.0
        if f(p_star.weights + d) - f_star <= mu:
            lo = 1.0
        else:
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if f(p_star.weights + mid * d) - f_star <= mu:
                    lo = mid
                else:
                    hi = mid
        for t in (lo, 0.5 * lo):
            pts.append(p_star.weights + t * d)
    return pts


def test_5_gradient_bounds(report, sparse_instances):
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    K, m = 6, 2
    mu = S_BOUND * GAMMA ** 2 * m ** 2 / (2 * K ** 2)
    worst_star = worst_near = 0.0
    instances, setup = sparse_instances
    for inst, cls, p_star in instances:
        worst_star = max(worst_star, np.abs(exact_population_objective(p_star, inst, cls, GAMMA)[1]).max())
        for p in within_gap_points(inst, cls, p_star, mu, rng):
            worst_near = max(worst_near, np.abs(exact_population_objective(p, inst, cls, GAMMA)[1]).max())
    elapsed = time.perf_counter() - start + setup
    ok = worst_star <= 1.05 * S_BOUND and worst_near <= 2.1 * S_BOUND and elapsed < 120
    report(5, ok, f"max ||grad||_inf at minimizer {worst_star:.4f} (<= {1.05 * S_BOUND}), within gap {mu:.4f}: "
                  f"{worst_near:.4f} (<= {2.1 * S_BOUND}), {elapsed:.1f}s incl. reference solves")


def test_6_variance_bound(report, sparse_instances):
    start = time.perf_counter()
    m = 2
    worst_audit = worst_var = 0.0
    for k, (inst, cls, p_star) in enumerate(sparse_instances[0]):
        if np.abs(exact_population_objective(p_star, inst, cls, GAMMA)[1]).max() > 1.05 * S_BOUND:
            continue
        worst_audit = max(worst_audit, exact_estimator_audit(p_star, inst, cls, GAMMA).max())
        rng = np.random.default_rng(600 + k)
        contexts, rewards = inst.sample(10_000, rng)
        actions, _ = sample_mixed_actions(p_star, cls, contexts, GAMMA, rng)
        R = policy_estimators(cls, contexts, phase2_estimates(cls, p_star, GAMMA, contexts, rewards, actions))
        worst_var = max(worst_var, R.var(axis=0, ddof=1).max())
    elapsed = time.perf_counter() - start
    ok = worst_audit <= 4 * S_BOUND and worst_var <= 5 * S_BOUND * m and elapsed < 60
    report(6, ok, f"max exact audit {worst_audit:.4f} (<= {4 * S_BOUND}), max empirical Var {worst_var:.4f} "
                  f"(<= {5 * S_BOUND * m}), {elapsed:.1f}s")


def test_7_pac_success_rate(report):
    start = time.perf_counter()
    eps, delta, s, m, n_pol = 0.2, 0.1, 2.0, 2, 16
    inst, cls = planted_gap_instance(8, m, s, 6, n_pol, 0.4, np.random.default_rng(7))
    N2 = pac_sample_budget(s, m, eps, delta, n_pol)
    wins = 0
    for seed in range(50):
        rep = pac_comband(inst, cls, PacConfig(N1=5000, N2=N2, T=2000, gamma=0.5, seed=seed))
        wins += rep.gap <= eps
    elapsed = time.perf_counter() - start
    report(7, wins >= 45 and elapsed < 600, f"{wins}/50 eps-optimal (N2={N2}), {elapsed:.1f}s")


def test_8_ftrl_solver(report):
    start = time.perf_counter()
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 40))
        scale = 10 ** rng.uniform(-2, 4)
        C = rng.normal(scale=scale, size=n)
        eta = 10 ** rng.uniform(-3, 1)
        nu = 10 ** rng.uniform(-3, 0)
        worst = max(worst, solve_ftrl(C, eta, nu).residual)
    grid_err = 0.0
    cases = [(np.array([0.0, 1.0]), 1.0, 1 / 16)]
    for _ in range(10):
        cases.append((rng.normal(size=2) * 3, 10 ** rng.uniform(-1, 0.5), 10 ** rng.uniform(-2, 0)))
    for C, eta, nu in cases:
        grid_err = max(grid_err, abs(solve_ftrl(C, eta, nu).p[0] - two_policy_reference(C, eta, nu)))
    elapsed = time.perf_counter() - start
    report(8, worst <= 1e-8 and grid_err <= 1e-5 and elapsed < 30,
           f"max KKT residual {worst:.2e} over 1000 cases, max |p - grid| {grid_err:.2e} on {len(cases)} "
           f"two-policy cases, {elapsed:.1f}s")


def test_9_log_barrier_stability(report):
    start = time.perf_counter()
    inst, cls = random_sparse_instance(8, 2, 2.0, 5, 8, np.random.default_rng(9))
    contexts, losses = loss_sequence(inst, 10_000, np.random.default_rng(90))
    run = exp4_comb_sparse(contexts, losses, cls, nu=1 / 16, rng=np.random.default_rng(91), s=2.0)
    worst = float(run.max_ratio.max())
    elapsed = time.perf_counter() - start
    report(9, worst <= 2 * (1 + 1e-6) and elapsed < 300, f"max p_t+1/p_t = {worst:.6f} over 10^4 rounds, "
                                                         f"{elapsed:.1f}s")


def test_10_regret_sparsity_trend(report):
    start = time.perf_counter()
    T = 20_000
    table = sparsity_sweep([1, 4, 16], K=32, m=2, n_policies=8, n_contexts=20, T=T, seeds=10, family_seed=1234)
    sparse = [r for r in table if r["algorithm"] == "sparse"]
    base = {r["s"]: r for r in table if r["algorithm"] == "baseline"}
    sublinear = all(r["mean"] / T <= 0.5 * r["mean_at_tenth"] / (T / 10) for r in sparse)
    monotone = sparse[0]["mean"] < sparse[1]["mean"] < sparse[2]["mean"]
    s1, b1 = sparse[0], base[1]
    separated = b1["mean"] - s1["mean"] > 2 * math.hypot(s1["se"], b1["se"])
    elapsed = time.perf_counter() - start
    rows = ", ".join(f"s={r['s']}: {r['mean']:.0f}+-{r['se']:.0f} (T/10: {r['mean_at_tenth']:.0f})" for r in sparse)
    report(10, sublinear and monotone and separated and elapsed < 1800,
           f"sparse {rows}; baseline s=1: {b1['mean']:.0f}+-{b1['se']:.0f}; {elapsed:.1f}s")


def test_11_lower_bound_sanity(report):
    start = time.perf_counter()
    grid = [LowerBoundSpec(K, m, s, eps, ActionSubset(tuple(range(m)), K))
            for K, m, s, eps in [(12, 1, 2, 0.0), (12, 1, 2, 0.06), (12, 2, 4, 0.05), (20, 5, 8, 0.2),
                                 (48, 2, 40, 0.1), (48, 2, 40, 0.0), (100, 10, 30, 0.5)]]
    total_err = max(abs(lower_bound_instance(spec).means.sum() - spec.s / 2) for spec in grid)
    spec = LowerBoundSpec(48, 2, 40.0, 0.1, ActionSubset((0, 1), 48))
    rep = lower_bound_sanity([spec], seeds=20, seed=11, T_violation=1000, T_multipliers=())
    row = rep.rows[0]
    bound = 1000 * math.exp(-40 / 4)
    elapsed = time.perf_counter() - start
    ok = total_err <= 1e-12 and row["violation_round_freq"] <= bound and row["violation_run_freq"] <= bound
    report(11, ok and elapsed < 120,
           f"max |sum means - s/2| = {total_err:.1e} over {len(grid)} specs; violation frequency per round "
           f"{row['violation_round_freq']:.2e}, per run {row['violation_run_freq']:.2e} (bound {bound:.3e}), "
           f"{elapsed:.1f}s")
