import math
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semibandit.core import ContractViolation, PolicyClass
from semibandit.environments import loss_sequence, planted_gap_instance
from semibandit.regret import (
    KKT_TOL,
    exp4_comb_sparse,
    exp4_entropy_baseline,
    exponential_weights,
    ftrl_objective,
    ftrl_solve,
    kkt_residual,
    loss_estimate,
    read_loss_sequence,
    solve_ftrl,
    default_rates,
    write_loss_sequence,
)

from helpers import random_class


def golden_section_min(f, lo, hi, tol=1e-13):
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    while b - a > tol:
        if f(c) < f(d):
            b = d
        else:
            a = c
        c, d = b - invphi * (b - a), a + invphi * (b - a)
    return 0.5 * (a + b)


def two_policy_reference(C, eta, nu):
    """Grid search over p_1 in (0, 1) refined by golden section."""
    f = lambda t: ftrl_objective(np.array([t, 1 - t]), C, eta, nu)
    grid = np.linspace(1e-6, 1 - 1e-6, 200001)
    vals = [f(t) for t in grid[::100]]
    k = int(np.argmin(vals)) * 100
    lo, hi = grid[max(k - 100, 0)], grid[min(k + 100, len(grid) - 1)]
    return golden_section_min(f, lo, hi)


class TestFtrlSolver:
    def test_single_policy(self):
        assert ftrl_solve(np.array([3.0]), 0.5, 1 / 16).weights.tolist() == [1.0]

    def test_constant_losses_uniform(self):
        np.testing.assert_allclose(ftrl_solve(np.full(5, -2.5), 0.3, 1 / 16).weights, 0.2, atol=1e-14)

    def test_two_policy_grid_oracle(self):
        C = np.array([0.0, 1.0])
        p = solve_ftrl(C, 1.0, 1 / 16).p
        assert abs(p[0] - two_policy_reference(C, 1.0, 1 / 16)) <= 1e-6

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 30), st.integers(0, 2 ** 32 - 1), st.floats(1e-3, 10.0), st.floats(1e-3, 1.0),
           st.floats(0.0, 1e4))
    def test_kkt_and_interior(self, n, seed, eta, nu, scale):
        C = np.random.default_rng(seed).random(n) * scale - scale / 2
        sol = solve_ftrl(C, eta, nu)
        assert sol.residual <= KKT_TOL
        assert np.all(sol.p > 0)
        assert kkt_residual(C, sol.p, sol.lam, eta, nu) == sol.residual

    def test_minimizes_objective(self, rng):
        C = rng.random(4) * 5
        p = solve_ftrl(C, 0.7, 0.1).p
        best = ftrl_objective(p, C, 0.7, 0.1)
        for _ in range(200):
            q = np.clip(p + rng.normal(scale=1e-3, size=4), 1e-9, None)
            q /= q.sum()
            assert ftrl_objective(q, C, 0.7, 0.1) >= best - 1e-12

    def test_rejects_bad_input(self):
        with pytest.raises(ContractViolation):
            solve_ftrl(np.array([np.inf, 0.0]), 1.0, 1.0)
        with pytest.raises(ContractViolation):
            solve_ftrl(np.array([0.0, 0.0]), 0.0, 1.0)


class TestLossEstimate:
    def test_zero_losses(self, rng):
        cls = random_class(4, 2, 1, 3, rng)
        np.testing.assert_array_equal(loss_estimate(np.full(3, 1 / 3), cls, 0, cls.table[1, 0], [0.0, 0.0]), 0.0)

    def test_single_policy_exact(self):
        cls = PolicyClass(np.array([[[1, 3]]]), 4)
        assert loss_estimate(np.ones(1), cls, 0, [1, 3], [-0.25, -0.5])[0] == -0.75

    def test_unbiased_by_enumeration(self, rng):
        cls = random_class(4, 2, 1, 3, rng)
        p = np.array([0.2, 0.5, 0.3])
        losses = -rng.random(4)
        expected = np.zeros(3)
        for j in range(3):
            a = cls.table[j, 0]
            expected += p[j] * loss_estimate(p, cls, 0, a, losses[a])
        truth = np.array([losses[cls.table[j, 0]].sum() for j in range(3)])
        np.testing.assert_allclose(expected, truth, rtol=1e-12, atol=1e-15)


class TestExp4:
    def setup_method(self):
        rng = np.random.default_rng(0)
        self.cls = random_class(6, 2, 3, 4, rng)
        self.contexts = rng.integers(3, size=200)
        self.losses = -rng.random((200, 6)) * 0.5

    def test_single_policy_zero_regret(self):
        cls = PolicyClass(self.cls.table[:1], 6)
        for algo in (exp4_comb_sparse, exp4_entropy_baseline):
            run = algo(self.contexts, self.losses, cls)
            np.testing.assert_array_equal(run.regret, 0.0)

    def test_empty_horizon(self):
        run = exp4_comb_sparse(self.contexts[:0], self.losses[:0], self.cls)
        assert run.regret.size == 0 and run.terminal_regret == 0.0

    def test_zero_losses_stay_uniform(self):
        zeros = np.zeros_like(self.losses)
        for algo in (exp4_comb_sparse, exp4_entropy_baseline):
            run = algo(self.contexts, zeros, self.cls, eta=0.1)
            np.testing.assert_allclose(run.p_final, 0.25, atol=1e-14)
            np.testing.assert_allclose(run.min_p, 0.25, atol=1e-14)

    def test_exponential_weights_matches_multiplicative_update(self, rng):
        eta = 0.3
        w = np.ones(5)
        C = np.zeros(5)
        for _ in range(50):
            c = -rng.random(5)
            w = w * np.exp(-eta * c)
            w /= w.sum()
            C += c
            np.testing.assert_allclose(exponential_weights(C, eta), w, rtol=1e-12)

    def test_deterministic_under_seed(self):
        a = exp4_comb_sparse(self.contexts, self.losses, self.cls, rng=np.random.default_rng(4))
        b = exp4_comb_sparse(self.contexts, self.losses, self.cls, rng=np.random.default_rng(4))
        np.testing.assert_array_equal(a.regret, b.regret)

    def test_rejects_positive_losses(self):
        with pytest.raises(ContractViolation):
            exp4_comb_sparse(self.contexts, -self.losses, self.cls)

    def test_default_rates(self):
        eta, nu = default_rates(8, 2, 4, 100)
        assert eta == pytest.approx(math.sqrt(math.log(8) / 800)) and nu == 1 / 16

    def test_dominant_policy_sublinear(self):
        K, m, s, T = 16, 2, 2.0, 20000
        inst, cls = planted_gap_instance(K, m, s, 4, 8, 0.3 * s, np.random.default_rng(5))
        gap = 0.3 * s
        avg = []
        for seed in range(10):
            contexts, losses = loss_sequence(inst, T, np.random.default_rng(100 + seed))
            run = exp4_comb_sparse(contexts, losses, cls, rng=np.random.default_rng(seed), s=s)
            avg.append(run.terminal_regret / T)
        assert np.mean(avg) <= gap / 3


def test_loss_sequence_csv_round_trip(tmp_path, rng):
    contexts = rng.integers(3, size=10)
    losses = -rng.random((10, 4))
    path = tmp_path / "losses.csv"
    write_loss_sequence(path, contexts, losses)
    c2, l2 = read_loss_sequence(path)
    np.testing.assert_array_equal(c2, contexts)
    np.testing.assert_array_equal(l2, losses)
