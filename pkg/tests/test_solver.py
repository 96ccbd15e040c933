import warnings

import numpy as np
import pytest

from fairdice import scalarization as sc
from fairdice.data import estimates_for, sample_trajectories
from fairdice.momdp import MOMDP, bandit, bellman_flow_residual, policy_occupancy, uniform_policy
from fairdice.oracle import PrimalProblem, appendix_c1_problem, solve_primal
from fairdice.solver import (
    InfeasibleSupportError,
    SolverConfig,
    advantage,
    dual_gradients,
    dual_loss,
    solve,
    solve_fixed,
)

from conftest import random_momdp

# d*_1 of the regularized NSW bandit (chi2, beta = 1, d_D = (0.7, 0.3)), from a bracketing
# root-find on the one-dimensional primal optimality condition
REG_D1 = 0.6609330173508311
REG_K = np.array([3.0 - 2.0 * REG_D1, 1.0 + 3.0 * REG_D1])
REG_DF = 0.003633878888834436


def regularized_bandit():
    prob = appendix_c1_problem()
    return prob.m, prob.d_data


def test_regularized_bandit_matches_frozen_values():
    m, dd = regularized_bandit()
    sol = solve(SolverConfig(beta=1.0), dd, m)
    assert sol.diagnostics["converged"]
    assert np.allclose(sol.d_star[0], [REG_D1, 1 - REG_D1], atol=1e-9)
    assert np.allclose(sol.mu, 1.0 / REG_K, atol=1e-9)
    assert np.allclose(sol.k_star, REG_K, atol=1e-8)
    assert sol.diagnostics["divergence"] == pytest.approx(REG_DF, abs=1e-10)


def test_gradient_descent_agrees_with_newton():
    m, dd = regularized_bandit()
    newton = solve(SolverConfig(beta=1.0), dd, m)
    gd = solve(SolverConfig(beta=1.0, method="gd", learning_rate=0.1), dd, m)
    assert gd.diagnostics["converged"]
    assert np.allclose(gd.mu, newton.mu, atol=1e-6)
    assert np.allclose(gd.d_star, newton.d_star, atol=1e-6)


def test_polyak_averaging_runs():
    m, dd = regularized_bandit()
    # the uniform average still carries the early transient, so only rough agreement
    with pytest.warns(UserWarning, match="did not reach"):
        sol = solve(SolverConfig(beta=1.0, method="gd", polyak=True, max_iters=3000), dd, m)
    assert np.allclose(sol.d_star[0], [REG_D1, 1 - REG_D1], atol=3e-2)


def test_solution_invariants():
    rng = np.random.default_rng(1)
    m = random_momdp(rng, 6, 3, 3, 0.9)
    dd = rng.random(m.shape)
    dd /= dd.sum()
    cfg = SolverConfig(beta=0.3, alpha=1.0)
    sol = solve(cfg, dd, m)
    e = advantage(sol.nu, sol.mu, m, "exact_model")
    assert np.allclose(sol.w, np.maximum(0.0, sc.f_prime_inv("chi2", e / cfg.beta)))
    assert np.allclose(sol.d_star, sol.w * dd)
    assert np.all(sol.mu > 0)
    assert np.max(np.abs(bellman_flow_residual(m, sol.d_star))) < 1e-8
    assert np.allclose(sol.k_star, np.einsum("sa,sai->i", sol.d_star, m.reward), atol=1e-8)


@pytest.mark.parametrize("family", ["chi2", "soft_chi2"])
@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.25])
def test_dual_matches_primal_oracle(family, alpha):
    rng = np.random.default_rng(int(alpha * 100) + len(family))
    m = random_momdp(rng, 4, 2, 2, 0.8)
    dd = rng.random(m.shape)
    dd /= dd.sum()
    sol = solve(SolverConfig(beta=0.2, alpha=alpha, divergence=family), dd, m)
    ref = solve_primal(PrimalProblem(m, "P2_reg", dd, beta=0.2, alpha=alpha, divergence=family))
    assert np.max(np.abs(sol.d_star - ref.d)) < 1e-6


def test_fixed_weights_match_p3_oracle():
    rng = np.random.default_rng(5)
    m = random_momdp(rng, 5, 2, 3, 0.85)
    dd = rng.random(m.shape)
    dd /= dd.sum()
    w = np.array([0.5, 1.0, 2.0])
    sol = solve_fixed(SolverConfig(beta=0.5), w, dd, m)
    ref = solve_primal(PrimalProblem(m, "P3_reg", dd, beta=0.5, weights=w))
    assert np.max(np.abs(sol.d_star - ref.d)) < 1e-6
    assert np.array_equal(sol.mu, w)
    assert sol.k_star is None


def test_alpha_zero_warns_and_fixes_mu():
    m, dd = regularized_bandit()
    with pytest.warns(UserWarning, match="alpha = 0"):
        sol = solve(SolverConfig(beta=1.0, alpha=0.0), dd, m)
    assert np.array_equal(sol.mu, [1.0, 1.0])
    ref = solve_fixed(SolverConfig(beta=1.0), np.ones(2), dd, m)
    assert np.allclose(sol.d_star, ref.d_star)


def test_finite_difference_gradients():
    rng = np.random.default_rng(9)
    m = random_momdp(rng, 5, 2, 2, 0.9)
    dd = rng.random(m.shape)
    dd /= dd.sum()
    cfg = SolverConfig(beta=0.5, alpha=1.25, divergence="soft_chi2")
    nu = rng.normal(size=m.n_states)
    mu = rng.uniform(0.5, 2.0, size=2)
    g_nu, g_mu = dual_gradients(nu, mu, cfg, dd, m)
    h = 1e-6
    for j in range(m.n_states):
        e = np.zeros(m.n_states)
        e[j] = h
        fd = (dual_loss(nu + e, mu, cfg, dd, m) - dual_loss(nu - e, mu, cfg, dd, m)) / (2 * h)
        assert fd == pytest.approx(g_nu[j], rel=1e-5, abs=1e-8)
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd = (dual_loss(nu, mu + e, cfg, dd, m) - dual_loss(nu, mu - e, cfg, dd, m)) / (2 * h)
        assert fd == pytest.approx(g_mu[i], rel=1e-5, abs=1e-8)


def test_mu_must_be_positive():
    m, dd = regularized_bandit()
    with pytest.raises(ValueError):
        dual_loss(np.zeros(1), np.array([1.0, 0.0]), SolverConfig(beta=1.0), dd, m)
    with pytest.raises(ValueError):
        solve_fixed(SolverConfig(beta=1.0), [1.0, -1.0], dd, m)


def test_dual_loss_overflow_is_reported():
    m, dd = regularized_bandit()
    cfg = SolverConfig(beta=1e-300, divergence="soft_chi2")
    with pytest.raises(FloatingPointError):
        dual_loss(np.zeros(1), np.array([1e10, 1e10]), cfg, dd, m)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(beta=0.0)
    with pytest.raises(ValueError):
        SolverConfig(learning_rate=-1.0)
    with pytest.raises(ValueError):
        SolverConfig(e_mode="nonsense")
    with pytest.raises(ValueError):
        SolverConfig(divergence="kl")
    assert SolverConfig(e_mode="mle").e_mode == "mle_model"


def test_non_convergence_warns_and_returns_iterate():
    rng = np.random.default_rng(2)
    m = random_momdp(rng, 6, 2, 2, 0.9)
    dd = np.full(m.shape, 1.0 / (6 * 2))
    with pytest.warns(UserWarning, match="did not reach"):
        sol = solve(SolverConfig(beta=0.01, max_iters=1), dd, m)
    assert not sol.diagnostics["converged"]
    assert np.all(np.isfinite(sol.d_star))


def test_large_beta_recovers_data_distribution():
    rng = np.random.default_rng(4)
    m = random_momdp(rng, 6, 3, 2, 0.9)
    # a flow-consistent d_D: the occupancy of a random policy
    pi = rng.random(m.shape)
    pi /= pi.sum(axis=1, keepdims=True)
    dd = policy_occupancy(m, pi)
    sol = solve(SolverConfig(beta=1e6), dd, m)
    assert np.max(np.abs(sol.d_star - dd)) < 1e-5


def test_infeasible_support_raises():
    # start state 0 only has data on an action leading to state 1, which has no data
    T = np.zeros((2, 1, 2))
    T[0, 0, 1] = T[1, 0, 1] = 1.0
    m = MOMDP(T, np.ones((2, 1, 1)), [1.0, 0.0], 0.9)
    with pytest.raises(InfeasibleSupportError):
        solve(SolverConfig(beta=1.0), np.array([[1.0], [0.0]]), m)


def test_partial_support_is_pruned_not_fatal():
    # action 1 in state 0 leads to the unsupported state 2; action 0 stays feasible
    T = np.zeros((3, 2, 3))
    T[0, 0, 1] = T[0, 1, 2] = 1.0
    T[1, :, 0] = 1.0
    T[2, :, 2] = 1.0
    m = MOMDP(T, np.ones((3, 2, 1)), [1.0, 0.0, 0.0], 0.9)
    dd = np.array([[0.3, 0.2], [0.5, 0.0], [0.0, 0.0]])
    sol = solve(SolverConfig(beta=1.0, alpha=1.0), dd, m)
    assert sol.diagnostics["pruned_rows"] == 1
    assert sol.d_star[0, 1] == 0.0
    assert np.max(np.abs(bellman_flow_residual(m, sol.d_star))) < 1e-8


def test_offline_modes_agree_on_large_dataset():
    rng = np.random.default_rng(6)
    m = random_momdp(rng, 4, 2, 2, 0.7)
    ds = sample_trajectories(m, uniform_policy(m), 2000, 40, seed=0)
    est = estimates_for(m, ds)
    cfg = dict(beta=0.5, alpha=1.0)
    exact = solve(SolverConfig(e_mode="exact_model", **cfg), est, m)
    mle = solve(SolverConfig(e_mode="mle_model", **cfg), est, m)
    sampled = solve(SolverConfig(e_mode="sampled", **cfg), est, m)
    assert np.max(np.abs(mle.d_star - exact.d_star)) < 0.02
    # per-transition conjugates add a Jensen gap, which shrinks with beta
    assert sampled.diagnostics["converged"]
    assert np.max(np.abs(sampled.d_star - mle.d_star)) < 0.05
    big = dict(beta=50.0, alpha=1.0)
    gap = np.max(np.abs(solve(SolverConfig(e_mode="sampled", **big), est, m).d_star
                        - solve(SolverConfig(e_mode="mle_model", **big), est, m).d_star))
    assert gap < 1e-3


def test_modes_need_the_right_inputs():
    m, dd = regularized_bandit()
    with pytest.raises(ValueError):
        solve(SolverConfig(beta=1.0, e_mode="mle"), dd, m)
    with pytest.raises(ValueError):
        solve(SolverConfig(beta=1.0), dd, None)


def test_reward_scale_only_rescales_weights_for_nsw():
    m, dd = regularized_bandit()
    a = solve(SolverConfig(beta=1.0), dd, m)
    b = solve(SolverConfig(beta=1.0, reward_scale=20.0), dd, m)
    assert np.allclose(a.d_star, b.d_star, atol=1e-8)
    assert np.allclose(b.mu * 20.0, a.mu, atol=1e-8)


def test_solution_json_fields():
    m, dd = regularized_bandit()
    doc = solve(SolverConfig(beta=1.0), dd, m).to_dict()
    for key in ("nu", "mu", "k_star", "w_support", "d_star", "policy", "diagnostics"):
        assert key in doc
    assert {"loss", "grad_nu_max", "grad_mu_max", "iterations"} <= set(doc["diagnostics"])


def test_bandit_with_three_objectives_runs_without_warnings():
    m = bandit([[1.0, 0.0, 0.2], [0.0, 1.0, 0.2], [0.3, 0.3, 0.9]])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sol = solve(SolverConfig(beta=0.1), np.array([[0.5, 0.3, 0.2]]), m)
    assert sol.diagnostics["converged"]
