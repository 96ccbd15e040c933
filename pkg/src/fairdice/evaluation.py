"""Exact policy evaluation and welfare reporting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .momdp import MOMDP, occupancy_returns, policy_occupancy
from .scalarization import WelfareMetrics, divergence, welfare_metrics


@dataclass
class PolicyEvaluation:
    returns: np.ndarray
    metrics: WelfareMetrics
    d_pi: np.ndarray


def evaluate_policy(m: MOMDP, pi, clamp_eps: float = 1e-6, normalized: bool = True) -> PolicyEvaluation:
    """Returns and welfare of ``pi`` under the true model.

    With ``normalized`` the returns are sum d_pi r (occupancy sums to one);
    otherwise they are the raw discounted sums, i.e. divided by (1 - gamma).
    """
    d_pi = policy_occupancy(m, pi)
    returns = occupancy_returns(m, d_pi)
    if not normalized:
        returns = returns / (1.0 - m.gamma)
    return PolicyEvaluation(returns, welfare_metrics(returns, clamp_eps), d_pi)


def divergence_report(d_star, d_data, family: str = "chi2") -> float:
    """D_f(d* || d_D) with the 0 * f(0/0) = 0 convention."""
    return divergence(family, d_star, d_data)


def monte_carlo_returns(m: MOMDP, pi, n: int, horizon: int, seed: int = 0) -> np.ndarray:
    """Normalized discounted returns averaged over ``n`` parallel rollouts (for spot checks)."""
    rng = np.random.default_rng(seed)
    pi_cdf = np.cumsum(np.asarray(pi, dtype=float), axis=1)
    T_cdf = np.cumsum(m.transition, axis=2)
    s = np.minimum((rng.random((n, 1)) > np.cumsum(m.p0)).sum(axis=1), m.n_states - 1)
    total = np.zeros(m.n_objectives)
    disc = 1.0
    for _ in range(horizon):
        a = np.minimum((rng.random((n, 1)) > pi_cdf[s]).sum(axis=1), m.n_actions - 1)
        total += disc * m.reward[s, a].sum(axis=0)
        s = np.minimum((rng.random((n, 1)) > T_cdf[s, a]).sum(axis=1), m.n_states - 1)
        disc *= m.gamma
    return (1.0 - m.gamma) * total / n
