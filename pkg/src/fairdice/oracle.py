"""Primal reference solvers for small instances.

These work directly on the occupancy ``d`` over the Bellman-flow polytope,
with no Lagrange multipliers and no conjugates, so they share no code path
with :mod:`fairdice.solver`:

* ``P1``:     max sum_i u(J_i(d))
* ``P2_reg``: max sum_i u(J_i(d)) - beta * D_f(d || d_D)
* ``P3_reg``: max sum_i w_i J_i(d) - beta * D_f(d || d_D)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import scalarization as sc
from .momdp import MOMDP, policy_occupancy, uniform_policy

VARIANTS = ("P1", "P2_reg", "P3_reg")


@dataclass
class PrimalProblem:
    m: MOMDP
    variant: str = "P1"
    d_data: Optional[np.ndarray] = None
    beta: float = 0.0
    alpha: float = 1.0
    divergence: str = "chi2"
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        self.variant = {"p1": "P1", "p2reg": "P2_reg", "p3reg": "P3_reg"}.get(self.variant, self.variant)
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.variant != "P1":
            if self.d_data is None or not self.beta > 0:
                raise ValueError(f"{self.variant} needs d_data and beta > 0")
            self.d_data = np.asarray(self.d_data, dtype=float)
            self.d_data = self.d_data / self.d_data.sum()
        if self.variant == "P3_reg":
            if self.weights is None:
                raise ValueError("P3_reg needs scalarization weights")
            self.weights = np.asarray(self.weights, dtype=float)
        if self.m.n_states * self.m.n_actions > 200:
            raise ValueError("primal oracle is meant for at most 200 state-action pairs")

    def support(self) -> np.ndarray:
        if self.d_data is None:
            return np.ones(self.m.shape, dtype=bool)
        return self.d_data > 0


@dataclass
class PrimalResult:
    d: np.ndarray
    k: np.ndarray
    welfare: float
    iterations: int
    converged: bool


def _utility(alpha, k):
    if alpha == 0:
        return float(np.sum(k))
    if np.any(k <= 0):
        return -np.inf
    return float(np.sum(sc.u_eval(alpha, k)))


def primal_objective(prob: PrimalProblem, d) -> float:
    d = np.asarray(d, dtype=float)
    k = np.einsum("sa,sai->i", d, prob.m.reward)
    if prob.variant == "P3_reg":
        val = float(prob.weights @ k)
    else:
        val = _utility(prob.alpha, k)
    if prob.variant != "P1":
        val -= prob.beta * sc.divergence(prob.divergence, d, prob.d_data)
    return val


def _primal_gradient(prob: PrimalProblem, d) -> np.ndarray:
    R = prob.m.reward
    k = np.einsum("sa,sai->i", d, R)
    if prob.variant == "P3_reg":
        coef = prob.weights
    elif prob.alpha == 0:
        coef = np.ones_like(k)
    else:
        coef = sc.u_prime(prob.alpha, np.maximum(k, 1e-300))
    g = R @ coef
    if prob.variant != "P1":
        mask = prob.d_data > 0
        x = np.where(mask, d / np.where(mask, prob.d_data, 1.0), 1.0)
        fp = sc.f_prime(prob.divergence, np.maximum(x, 1e-300))
        g = g - prob.beta * np.where(mask, fp, 0.0)
    return g


# projection onto {d >= 0 on the support : flow(d) = (1 - gamma) p0}


class FlowPolytope:
    def __init__(self, m: MOMDP, support: np.ndarray):
        S, A = m.shape
        self.shape = (S, A)
        self.idx = np.flatnonzero(support.ravel())
        ss, aa = np.divmod(self.idx, A)
        # M[s, j] = [s_j == s] - gamma T(s | s_j, a_j)
        M = -m.gamma * m.transition[ss, aa].T
        M[ss, np.arange(len(ss))] += 1.0
        self.M = M
        self.b = (1.0 - m.gamma) * m.p0
        self.bandit = S == 1

    def to_full(self, x):
        d = np.zeros(self.shape[0] * self.shape[1])
        d[self.idx] = x
        return d.reshape(self.shape)

    def from_full(self, d):
        return np.asarray(d, dtype=float).ravel()[self.idx]

    def project(self, y, tol=1e-14, max_iters=200):
        if self.bandit:
            return project_simplex(y, self.b[0] / self.M[0, 0])
        return self._project_ssn(y, tol, max_iters)

    def _project_ssn(self, y, tol, max_iters):
        """Semismooth Newton on the multipliers of the equality constraints."""
        M, b = self.M, self.b
        lam = np.zeros(M.shape[0])

        def psi(lam):
            x = np.maximum(0.0, y + M.T @ lam)
            return 0.5 * x @ x - lam @ b, x

        val, x = psi(lam)
        for _ in range(max_iters):
            r = M @ x - b
            if np.max(np.abs(r)) < tol:
                return x
            active = (y + M.T @ lam) > 0
            J = (M[:, active] @ M[:, active].T) + 1e-12 * np.eye(M.shape[0])
            step = -np.linalg.lstsq(J, r, rcond=None)[0]
            t = 1.0
            slope = r @ step
            while t > 1e-12:
                new_val, new_x = psi(lam + t * step)
                if new_val <= val + 1e-4 * t * slope + 1e-15 * abs(val):
                    break
                t *= 0.5
            lam = lam + t * step
            val, x = new_val, new_x
        if np.max(np.abs(M @ x - b)) > 1e-8:
            raise RuntimeError("flow polytope projection failed; polytope may be empty")
        return x


def project_simplex(y, total: float = 1.0) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x = total} (sort-based)."""
    y = np.asarray(y, dtype=float)
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - total
    ks = np.arange(1, len(y) + 1)
    rho = np.nonzero(u - css / ks > 0)[0][-1]
    return np.maximum(y - css[rho] / (rho + 1), 0.0)


def solve_primal(prob: PrimalProblem, tol: float = 1e-9, max_iters: int = 50_000,
                 d_init=None) -> PrimalResult:
    """Accelerated projected gradient ascent with backtracking and restarts.

    Starts from the uniform-policy occupancy (restricted to the data support),
    or ``d_init``. Stops when the gradient mapping L * |proj(y + g/L) - y| falls
    below ``tol``.
    """
    poly = FlowPolytope(prob.m, prob.support())
    if d_init is None:
        d_init = policy_occupancy(prob.m, uniform_policy(prob.m))
    x = poly.project(poly.from_full(d_init))

    def f(v):
        return primal_objective(prob, poly.to_full(v))

    def grad(v):
        return poly.from_full(_primal_gradient(prob, poly.to_full(v)))

    fx = f(x)
    if not np.isfinite(fx):
        raise ValueError("initial occupancy has non-positive returns; P1 needs an interior start")
    y, t, L = x.copy(), 1.0, 1.0
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        if np.any(y < 0) or not np.isfinite(fy := f(y)):
            y, t, fy = x.copy(), 1.0, fx
        at_x = t == 1.0
        gy = grad(y)
        while True:
            x_new = poly.project(y + gy / L)
            diff = x_new - y
            f_new = f(x_new)
            if np.isfinite(f_new) and f_new >= fy + gy @ diff - 0.5 * L * diff @ diff - 1e-14 * abs(fy):
                break
            L *= 2.0
            if L > 1e16:
                break
        if L * np.max(np.abs(diff)) < tol:
            converged = True
            if f_new >= fx:
                x, fx = x_new, f_new
            break
        if f_new < fx and not at_x:
            # function-value restart
            y, t = x.copy(), 1.0
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, fx, t = x_new, f_new, t_new
        L = max(L * 0.9, 1e-8)
    d = poly.to_full(x)
    k = np.einsum("sa,sai->i", d, prob.m.reward)
    return PrimalResult(d, k, primal_objective(prob, d), it, converged)


def grid_welfare_max(prob: PrimalProblem, resolution: float = 1e-3):
    """Exhaustive search over a simplex grid for a bandit with at most three actions.

    Returns (best d, best objective value).
    """
    m = prob.m
    if m.n_states != 1 or m.n_actions > 3:
        raise ValueError("grid search supports single-state problems with <= 3 actions")
    n = int(round(1.0 / resolution))
    ticks = np.arange(n + 1) / n
    if m.n_actions == 1:
        points = np.ones((1, 1))
    elif m.n_actions == 2:
        points = np.stack([ticks, 1.0 - ticks], axis=1)
    else:
        a, b = np.meshgrid(ticks, ticks, indexing="ij")
        ok = a + b <= 1.0 + 1e-12
        points = np.stack([a[ok], b[ok], np.clip(1.0 - a[ok] - b[ok], 0, None)], axis=1)
    values = np.array([primal_objective(prob, p[None, :]) for p in points])
    best = int(np.argmax(values))
    return points[best][None, :], float(values[best])


# worked examples

APPENDIX_B_REWARDS = [[1.0, 4.0], [3.0, 1.0]]
APPENDIX_C1_DATA = [0.7, 0.3]


def appendix_b_problem() -> PrimalProblem:
    from .momdp import bandit
    return PrimalProblem(bandit(APPENDIX_B_REWARDS), "P1", alpha=1.0)


def appendix_c1_problem(beta: float = 1.0, variant: str = "P2_reg", weights=None) -> PrimalProblem:
    from .momdp import bandit
    return PrimalProblem(bandit(APPENDIX_B_REWARDS), variant, np.array([APPENDIX_C1_DATA]),
                         beta=beta, alpha=1.0, divergence="chi2", weights=weights)
