"""FairDICE dual solver for tabular problems.

The loss minimized over state potentials ``nu`` and objective weights ``mu > 0`` is::

    L(nu, mu) = (1 - gamma) E_{p0}[nu(s)]
                + E_{d_D}[beta * f_conj0(e(s, a) / beta)]
                + sum_i u_conj(-mu_i)

    e(s, a) = sum_i mu_i r_i(s, a) + gamma E_{s' ~ T(.|s, a)}[nu(s')] - nu(s)

It is convex and piecewise twice differentiable, and the optimal occupancy is
``d*(s, a) = max(0, (f')^{-1}(e / beta)) * d_D(s, a)``. ``solve_fixed`` freezes
``mu`` (regularized linear scalarization).

Three views of the data are supported through ``e_mode``:

* ``exact_model``: the true MOMDP supplies T, r and p0; only d_D comes from data.
* ``mle_model``: T_hat, r_hat and p0_hat estimated from the dataset.
* ``sampled``: one term per dataset transition, using ``nu(s_next)`` of the sample.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, asdict
from typing import Optional, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import scalarization as sc
from .data import EmpiricalEstimates
from .momdp import MOMDP, policy_from_occupancy

log = logging.getLogger(__name__)

# problems with at most this many B entries are solved with dense algebra
DENSE_LIMIT = 4_000_000

E_MODES = ("exact_model", "mle_model", "sampled")
E_MODE_ALIASES = {"exact": "exact_model", "mle": "mle_model", "model": "exact_model"}


class InfeasibleSupportError(RuntimeError):
    """No occupancy supported on the data can satisfy the flow constraints."""


@dataclass
class SolverConfig:
    beta: float = 0.01
    alpha: float = 1.0
    divergence: str = "chi2"
    learning_rate: float = 0.1
    max_iters: int = 200_000
    grad_tol: float = 1e-8
    e_mode: str = "exact_model"
    mu_parameterization: str = "log_space"
    method: str = "newton"
    polyak: bool = False
    reward_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.e_mode = E_MODE_ALIASES.get(self.e_mode, self.e_mode)
        if not self.beta > 0:
            raise ValueError("beta must be > 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.e_mode not in E_MODES:
            raise ValueError(f"e_mode must be one of {E_MODES}")
        if self.method not in ("newton", "gd"):
            raise ValueError("method must be 'newton' or 'gd'")
        if self.mu_parameterization != "log_space":
            raise ValueError("only log_space mu parameterization is supported")
        sc._check_family(self.divergence)


@dataclass
class DualSolution:
    nu: np.ndarray
    mu: np.ndarray
    w: np.ndarray
    d_star: np.ndarray
    k_star: Optional[np.ndarray]
    policy: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        support = np.argwhere(self.d_star > 0)
        return {
            "nu": self.nu.tolist(),
            "mu": self.mu.tolist(),
            "k_star": None if self.k_star is None else self.k_star.tolist(),
            "w_support": [[int(s), int(a), float(self.w[s, a])] for s, a in support],
            "d_star": self.d_star.tolist(),
            "policy": self.policy.tolist(),
            "diagnostics": self.diagnostics,
        }


# problem assembly


@dataclass
class _Problem:
    """Rows j of the expectation: weight q_j, state s_j, rewards r_j, and B = gamma*P - E_s."""

    q: np.ndarray
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    B: sp.csr_matrix
    p0: np.ndarray
    gamma: float
    shape: tuple

    @property
    def n_states(self):
        return self.shape[0]

    def subset(self, keep: np.ndarray) -> "_Problem":
        return _Problem(self.q[keep], self.s[keep], self.a[keep], self.r[keep],
                        self.B[keep], self.p0, self.gamma, self.shape)


def _model_rows(T, R, p0, gamma, d_data, support_only=True) -> _Problem:
    S, A = d_data.shape
    if support_only:
        ss, aa = np.nonzero(d_data > 0)
    else:
        ss, aa = np.divmod(np.arange(S * A), A)
    P = sp.csr_matrix(T[ss, aa])
    E = sp.csr_matrix((np.ones(len(ss)), (np.arange(len(ss)), ss)), shape=(len(ss), S))
    return _Problem(d_data[ss, aa], ss, aa, R[ss, aa], (gamma * P - E).tocsr(),
                    np.asarray(p0, dtype=float), gamma, (S, A))


def _build_problem(e_mode: str, data, model: Optional[MOMDP], reward_scale: float = 1.0,
                   support_only=True) -> _Problem:
    prob = _build_rows(e_mode, data, model, support_only)
    if reward_scale != 1.0:
        prob.r = prob.r * reward_scale
    return prob


def _build_rows(e_mode, data, model, support_only):
    e_mode = E_MODE_ALIASES.get(e_mode, e_mode)
    if isinstance(data, EmpiricalEstimates):
        d_data = data.d_data
    else:
        d_data = np.asarray(data, dtype=float)
        if e_mode != "exact_model":
            raise ValueError(f"{e_mode} needs EmpiricalEstimates, not a bare d_D array")
    if d_data.sum() <= 0:
        raise ValueError("d_D has no mass")
    if e_mode == "exact_model":
        if model is None:
            raise ValueError("exact_model mode needs the true MOMDP")
        if d_data.shape != model.shape:
            raise ValueError(f"d_D shape {d_data.shape} != MOMDP shape {model.shape}")
        return _model_rows(model.transition, model.reward, model.p0, model.gamma,
                           d_data / d_data.sum(), support_only)
    est = data
    if e_mode == "mle_model":
        unseen = (d_data > 0) & ~est.visited
        assert not unseen.any(), "d_D puts mass on (s, a) pairs never observed"
        return _model_rows(est.T_hat, est.r_hat, est.p0_hat, est.gamma, d_data, support_only)
    tr = est.transitions
    n, S = len(tr["s"]), d_data.shape[0]
    rows = np.arange(n)
    B = (sp.csr_matrix((np.full(n, est.gamma), (rows, tr["s_next"])), shape=(n, S))
         - sp.csr_matrix((np.ones(n), (rows, tr["s"])), shape=(n, S)))
    return _Problem(tr["weight"], tr["s"], tr["a"], tr["r"], B.tocsr(), est.p0_hat,
                    est.gamma, d_data.shape)


def _alive_rows(prob: _Problem) -> np.ndarray:
    """Rows usable by a flow-feasible occupancy (greatest fixed point).

    A row survives while its state survives and all of its successor states
    still have a surviving row; a state survives while it has one.
    """
    S = prob.n_states
    succ = prob.B.copy()
    succ.data = np.where(succ.data > 0, 1.0, 0.0)
    succ.eliminate_zeros()
    keep = np.ones(len(prob.q), dtype=bool)
    while True:
        alive = np.zeros(S, dtype=bool)
        alive[prob.s[keep]] = True
        dead_succ = succ @ (~alive).astype(float)
        new_keep = keep & alive[prob.s] & (dead_succ == 0)
        if np.array_equal(new_keep, keep):
            break
        keep = new_keep
    alive = np.zeros(S, dtype=bool)
    alive[prob.s[keep]] = True
    if np.any(prob.p0[~alive] > 0):
        raise InfeasibleSupportError(
            "initial states have no flow-feasible data support; the dual is unbounded")
    return keep


# loss, gradient, Hessian


def _evaluate(prob: _Problem, nu, mu, beta, family, alpha, fixed_mu, need_hess=True):
    e = prob.r @ mu + prob.B @ nu
    y = e / beta
    w = sc.optimal_weight(family, y)
    qw = prob.q * w
    with np.errstate(over="raise"):
        loss = (1 - prob.gamma) * prob.p0 @ nu + beta * prob.q @ sc.f_conj0(family, y)
    g_nu = (1 - prob.gamma) * prob.p0 + prob.B.T @ qw
    returns = prob.r.T @ qw
    if fixed_mu:
        g_mu = np.zeros(0)
    else:
        loss += np.sum(sc.u_conj(alpha, -mu))
        g_mu = returns - sc.u_prime_inv(alpha, mu)
    H = None
    if need_hess:
        c = prob.q * sc.optimal_weight_grad(family, y) / beta
        if sp.issparse(prob.B):
            Bc = prob.B.multiply(c[:, None]).tocsr()
            H_nn = (prob.B.T @ Bc).toarray()
        else:
            Bc = prob.B * c[:, None]
            H_nn = prob.B.T @ Bc
        if fixed_mu:
            H = H_nn
        else:
            H_nm = np.asarray(Bc.T @ prob.r)
            H_mm = prob.r.T @ (c[:, None] * prob.r) + np.diag(sc.u_conj_hess(alpha, mu))
            H = np.block([[H_nn, H_nm], [H_nm.T, H_mm]])
    return float(loss), g_nu, g_mu, H, w, returns


# public operations


def advantage(nu, mu, source: Union[MOMDP, EmpiricalEstimates], e_mode: str = "exact_model"):
    """e(s, a) table in model modes; one value per dataset transition in sampled mode."""
    e_mode = E_MODE_ALIASES.get(e_mode, e_mode)
    nu = np.asarray(nu, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0):
        raise ValueError("mu must be positive")
    if e_mode == "exact_model":
        T, R = source.transition, source.reward
        gamma = source.gamma
    elif e_mode == "mle_model":
        T, R, gamma = source.T_hat, source.r_hat, source.gamma
    else:
        tr = source.transitions
        return tr["r"] @ mu + source.gamma * nu[tr["s_next"]] - nu[tr["s"]]
    return R @ mu + gamma * T @ nu - nu[:, None]


def _fairdice_args(cfg: SolverConfig, data, model):
    return _build_problem(cfg.e_mode, data, model, cfg.reward_scale), cfg.beta, cfg.divergence, cfg.alpha


def dual_loss(nu, mu, cfg: SolverConfig, data, model: Optional[MOMDP] = None,
              fixed_mu: bool = False) -> float:
    prob, beta, fam, alpha = _fairdice_args(cfg, data, model)
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0):
        raise ValueError("mu must be positive")
    try:
        loss, *_ = _evaluate(prob, np.asarray(nu, float), mu, beta, fam, alpha, fixed_mu, False)
    except FloatingPointError as exc:
        raise FloatingPointError("f_conj0 overflow: e / beta too large (step too large?)") from exc
    if not np.isfinite(loss):
        raise FloatingPointError("dual loss is not finite")
    return loss


def dual_gradients(nu, mu, cfg: SolverConfig, data, model: Optional[MOMDP] = None,
                   fixed_mu: bool = False):
    """(grad_nu, grad_mu). grad_nu is the Bellman-flow residual of w * d_D."""
    prob, beta, fam, alpha = _fairdice_args(cfg, data, model)
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0):
        raise ValueError("mu must be positive")
    _, g_nu, g_mu, *_ = _evaluate(prob, np.asarray(nu, float), mu, beta, fam, alpha,
                                  fixed_mu, False)
    return g_nu, g_mu


def solve(cfg: SolverConfig, data, model: Optional[MOMDP] = None) -> DualSolution:
    """Minimize the FairDICE loss jointly over (nu, mu).

    ``data`` is EmpiricalEstimates, or a bare d_D array in exact_model mode.
    alpha = 0 has no finite conjugate away from mu = 1, so it is solved as the
    fixed-weight problem with mu = 1.
    """
    if cfg.alpha == 0:
        warnings.warn("alpha = 0 is linear (utilitarian); solving with mu fixed to 1",
                      stacklevel=2)
        n_obj = _n_objectives(data, model)
        sol = solve_fixed(cfg, np.ones(n_obj), data, model)
        sol.k_star = np.asarray(sol.diagnostics["model_returns"])
        return sol
    return _solve(cfg, data, model, None)


def solve_fixed(cfg: SolverConfig, mu_fixed, data, model: Optional[MOMDP] = None) -> DualSolution:
    """Regularized linear scalarization with weights ``mu_fixed``: minimize over nu only."""
    mu_fixed = np.asarray(mu_fixed, dtype=float)
    if np.any(mu_fixed <= 0):
        raise ValueError("mu_fixed must be positive")
    return _solve(cfg, data, model, mu_fixed)


def _n_objectives(data, model):
    if model is not None:
        return model.n_objectives
    return data.r_hat.shape[2]


def _solve(cfg: SolverConfig, data, model, mu_fixed) -> DualSolution:
    full = _build_problem(cfg.e_mode, data, model, cfg.reward_scale)
    keep = _alive_rows(full)
    prob = full.subset(keep)
    if prob.B.shape[0] * prob.B.shape[1] <= DENSE_LIMIT:
        prob.B = prob.B.toarray()
    S, A = full.shape
    I = full.r.shape[1]
    fixed = mu_fixed is not None
    nu0 = np.zeros(S)
    mu0 = mu_fixed.copy() if fixed else np.ones(I)

    if cfg.method == "newton":
        nu, mu, info = _newton(prob, nu0, mu0, cfg, fixed)
    else:
        nu, mu, info = _gradient_descent(prob, nu0, mu0, cfg, fixed)

    loss, g_nu, g_mu, _, w_rows, returns = _evaluate(
        prob, nu, mu, cfg.beta, cfg.divergence, cfg.alpha, fixed, False)
    # dropped rows sit at w = 0, where beta * f_conj0 equals -beta * f(0)
    loss += float(np.sum(full.q[~keep])) * -cfg.beta * sc.f_eval(cfg.divergence, 0.0)

    d_star = np.zeros((S, A))
    np.add.at(d_star, (prob.s, prob.a), prob.q * w_rows)
    d_data = data.d_data if isinstance(data, EmpiricalEstimates) else np.asarray(data, float)
    d_data = d_data / d_data.sum()
    if cfg.e_mode == "sampled":
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(d_data > 0, d_star / d_data, 0.0)
    else:
        w = np.zeros((S, A))
        w[prob.s, prob.a] = w_rows

    g_max_nu = float(np.max(np.abs(g_nu))) if g_nu.size else 0.0
    g_max_mu = float(np.max(np.abs(g_mu))) if g_mu.size else 0.0
    converged = max(g_max_nu, g_max_mu) < cfg.grad_tol
    diagnostics = {
        "loss": loss,
        "grad_nu_max": g_max_nu,
        "grad_mu_max": g_max_mu,
        "iterations": info["iterations"],
        "converged": bool(converged),
        "method": cfg.method,
        "pruned_rows": int(np.sum(~keep)),
        "model_returns": returns.tolist(),
        "divergence": sc.divergence(cfg.divergence, d_star, d_data),
    }
    if not converged:
        warnings.warn(f"FairDICE solve did not reach grad_tol={cfg.grad_tol:g} "
                      f"(max grad {max(g_max_nu, g_max_mu):.3g} after {info['iterations']} "
                      "iterations); returning best iterate", stacklevel=3)
    k_star = None if fixed else sc.u_prime_inv(cfg.alpha, mu)
    return DualSolution(nu=nu, mu=mu, w=w, d_star=d_star, k_star=k_star,
                        policy=policy_from_occupancy(d_star), diagnostics=diagnostics)


def _newton(prob: _Problem, nu, mu, cfg: SolverConfig, fixed: bool):
    """Damped Newton with Armijo backtracking; mu kept positive by step truncation."""
    S = len(nu)
    beta, fam, alpha = cfg.beta, cfg.divergence, cfg.alpha

    def pack(nu, mu):
        return nu if fixed else np.concatenate([nu, mu])

    def unpack(z):
        return (z, mu) if fixed else (z[:S], z[S:])

    def ev(z, hess=True):
        n, m = unpack(z)
        loss, g_nu, g_mu, H, *_ = _evaluate(prob, n, m, beta, fam, alpha, fixed, hess)
        return loss, np.concatenate([g_nu, g_mu]), H

    z = pack(nu, mu)
    loss, g, H = ev(z)
    lam = 0.0
    it = 0
    for it in range(1, cfg.max_iters + 1):
        if np.max(np.abs(g)) < cfg.grad_tol:
            it -= 1
            break
        scale = max(1.0, float(np.max(np.abs(np.diag(H)))))
        p = _damped_step(H, g, lam + 1e-13 * scale)
        t = 1.0
        if not fixed:
            dm = p[S:]
            neg = dm < 0
            if np.any(neg):
                t = min(1.0, 0.95 * float(np.min(-z[S:][neg] / dm[neg])))
        slope = float(g @ p)
        accepted = False
        if slope < 0:
            while t > 1e-14:
                z_new = z + t * p
                try:
                    loss_new, g_new, _ = ev(z_new, hess=False)
                except FloatingPointError:
                    t *= 0.5
                    continue
                armijo = loss_new <= loss + 1e-4 * t * slope + 1e-13 * abs(loss)
                if armijo or np.max(np.abs(g_new)) < 0.5 * np.max(np.abs(g)):
                    accepted = True
                    break
                t *= 0.5
        if accepted:
            z = z_new
            loss, g, H = ev(z)
            lam = lam / 10 if lam > 1e-10 * scale else 0.0
        else:
            lam = max(10 * lam, 1e-6 * scale)
            if lam > 1e12 * scale:
                break
    nu, mu = unpack(z)
    return nu, np.asarray(mu, dtype=float), {"iterations": it}


def _damped_step(H, g, lam):
    Hr = H + lam * np.eye(len(g))
    try:
        c = scipy.linalg.cho_factor(Hr, check_finite=False)
        return -scipy.linalg.cho_solve(c, g, check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        return -np.linalg.lstsq(Hr, g, rcond=None)[0]


def _gradient_descent(prob: _Problem, nu, mu, cfg: SolverConfig, fixed: bool):
    """Plain joint gradient descent on (nu, log mu) with optional Polyak averaging."""
    theta = np.log(mu)
    lr = cfg.learning_rate
    avg_nu, avg_theta = nu.copy(), theta.copy()
    it = 0
    for it in range(1, cfg.max_iters + 1):
        m = mu if fixed else np.exp(theta)
        _, g_nu, g_mu, *_ = _evaluate(prob, nu, m, cfg.beta, cfg.divergence, cfg.alpha,
                                      fixed, False)
        if max(np.max(np.abs(g_nu)), np.max(np.abs(g_mu), initial=0.0)) < cfg.grad_tol:
            it -= 1
            break
        nu = nu - lr * g_nu
        if not fixed:
            theta = theta - lr * m * g_mu
        if cfg.polyak:
            avg_nu += (nu - avg_nu) / (it + 1)
            avg_theta += (theta - avg_theta) / (it + 1)
    if cfg.polyak:
        nu, theta = avg_nu, avg_theta
    return nu, (mu if fixed else np.exp(theta)), {"iterations": it}


def config_dict(cfg: SolverConfig) -> dict:
    return asdict(cfg)
