"""f-divergence generators, alpha-fair utilities, their conjugates, and welfare metrics.

Every function is vectorized over numpy arrays. Divergence families are
selected by tag: ``"chi2"`` is ``f(x) = (x - 1)^2 / 2``; ``"soft_chi2"`` is
``x log x - x + 1`` below one and ``(x - 1)^2 / 2`` above.

``f_conj0`` is the conjugate restricted to ``x >= 0``::

    f_conj0(y) = max_{x >= 0} x*y - f(x)

and ``u_conj(y) = max_x x*y + u(x)``, finite only for ``y < 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DIVERGENCES = ("chi2", "soft_chi2")


def _check_family(family: str) -> None:
    if family not in DIVERGENCES:
        raise ValueError(f"unknown divergence {family!r}; expected one of {DIVERGENCES}")


def _out(x, arr):
    return float(arr) if np.ndim(x) == 0 else arr


def f_eval(family: str, x):
    _check_family(family)
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise ValueError("f is only defined for x >= 0")
    quad = 0.5 * (xa - 1.0) ** 2
    if family == "chi2":
        return _out(x, quad)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl = np.where(xa > 0, xa * np.log(np.where(xa > 0, xa, 1.0)), 0.0) - xa + 1.0
    return _out(x, np.where(xa < 1.0, kl, quad))


def f_prime(family: str, x):
    _check_family(family)
    xa = np.asarray(x, dtype=float)
    if family == "chi2":
        return _out(x, xa - 1.0)
    with np.errstate(divide="ignore"):
        return _out(x, np.where(xa < 1.0, np.log(np.where(xa < 1.0, xa, 1.0)), xa - 1.0))


def f_prime_inv(family: str, y):
    _check_family(family)
    ya = np.asarray(y, dtype=float)
    if family == "chi2":
        return _out(y, ya + 1.0)
    return _out(y, np.where(ya < 0.0, np.exp(np.minimum(ya, 0.0)), ya + 1.0))


def f_conj0(family: str, y):
    _check_family(family)
    ya = np.asarray(y, dtype=float)
    quad = 0.5 * ya**2 + ya
    if family == "chi2":
        return _out(y, np.where(ya >= -1.0, quad, -0.5))
    return _out(y, np.where(ya < 0.0, np.expm1(np.minimum(ya, 0.0)), quad))


def optimal_weight(family: str, y):
    """max(0, (f')^{-1}(y)), which is also the derivative of f_conj0."""
    return _out(y, np.maximum(0.0, f_prime_inv(family, np.asarray(y, dtype=float))))


def optimal_weight_grad(family: str, y):
    """Derivative of :func:`optimal_weight`; one-sided from the active branch at kinks."""
    _check_family(family)
    ya = np.asarray(y, dtype=float)
    if family == "chi2":
        return _out(y, (ya > -1.0).astype(float))
    return _out(y, np.where(ya < 0.0, np.exp(np.minimum(ya, 0.0)), 1.0))


def divergence(family: str, d, d_data) -> float:
    """sum d_D f(d / d_D), with zero-mass data pairs contributing nothing."""
    d = np.asarray(d, dtype=float)
    d_data = np.asarray(d_data, dtype=float)
    mask = d_data > 0
    return float(np.sum(d_data[mask] * f_eval(family, d[mask] / d_data[mask])))


# alpha-fair utilities


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not alpha >= 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    return alpha


def u_eval(alpha: float, x):
    alpha = _check_alpha(alpha)
    xa = np.asarray(x, dtype=float)
    if np.any(xa <= 0):
        raise ValueError("alpha-fair utility is defined for x > 0")
    if alpha == 1.0:
        return _out(x, np.log(xa))
    return _out(x, xa ** (1.0 - alpha) / (1.0 - alpha))


def u_prime(alpha: float, x):
    alpha = _check_alpha(alpha)
    xa = np.asarray(x, dtype=float)
    if np.any(xa <= 0):
        raise ValueError("alpha-fair utility is defined for x > 0")
    return _out(x, xa ** (-alpha))


def u_prime_inv(alpha: float, mu):
    alpha = _check_alpha(alpha)
    ma = np.asarray(mu, dtype=float)
    if np.any(ma <= 0):
        raise ValueError("mu must be positive (dual iterate left the domain)")
    if alpha == 0.0:
        raise ValueError("u'(x) = 1 is constant for alpha = 0 and has no inverse")
    return _out(mu, ma ** (-1.0 / alpha))


def u_conj(alpha: float, y):
    """Conjugate of the utility; +inf where unbounded (y >= 0, or y != -1 when alpha = 0)."""
    alpha = _check_alpha(alpha)
    ya = np.asarray(y, dtype=float)
    mu = -ya
    pos = mu > 0
    safe = np.where(pos, mu, 1.0)
    if alpha == 0.0:
        val = np.where(mu == 1.0, 0.0, np.inf)
    elif alpha == 1.0:
        val = np.where(pos, -1.0 - np.log(safe), np.inf)
    else:
        val = np.where(pos, alpha / (1.0 - alpha) * safe ** ((alpha - 1.0) / alpha), np.inf)
    return _out(y, val)


def u_conj_hess(alpha: float, mu):
    """Second derivative of mu -> u_conj(-mu)."""
    alpha = _check_alpha(alpha)
    ma = np.asarray(mu, dtype=float)
    return _out(mu, ma ** (-1.0 / alpha - 1.0) / alpha)


# welfare metrics


@dataclass(frozen=True)
class WelfareMetrics:
    nsw: float
    utilitarian: float
    jain: float


def welfare_metrics(returns, clamp_eps: float = 1e-6) -> WelfareMetrics:
    R = np.asarray(returns, dtype=float)
    clamped = np.maximum(R, clamp_eps)
    jain = clamped.sum() ** 2 / (len(clamped) * np.sum(clamped**2))
    return WelfareMetrics(
        nsw=float(np.sum(np.log(clamped))),
        utilitarian=float(R.sum()),
        jain=float(jain),
    )
