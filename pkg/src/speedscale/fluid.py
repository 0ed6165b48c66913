"""Closed-form fluid and diffusion value functions for the speed-scaling queue.

Quadratic cost ``x + u**2 / 2`` throughout unless stated otherwise.  All
functions are vectorized over ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DomainError, NumericError, ParameterError


def _nonneg(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("x must be nonnegative")
    return x


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


# ---------------------------------------------------------------------------
# quadratic cost: K* (stopping at the origin) and J* (modified cost)


def k_star(x, alpha: float = 1.0):
    """``K*(x) = alpha x + ((2x + alpha^2)^{3/2} - alpha^3) / 3``."""
    x = _nonneg(x)
    return _out(alpha * x + ((2.0 * x + alpha * alpha) ** 1.5 - alpha**3) / 3.0)


def grad_k_star(x, alpha: float = 1.0):
    x = _nonneg(x)
    return _out(alpha + np.sqrt(2.0 * x + alpha * alpha))


def hess_k_star(x, alpha: float = 1.0):
    x = _nonneg(x)
    return _out(1.0 / np.sqrt(2.0 * x + alpha * alpha))


def j_star_quad(x):
    """Fluid value for ``x + ([u - alpha]_+)^2 / 2``: ``(2x)^{3/2} / 3``."""
    x = _nonneg(x)
    return _out((2.0 * x) ** 1.5 / 3.0)


def grad_j_star_quad(x):
    x = _nonneg(x)
    return _out(np.sqrt(2.0 * x))


def hess_j_star_quad(x):
    """Second derivative ``(2x)^{-1/2}``; infinite at the origin."""
    x = _nonneg(x)
    with np.errstate(divide="ignore"):
        return _out(1.0 / np.sqrt(2.0 * x))


def phi_fluid_quad(x, alpha: float = 1.0):
    """Optimal fluid service rate ``sqrt(2x) + alpha``."""
    x = _nonneg(x)
    return _out(np.sqrt(2.0 * x) + alpha)


@dataclass(frozen=True)
class FluidSolution:
    """Value function, derivatives and policy of a fluid model."""

    value: callable
    gradient: callable
    hessian: callable
    policy: callable
    alpha: float
    params: dict

    @classmethod
    def k_star(cls, alpha: float = 1.0) -> "FluidSolution":
        return cls(
            lambda x: k_star(x, alpha),
            lambda x: grad_k_star(x, alpha),
            lambda x: hess_k_star(x, alpha),
            # (c, K*)-fluid minimizer of u^2/2 - u K*'(x)
            lambda x: grad_k_star(x, alpha),
            alpha,
            {"cost": "quadratic", "nu": 0.5},
        )

    @classmethod
    def j_star(cls, alpha: float = 1.0) -> "FluidSolution":
        return cls(
            j_star_quad,
            grad_j_star_quad,
            hess_j_star_quad,
            lambda x: phi_fluid_quad(x, alpha),
            alpha,
            {"cost": "quadratic-modified", "nu": 0.5},
        )


# ---------------------------------------------------------------------------
# polynomial cost x + nu ([u - alpha]_+)^rho


def _poly_coeff(rho: float, nu: float) -> float:
    return nu * rho * rho / (2.0 * rho - 1.0) * (1.0 / (nu * (rho - 1.0))) ** ((rho - 1.0) / rho)


def fluid_poly(x, rho: float, nu: float, alpha: float = 1.0):
    """Return ``(J*(x), phi(x))`` for the modified polynomial cost."""
    if not rho > 1:
        raise ParameterError(f"rho must exceed 1, got {rho}")
    if not nu > 0:
        raise ParameterError(f"nu must be positive, got {nu}")
    x = _nonneg(x)
    value = _poly_coeff(rho, nu) * x ** ((2.0 * rho - 1.0) / rho)
    policy = (x / (nu * (rho - 1.0))) ** (1.0 / rho) + alpha
    return _out(value), _out(policy)


def grad_fluid_poly(x, rho: float, nu: float):
    x = _nonneg(x)
    return _out(_poly_coeff(rho, nu) * (2.0 * rho - 1.0) / rho * x ** ((rho - 1.0) / rho))


# ---------------------------------------------------------------------------
# Lambert W and the exponential cost x + nu [exp(kappa u) - exp(kappa alpha)]_+


def lambert_w0(y, tol: float = 1e-15, max_iter: int = 64):
    """Principal branch of Lambert W for ``y >= 0`` (Halley iterations)."""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0) or np.any(np.isnan(y)):
        raise DomainError("lambert_w0 is implemented for y >= 0 only")
    w = np.log1p(y)
    for _ in range(max_iter):
        ew = np.exp(w)
        f = w * ew - y
        wp1 = w + 1.0
        step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w = w - step
        if np.all(np.abs(step) <= tol * (1.0 + np.abs(w))):
            break
    else:
        raise NumericError("Halley iteration for Lambert W did not converge")
    return _out(w)


def _nu_tilde(kappa: float, nu: float, alpha: float) -> float:
    return nu * math.exp(kappa * alpha)


def _exp_w(x, kappa, nu, alpha):
    if not kappa > 0 or not nu > 0:
        raise ParameterError("need kappa > 0 and nu > 0")
    nt = _nu_tilde(kappa, nu, alpha)
    x = np.asarray(x, dtype=float)
    if np.any(x < nt * (1.0 - 1e-12)):
        raise DomainError(f"x must be at least nu*exp(kappa*alpha) = {nt}")
    arg = np.maximum(x - nt, 0.0) / (math.e * nt)
    return np.asarray(lambert_w0(arg)), nt


def phi_fluid_exp(x, kappa: float, nu: float, alpha: float):
    """Optimal fluid rate ``(W((x - nt)/(e nt)) + 1)/kappa + alpha``, ``nt = nu e^{kappa alpha}``."""
    w, _ = _exp_w(x, kappa, nu, alpha)
    return _out((w + 1.0) / kappa + alpha)


def grad_j_exp(x, kappa: float, nu: float, alpha: float):
    """``J*'(x) = kappa nt exp(W(.) + 1)``."""
    w, nt = _exp_w(x, kappa, nu, alpha)
    return _out(kappa * nt * np.exp(w + 1.0))


def exp_fluid_residual(x, kappa: float, nu: float, alpha: float):
    """Fluid HJB residual ``c(x, phi) + J*'(x) (alpha - phi)`` at the closed-form policy."""
    phi = np.asarray(phi_fluid_exp(x, kappa, nu, alpha))
    g = np.asarray(grad_j_exp(x, kappa, nu, alpha))
    x = np.asarray(x, dtype=float)
    c = x + nu * np.maximum(np.exp(kappa * phi) - math.exp(kappa * alpha), 0.0)
    return _out(c + g * (alpha - phi))


def exp_base_point(kappa: float, nu: float, alpha: float) -> float:
    """Left end ``nt (e^2 + 1)`` of the region where the value bounds hold."""
    return _nu_tilde(kappa, nu, alpha) * (math.e**2 + 1.0)


def j_star_exp_numeric(x, kappa: float, nu: float, alpha: float, x_base: float | None = None):
    """``J*(x) - J*(x_base)`` by adaptive quadrature of ``J*'``."""
    lo = exp_base_point(kappa, nu, alpha)
    x_base = lo if x_base is None else x_base
    if x_base < lo * (1.0 - 1e-12):
        raise DomainError(f"x_base must be at least {lo}")
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs < x_base):
        raise DomainError("x must be at least x_base")
    out = np.empty_like(xs)
    for i, xi in enumerate(xs):
        val, err = integrate.quad(
            lambda s: float(grad_j_exp(s, kappa, nu, alpha)),
            x_base, xi, epsabs=0.0, epsrel=1e-11, limit=200,
        )
        if err > 1e-8 * max(abs(val), 1e-300) and xi > x_base:
            raise NumericError(f"quadrature did not reach 1e-8 relative accuracy at x={xi}")
        out[i] = val
    return _out(out.reshape(np.shape(x)))


def j_star_exp_bounds(x, kappa: float, nu: float, alpha: float, x_base: float | None = None):
    """Lower/upper envelopes of ``J*(x) - J*(x_base)``.

    Both envelopes are anchored to vanish at ``x_base``:
    lower ``(kappa/2) xt^2 / (log xt - log nu - (kappa alpha + 1))`` and
    upper ``(kappa/2) xt^2`` with ``xt = x - nu e^{kappa alpha}``, each minus its
    own value at ``x_base``.
    """
    lo = exp_base_point(kappa, nu, alpha)
    x_base = lo if x_base is None else x_base
    x = np.asarray(x, dtype=float)
    if x_base < lo * (1.0 - 1e-12) or np.any(x < x_base):
        raise DomainError(f"bounds hold for x >= x_base >= {lo}")
    nt = _nu_tilde(kappa, nu, alpha)
    shift = math.log(nu) + kappa * alpha + 1.0

    def lower_env(v):
        xt = v - nt
        return 0.5 * kappa * xt * xt / (np.log(xt) - shift)

    def upper_env(v):
        xt = v - nt
        return 0.5 * kappa * xt * xt

    lower = lower_env(x) - lower_env(x_base)
    upper = upper_env(x) - upper_env(x_base)
    return _out(lower), _out(upper)


# ---------------------------------------------------------------------------
# diffusion model


@dataclass(frozen=True)
class DiffusionBasis:
    """``h(x) = K*(x) - eta sqrt(2x + q^2) + eta q``.

    ``q`` defaults to ``eta / alpha``.  The constant makes ``h(0) = 0``; the
    slope at the origin is ``2 alpha - eta / q`` (``alpha`` for the default q).
    """

    eta: float = 2.0
    q: float | None = None
    alpha: float = 1.0

    def __post_init__(self):
        if self.eta < 0:
            raise ParameterError("eta must be nonnegative")
        if self.q is None:
            if self.eta == 0:
                raise ParameterError("q must be given when eta = 0")
            object.__setattr__(self, "q", self.eta / self.alpha)
        if not self.q > 0:
            raise ParameterError("q must be positive")

    def __call__(self, x):
        return diffusion_basis_h(x, self.eta, self.q, self.alpha)

    def gradient(self, x):
        x = _nonneg(x)
        return _out(grad_k_star(x, self.alpha) - self.eta / np.sqrt(2.0 * x + self.q**2))

    def hessian(self, x):
        x = _nonneg(x)
        return _out(hess_k_star(x, self.alpha) + self.eta * (2.0 * x + self.q**2) ** -1.5)


def diffusion_basis_h(x, eta: float, q: float, alpha: float = 1.0):
    x = _nonneg(x)
    return _out(np.asarray(k_star(x, alpha)) - eta * np.sqrt(2.0 * x + q * q) + eta * q)


def diffusion_generator_apply(grad_h, hess_h, u, alpha: float, sigma2: float):
    """``(alpha - u) h'(x) + sigma2 h''(x) / 2`` given derivative values at x."""
    return _out((alpha - np.asarray(u, dtype=float)) * np.asarray(grad_h) + 0.5 * sigma2 * np.asarray(hess_h))


def diffusion_bellman_error(grad_h, hess_h, x, alpha: float, sigma2: float):
    """``min_{u >= 0} (x + u^2/2 + D^D_u h(x))`` at the interior minimizer ``u = h'(x)``.

    ``grad_h`` and ``hess_h`` are callables (or precomputed arrays) of the
    first two derivatives of h.
    """
    x = _nonneg(x)
    g = np.asarray(grad_h(x) if callable(grad_h) else grad_h, dtype=float)
    hh = np.asarray(hess_h(x) if callable(hess_h) else hess_h, dtype=float)
    if np.any(g < 0):
        raise DomainError("h'(x) < 0: the minimizer u = h'(x) is infeasible")
    return _out(x - 0.5 * g * g + alpha * g + 0.5 * sigma2 * hh)


def diffusion_bellman_expansion(x, eta: float, q: float, alpha: float, sigma2: float):
    """Closed form of the diffusion Bellman error of ``DiffusionBasis(eta, q, alpha)``."""
    x = _nonneg(x)
    ra = np.sqrt(2.0 * x + alpha * alpha)
    rq = np.sqrt(2.0 * x + q * q)
    return _out(eta * ra / rq - 0.5 * eta * eta / (rq * rq) + 0.5 * sigma2 * (1.0 / ra + eta / rq**3))
