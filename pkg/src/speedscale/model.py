"""Speed-scaling queue: arrivals, costs, lattice state space and the generator.

The queue evolves as ``X(t+1) = X(t) - U(t) + A(t+1)`` with ``0 <= U(t) <= X(t)``.
Arrivals live on a lattice ``{0, delta, 2 delta, ...}``; states and actions
are kept on the same lattice so the truncated chain is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Literal, Union

import numpy as np

from .errors import EvaluationError, FeasibilityError, ParameterError

# mixture weight of the Bernoulli component in the variance family
MIX_WEIGHT = 0.9
_LATTICE_TOL = 1e-9
_MAX_DENOM = 10**6


def _as_fraction(v: float) -> Fraction:
    return Fraction(v).limit_denominator(_MAX_DENOM)


def _frac_gcd(a: Fraction, b: Fraction) -> Fraction:
    return Fraction(
        math.gcd(a.numerator * b.denominator, b.numerator * a.denominator),
        a.denominator * b.denominator,
    )


# ---------------------------------------------------------------------------
# arrivals


@dataclass(frozen=True)
class ScaledGeometric:
    """``A = delta * G`` with ``P{G = k} = (1 - p) p**k``, k >= 0."""

    p_success: float = 0.96
    delta: float = 1.0 / 24.0

    def __post_init__(self):
        if not 0.0 < self.p_success < 1.0:
            raise ParameterError(f"p_success must lie in (0, 1), got {self.p_success}")
        if not self.delta > 0.0:
            raise ParameterError(f"delta must be positive, got {self.delta}")

    @property
    def mean(self) -> float:
        p = self.p_success
        return self.delta * p / (1.0 - p)

    @property
    def variance(self) -> float:
        p = self.p_success
        return self.delta**2 * p / (1.0 - p) ** 2


@dataclass(frozen=True)
class CoinMixture:
    """``A = (1 - B) A0 + B * delta_z * Z`` with B ~ Bern(rho_mix), Z ~ Bern(rho_z)."""

    rho_mix: float = MIX_WEIGHT
    base: ScaledGeometric = field(default_factory=ScaledGeometric)
    rho_z: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.rho_mix <= 1.0:
            raise ParameterError(f"rho_mix must lie in [0, 1], got {self.rho_mix}")
        if not 0.0 < self.rho_z <= 1.0:
            raise ParameterError(f"rho_z must lie in (0, 1], got {self.rho_z}")

    @property
    def delta_z(self) -> float:
        return 1.0 / self.rho_z

    @property
    def mean(self) -> float:
        return (1.0 - self.rho_mix) * self.base.mean + self.rho_mix * self.rho_z * self.delta_z

    @property
    def variance(self) -> float:
        r, b = self.rho_mix, self.base
        second = (1.0 - r) * (b.variance + b.mean**2) + r * self.rho_z * self.delta_z**2
        return second - self.mean**2


ArrivalSpec = Union[ScaledGeometric, CoinMixture]


def mixture_for_variance(kappa: float, base: ScaledGeometric | None = None) -> CoinMixture:
    """Coin-flip mixture whose nominal variance is ``kappa``.

    Uses ``rho_z = 9 / (10 kappa + 8)``, the inversion of the variance
    identity with mixing weight 0.9 and a unit-variance base.
    """
    if not kappa >= 1.0:
        raise ParameterError(f"kappa must be >= 1, got {kappa}")
    return CoinMixture(
        rho_mix=MIX_WEIGHT,
        base=base if base is not None else ScaledGeometric(),
        rho_z=9.0 / (10.0 * kappa + 8.0),
    )


@dataclass(frozen=True)
class GeometricPart:
    """Split form of a pmf: a truncated geometric run plus point masses.

    Mass ``weights[k]`` sits at index ``k * stride`` with
    ``weights[k] ~= weights[0] * ratio**k``; the point masses are kept apart
    even when they share an index with the run.  Expectations in this form
    cost O(1) per state instead of O(support).
    """

    stride: int
    ratio: float
    weights: np.ndarray
    point_idx: np.ndarray
    point_prob: np.ndarray

    def __post_init__(self):
        for name, dt in (("weights", np.float64), ("point_idx", np.int64), ("point_prob", np.float64)):
            arr = np.ascontiguousarray(getattr(self, name), dtype=dt)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def tail_weight(self) -> float:
        """Weight the untruncated run would put at ``len(weights) * stride``."""
        return float(self.weights[0] * self.ratio ** len(self.weights))


@dataclass(frozen=True)
class ArrivalPmf:
    """Finite pmf on the lattice ``{k * delta}``.

    ``idx`` holds strictly increasing lattice indices with positive mass.
    ``geometric`` optionally carries the same law in split form.
    """

    delta: float
    idx: np.ndarray
    prob: np.ndarray
    analytic_mean: float | None = None
    analytic_variance: float | None = None
    geometric: GeometricPart | None = None

    def __post_init__(self):
        idx = np.ascontiguousarray(self.idx, dtype=np.int64)
        prob = np.ascontiguousarray(self.prob, dtype=np.float64)
        if idx.ndim != 1 or idx.shape != prob.shape or idx.size == 0:
            raise ParameterError("idx and prob must be equal-length nonempty vectors")
        if np.any(np.diff(idx) <= 0) or idx[0] < 0:
            raise ParameterError("lattice indices must be nonnegative and increasing")
        if np.any(prob < 0) or abs(prob.sum() - 1.0) > 1e-12:
            raise ParameterError("probabilities must be nonnegative and sum to 1")
        idx.setflags(write=False)
        prob.setflags(write=False)
        object.__setattr__(self, "idx", idx)
        object.__setattr__(self, "prob", prob)

    @classmethod
    def from_points(cls, values, probs, delta: float) -> "ArrivalPmf":
        values = np.asarray(values, dtype=float)
        k = np.rint(values / delta).astype(np.int64)
        if np.any(np.abs(k * delta - values) > _LATTICE_TOL * max(1.0, delta)):
            raise ParameterError("arrival values must lie on the lattice")
        order = np.argsort(k)
        return cls(delta, k[order], np.asarray(probs, dtype=float)[order])

    @property
    def values(self) -> np.ndarray:
        return self.idx * self.delta

    @property
    def max_idx(self) -> int:
        return int(self.idx[-1])

    @property
    def mean(self) -> float:
        return float(self.prob @ self.values)

    @property
    def variance(self) -> float:
        v = self.values
        m = float(self.prob @ v)
        return float(self.prob @ (v - m) ** 2)

    @property
    def p_zero(self) -> float:
        return float(self.prob[0]) if self.idx[0] == 0 else 0.0

    def sample_idx(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` lattice indices by inverse CDF."""
        cdf = np.cumsum(self.prob)
        k = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
        return self.idx[np.minimum(k, len(cdf) - 1)]

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.sample_idx(rng, n) * self.delta


def lattice_step(spec: ArrivalSpec) -> float:
    """Coarsest lattice containing every support point of ``spec``."""
    if isinstance(spec, ScaledGeometric):
        return spec.delta
    step = _frac_gcd(_as_fraction(spec.base.delta), _as_fraction(spec.delta_z))
    if step < _as_fraction(spec.base.delta) / 1000:
        raise ParameterError("mixture support does not share a usable lattice")
    return float(step)


def _geometric_masses(spec: ScaledGeometric, tail_eps: float, step: float) -> tuple[np.ndarray, np.ndarray]:
    p = spec.p_success
    # long enough that the dropped tail is far below any tolerance used here
    k_hi = int(math.ceil(math.log(1e-300) / math.log(p))) if p > 1e-300 else 1
    k_hi = max(min(k_hi, 200_000), 1)
    k = np.arange(k_hi + 1)
    mass = (1.0 - p) * p**k.astype(float)
    x = k * spec.delta
    # drop the tail once its mass and first two moments are all below tail_eps
    weight = mass * (1.0 + x + x * x)
    tail = np.cumsum(weight[::-1])[::-1]
    keep = np.nonzero(tail >= tail_eps)[0]
    cut = int(keep[-1]) + 1 if keep.size else 1
    ratio = int(round(spec.delta / step))
    return k[:cut] * ratio, mass[:cut]


def arrival_pmf(spec: ArrivalSpec, tail_eps: float = 1e-10) -> ArrivalPmf:
    """Truncated, renormalized pmf of ``spec`` on its lattice."""
    if not 0.0 < tail_eps <= 1e-6:
        raise ParameterError(f"tail_eps must lie in (0, 1e-6], got {tail_eps}")
    step = lattice_step(spec)
    if isinstance(spec, ScaledGeometric):
        idx, mass = _geometric_masses(spec, tail_eps, step)
        geo = (spec.p_success, mass, [], [])
    elif isinstance(spec, CoinMixture):
        gi, gm = _geometric_masses(spec.base, tail_eps, step)
        zi = int(round(spec.delta_z / step))
        r = spec.rho_mix
        geo = (spec.base.p_success, (1.0 - r) * gm, [0, zi], [r * (1.0 - spec.rho_z), r * spec.rho_z])
        acc: dict[int, float] = {}
        for i, m in zip(gi.tolist(), gm.tolist()):
            acc[i] = acc.get(i, 0.0) + (1.0 - r) * m
        acc[0] = acc.get(0, 0.0) + r * (1.0 - spec.rho_z)
        acc[zi] = acc.get(zi, 0.0) + r * spec.rho_z
        keys = sorted(k for k, m in acc.items() if m > 0.0)
        idx = np.array(keys, dtype=np.int64)
        mass = np.array([acc[k] for k in keys])
    else:
        raise ParameterError(f"unknown arrival spec {spec!r}")
    total = mass.sum()
    ratio, gw, pi, pp = geo
    base_delta = spec.delta if isinstance(spec, ScaledGeometric) else spec.base.delta
    part = GeometricPart(int(round(base_delta / step)), ratio, gw / total, pi, np.asarray(pp, dtype=float) / total)
    return ArrivalPmf(step, idx, mass / total, analytic_mean=spec.mean, analytic_variance=spec.variance,
                      geometric=part)


# ---------------------------------------------------------------------------
# costs


@dataclass(frozen=True)
class CostModel:
    """``c(x, u) = x + nu * P(u)``.

    kind "quadratic" uses ``P(u) = u**2`` (so ``nu = 1/2`` gives ``x + u**2/2``),
    "polynomial" uses ``u**rho`` and "exponential" uses ``exp(kappa u)``.  With
    ``fluid_modified`` the power term is shifted to vanish at ``u = alpha``.
    """

    kind: Literal["quadratic", "polynomial", "exponential"] = "quadratic"
    nu: float = 0.5
    rho: float = 2.0
    kappa: float = 1.0
    fluid_modified: bool = False
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in ("quadratic", "polynomial", "exponential"):
            raise ParameterError(f"unknown cost kind {self.kind!r}")
        if not self.nu > 0:
            raise ParameterError("nu must be positive")
        if self.kind == "quadratic" and self.rho != 2.0:
            object.__setattr__(self, "rho", 2.0)
        if self.kind == "polynomial" and not self.rho > 1:
            raise ParameterError("polynomial cost needs rho > 1")
        if self.kind == "exponential" and not self.kappa > 0:
            raise ParameterError("exponential cost needs kappa > 0")

    @classmethod
    def quadratic(cls, nu: float = 0.5, **kw) -> "CostModel":
        return cls("quadratic", nu=nu, **kw)

    @classmethod
    def polynomial(cls, rho: float, nu: float = 1.0, **kw) -> "CostModel":
        return cls("polynomial", nu=nu, rho=rho, **kw)

    @classmethod
    def exponential(cls, kappa: float, nu: float = 1.0, **kw) -> "CostModel":
        return cls("exponential", nu=nu, kappa=kappa, **kw)

    def power(self, u):
        """The ``nu * P(u)`` part of the cost (vectorized)."""
        u = np.asarray(u, dtype=float)
        if self.kind == "exponential":
            if self.fluid_modified:
                val = np.maximum(np.exp(self.kappa * u) - math.exp(self.kappa * self.alpha), 0.0)
            else:
                val = np.exp(self.kappa * u)
        else:
            base = np.maximum(u - self.alpha, 0.0) if self.fluid_modified else u
            val = base * base if self.rho == 2.0 else base**self.rho
        return self.nu * val

    def __call__(self, x, u):
        return np.asarray(x, dtype=float) + self.power(u)


def cost(model: CostModel, x, u):
    """Evaluate ``c(x, u)``; rejects negative arguments."""
    if np.any(np.asarray(x) < 0) or np.any(np.asarray(u) < 0):
        raise ParameterError("cost is defined for x >= 0, u >= 0")
    out = model(x, u)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# state space


@dataclass(frozen=True)
class StateGrid:
    """Truncated lattice ``{0, delta, ..., x_max}``."""

    delta: float
    x_max: float

    def __post_init__(self):
        if not self.delta > 0 or self.x_max < 0:
            raise ParameterError("need delta > 0 and x_max >= 0")
        k = self.x_max / self.delta
        if abs(k - round(k)) > _LATTICE_TOL * max(1.0, k):
            raise ParameterError("x_max must be a lattice point")

    @property
    def n(self) -> int:
        return int(round(self.x_max / self.delta)) + 1

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.delta

    def index(self, x) -> np.ndarray | int:
        """Lattice index of ``x``; raises off the lattice or beyond ``x_max``."""
        xa = np.asarray(x, dtype=float)
        k = np.rint(xa / self.delta)
        if np.any(np.abs(k * self.delta - xa) > _LATTICE_TOL * np.maximum(1.0, np.abs(xa))):
            raise EvaluationError("point off the state lattice")
        if np.any(k < 0) or np.any(k > self.n - 1):
            raise EvaluationError("point outside the truncated grid")
        k = k.astype(np.int64)
        return int(k) if k.ndim == 0 else k


@dataclass(frozen=True)
class TabularFunction:
    """Real values on a StateGrid; no interpolation."""

    grid: StateGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.shape != (self.grid.n,):
            raise ParameterError(f"expected {self.grid.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ParameterError("tabular values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid: StateGrid, f: Callable) -> "TabularFunction":
        return cls(grid, np.asarray(f(grid.x), dtype=float))

    def __call__(self, x):
        out = self.values[self.grid.index(x)]
        return float(out) if np.ndim(out) == 0 else out

    def clamped(self, x):
        """Evaluate with states above ``x_max`` clamped to ``x_max``."""
        return self(np.minimum(np.asarray(x, dtype=float), self.grid.x_max))

    def normalized(self) -> "TabularFunction":
        return TabularFunction(self.grid, self.values - self.values[0])


# ---------------------------------------------------------------------------
# dynamics


def step(x: float, u: float, a: float) -> float:
    """One transition ``x - u + a`` of the controlled random walk."""
    if u < 0 or u > x:
        raise FeasibilityError(f"action u={u} infeasible at x={x}")
    return x - u + a


def generator_apply(h, x: float, u: float, pmf: ArrivalPmf) -> float:
    """``D_u h(x) = E[h(x - u + A)] - h(x)``.

    A TabularFunction is evaluated with states above its grid clamped to the
    boundary (the reflecting truncation used by value iteration).
    """
    if u < 0 or u > x:
        raise FeasibilityError(f"action u={u} infeasible at x={x}")
    nxt = x - u + pmf.values
    if isinstance(h, TabularFunction):
        hv = h.clamped(nxt)
        hx = h(x)
    else:
        hv = evaluate(h, nxt)
        hx = float(evaluate(h, np.array([x], dtype=float))[0])
    return float(pmf.prob @ hv) - hx


def evaluate(h: Callable, x: np.ndarray) -> np.ndarray:
    """Evaluate a vectorized state function, broadcasting constant results."""
    x = np.asarray(x, dtype=float)
    return np.broadcast_to(np.asarray(h(x), dtype=float), x.shape)
