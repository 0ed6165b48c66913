"""Value iteration, myopic policies and error functionals on the state lattice.

Functions ``h`` are either vectorized callables of the state or
:class:`~speedscale.model.TabularFunction` objects.  Tabular functions imply
the truncated model: successor states above ``x_max`` are clamped to it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .errors import DivergenceError, EvaluationError, FeasibilityError, ParameterError
from .model import ArrivalPmf, CostModel, StateGrid, TabularFunction, evaluate

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class ReliabilityWarning(UserWarning):
    """Monte-Carlo estimate may be biased (too many episodes hit the step cap)."""


def _check_delta(a: float, b: float):
    if abs(a - b) > 1e-12 * max(a, b):
        raise ParameterError(f"lattice steps differ: {a} vs {b}")


# ---------------------------------------------------------------------------
# policies


class Policy:
    """Deterministic stationary policy stored as service indices on the lattice.

    ``u_idx[k]`` is the service (in lattice units) at state ``k * delta``.
    Policies built from a rule are extended on demand; table-backed ones are
    fixed to their grid.
    """

    def __init__(self, delta: float, rule: Callable[[int], np.ndarray] | None = None,
                 table: np.ndarray | None = None, name: str = ""):
        if rule is None and table is None:
            raise ParameterError("need a rule or a table")
        self.delta = float(delta)
        self.name = name
        self._rule = rule
        self._table = np.zeros(0, dtype=np.int64)
        if table is not None:
            self._set(np.asarray(table))

    def _set(self, u):
        u = np.ascontiguousarray(u, dtype=np.int64)
        k = np.arange(len(u))
        if np.any(u < 0) or np.any(u > k):
            bad = int(np.nonzero((u < 0) | (u > k))[0][0])
            raise FeasibilityError(f"policy serves {u[bad] * self.delta} at x={bad * self.delta}")
        self._table = u

    @classmethod
    def from_function(cls, f: Callable, delta: float, name: str = "") -> "Policy":
        """Wrap ``f(x) -> u`` (vectorized); values must land on the lattice."""

        def rule(n):
            x = np.arange(n) * delta
            u = evaluate(f, x)
            k = np.rint(u / delta)
            if np.any(np.abs(k * delta - u) > 1e-9 * np.maximum(1.0, np.abs(u))):
                raise FeasibilityError("policy action off the lattice")
            return k.astype(np.int64)

        return cls(delta, rule=rule, name=name)

    @property
    def extendable(self) -> bool:
        return self._rule is not None

    def table(self, n: int | None = None) -> np.ndarray:
        """Service indices for states ``0 .. n-1`` (at least)."""
        if n is None:
            return self._table
        if n > len(self._table):
            if self._rule is None:
                raise EvaluationError(f"policy defined only on {len(self._table)} states")
            size = max(n, 2 * len(self._table), 64)
            self._set(self._rule(size))
        return self._table

    def u_index(self, k):
        k = np.asarray(k, dtype=np.int64)
        return self.table(int(k.max()) + 1 if k.size else 0)[k]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k = np.rint(x / self.delta).astype(np.int64)
        out = self.u_index(k) * self.delta
        return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# lattice Bellman operator


def _lattice_values(h, delta: float, n_total: int, cap: int | None) -> np.ndarray:
    k = np.arange(n_total)
    if cap is not None:
        k = np.minimum(k, cap)
    if isinstance(h, TabularFunction):
        _check_delta(h.grid.delta, delta)
        if cap is None or cap > h.grid.n - 1:
            cap = h.grid.n - 1
            k = np.minimum(k, cap)
        return np.ascontiguousarray(h.values[k])
    return np.ascontiguousarray(evaluate(h, k * delta))


def bellman_table(h, model: CostModel, arrivals: ArrivalPmf, n: int, cap: int | None = None):
    """Minimize ``nu P(u) + E h(x - u + A)`` over lattice ``u`` for states ``0..n-1``.

    Returns ``(best, y_arg, h_x)`` with ``y_arg = x - u`` the post-service
    state (largest one on ties, i.e. smallest service).
    """
    delta = arrivals.delta
    hv = _lattice_values(h, delta, n + arrivals.max_idx, cap)
    g = kernels.expect(hv, arrivals, n)
    pc = np.ascontiguousarray(model.power(np.arange(n) * delta))
    best, y = kernels.minplus_monotone(g, pc, n)
    return best, y, hv[:n]


# ---------------------------------------------------------------------------
# value iteration


@dataclass
class ViaResult:
    V: TabularFunction
    h: TabularFunction
    eta_hat: float
    eta_span: float
    error_trace: np.ndarray
    iterations: int
    converged: bool
    policy: Policy


def value_iteration(model: CostModel, arrivals: ArrivalPmf, grid: StateGrid,
                    V0: TabularFunction | None = None, max_iters: int = 10_000,
                    tol: float = 1e-6) -> ViaResult:
    """Successive approximation ``V_{n+1} = min_u (c + P_u V_n)`` on the truncated lattice.

    Stops once ``max |h_{n+1} - h_n| < tol`` with ``h_n = V_n - V_n(0)``.
    """
    _check_delta(grid.delta, arrivals.delta)
    n = grid.n
    x = grid.x
    cap = n - 1
    pc = np.ascontiguousarray(model.power(x))
    V = np.zeros(n) if V0 is None else np.array(V0.values, dtype=float)
    if V.shape != (n,):
        raise ParameterError("V0 must live on the same grid")
    h = V - V[0]
    trace = []
    converged = False
    y = np.arange(n)
    for it in range(1, max_iters + 1):
        hv = np.concatenate([V, np.full(arrivals.max_idx, V[cap])])
        g = kernels.expect(hv, arrivals, n)
        best, y = kernels.minplus_monotone(g, pc, n)
        Vn = x + best
        hn = Vn - Vn[0]
        err = float(np.max(np.abs(hn - h)))
        trace.append(err)
        diff = Vn - V
        V_prev, V, h = V, Vn, hn
        if not np.isfinite(err) or (trace[0] > 0 and err > 10.0 * trace[0]):
            raise DivergenceError(f"value iteration diverging at sweep {it} (error {err:g})")
        if err < tol:
            converged = True
            break
    eta_hat = float(V[0] - V_prev[0])
    eta_span = float(0.5 * (diff.max() + diff.min()))
    return ViaResult(
        V=TabularFunction(grid, V),
        h=TabularFunction(grid, h),
        eta_hat=eta_hat,
        eta_span=eta_span,
        error_trace=np.asarray(trace),
        iterations=len(trace),
        converged=converged,
        policy=Policy(grid.delta, table=np.arange(n) - y, name="via"),
    )


def evaluate_policy(policy: Policy, model: CostModel, arrivals: ArrivalPmf, grid: StateGrid,
                    tol: float = 1e-9, max_iters: int = 100_000):
    """Average cost and relative value of a fixed policy on the truncated lattice.

    Relative value iteration for Poisson's equation; returns ``(eta, h)``.
    """
    _check_delta(grid.delta, arrivals.delta)
    n = grid.n
    u = policy.table(n)[:n]
    y = np.arange(n) - u
    c = model(grid.x, u * grid.delta)
    V = np.zeros(n)
    for _ in range(max_iters):
        hv = np.concatenate([V, np.full(arrivals.max_idx, V[-1])])
        g = kernels.expect(hv, arrivals, n)
        Vn = c + g[y]
        eta = Vn[0] - V[0]
        done = np.max(np.abs((Vn - Vn[0]) - (V - V[0]))) < tol
        V = Vn
        if done:
            break
    else:
        raise DivergenceError("policy evaluation did not converge")
    return float(eta), TabularFunction(grid, V - V[0])


# ---------------------------------------------------------------------------
# myopic policies and Bellman error


def myopic_policy(h, model: CostModel, arrivals: ArrivalPmf, grid: StateGrid | None = None) -> Policy:
    """The (c, h)-myopic policy ``argmin_u c(x, u) + D_u h(x)`` over lattice actions.

    With ``grid`` (or tabular ``h``) the truncated model on that grid is used;
    otherwise ``h`` must be callable and the policy extends without bound.
    """
    if isinstance(h, TabularFunction):
        grid = h.grid if grid is None else grid
    if grid is not None:
        _check_delta(grid.delta, arrivals.delta)
        n = grid.n
        _, y, _ = bellman_table(h, model, arrivals, n, cap=n - 1)
        return Policy(grid.delta, table=np.arange(n) - y, name="myopic")

    def rule(size):
        _, y, _ = bellman_table(h, model, arrivals, size)
        return np.arange(size) - y

    return Policy(arrivals.delta, rule=rule, name="myopic")


def _objective(h, model, arrivals, x, u, x_cap):
    nxt = x[:, None] - u[:, None] + arrivals.values[None, :]
    if x_cap is not None:
        nxt = np.minimum(nxt, x_cap)
    return model(x, u) + evaluate(h, nxt) @ arrivals.prob


def _golden_refine(h, model, arrivals, x, u0, x_cap, iters=40):
    delta = arrivals.delta
    lo = np.maximum(u0 - delta, 0.0)
    hi = np.minimum(u0 + delta, x)
    a = hi - _GOLDEN * (hi - lo)
    b = lo + _GOLDEN * (hi - lo)
    fa = _objective(h, model, arrivals, x, a, x_cap)
    fb = _objective(h, model, arrivals, x, b, x_cap)
    for _ in range(iters):
        left = fa <= fb
        right = ~left
        # keep [lo, b] where the left probe wins, [a, hi] otherwise
        hi = np.where(left, b, hi)
        lo = np.where(left, lo, a)
        b = np.where(left, a, b)
        fb = np.where(left, fa, fb)
        a = np.where(right, b, a)
        fa = np.where(right, fb, fa)
        a = np.where(left, hi - _GOLDEN * (hi - lo), a)
        b = np.where(right, lo + _GOLDEN * (hi - lo), b)
        if left.any():
            fa[left] = _objective(h, model, arrivals, x[left], a[left], x_cap)
        if right.any():
            fb[right] = _objective(h, model, arrivals, x[right], b[right], x_cap)
    u = np.where(fa <= fb, a, b)
    return u, np.minimum(fa, fb)


def bellman_error_mdp(h, model: CostModel, arrivals: ArrivalPmf, x, grid: StateGrid | None = None,
                      refine: bool | None = None, return_policy: bool = False):
    """``E_B(x) = min_u (c(x, u) + D_u h(x))``.

    Exact minimization over lattice actions, then (callable ``h`` only) a
    golden-section pass over the continuous interval around the lattice
    minimizer.  ``grid`` selects the truncated model.
    """
    if isinstance(h, TabularFunction):
        grid = h.grid if grid is None else grid
        if refine:
            raise ParameterError("continuous refinement needs a callable h")
        refine = False
    elif refine is None:
        refine = True
    delta = arrivals.delta
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    k = np.rint(xs / delta).astype(np.int64)
    if np.any(np.abs(k * delta - xs) > 1e-9 * np.maximum(1.0, xs)) or np.any(k < 0):
        raise EvaluationError("Bellman error is evaluated at lattice states")
    cap = None
    if grid is not None:
        _check_delta(grid.delta, delta)
        cap = grid.n - 1
        if np.any(k > cap):
            raise EvaluationError("state beyond the truncated grid")
    n = int(k.max()) + 1
    best, y, hx = bellman_table(h, model, arrivals, n, cap=cap)
    xk = k * delta
    eb = xk + best[k] - hx[k]
    u = (k - y[k]) * delta
    if refine:
        x_cap = None if grid is None else grid.x_max
        u_r, f_r = _golden_refine(h, model, arrivals, xk, u, x_cap)
        f_r = f_r - hx[k]
        better = f_r < eb
        eb = np.where(better, f_r, eb)
        u = np.where(better, u_r, u)
    eb = eb.reshape(np.shape(x))
    u = u.reshape(np.shape(x))
    if eb.ndim == 0:
        eb, u = float(eb), float(u)
    return (eb, u) if return_policy else eb


def perturbed_cost(h, model: CostModel, arrivals: ArrivalPmf, x, u, eta: float, **kw):
    """Inverse-DP cost ``c^h(x, u) = c(x, u) - E_B(x) + eta``."""
    eb = np.asarray(bellman_error_mdp(h, model, arrivals, x, **kw))
    out = model(x, u) - eb + eta
    return float(out) if np.ndim(out) == 0 else out


def normalized_error(h, model: CostModel, arrivals: ArrivalPmf, x, u, eta: float, **kw):
    """``|c^h(x, u) - c(x, u)| / (c(x, u) + 1) = |eta - E_B(x)| / (c(x, u) + 1)``."""
    eb = np.asarray(bellman_error_mdp(h, model, arrivals, x, **kw))
    out = np.abs(eta - eb) / (model(x, u) + 1.0)
    return float(out) if np.ndim(out) == 0 else out


def max_normalized_error(h, model: CostModel, arrivals: ArrivalPmf, x, eta: float, **kw):
    """``max_u E_c(x, u)``; every cost family is smallest at u = 0."""
    return normalized_error(h, model, arrivals, x, np.zeros_like(np.asarray(x, dtype=float)), eta, **kw)


def direct_error(h, h_star_ref, x):
    """``E_d(x) = h*(x) - h(x)``; both functions must vanish at the origin."""
    h0 = float(evaluate(h, np.zeros(1))[0]) if not isinstance(h, TabularFunction) else h(0.0)
    r0 = float(evaluate(h_star_ref, np.zeros(1))[0]) if not isinstance(h_star_ref, TabularFunction) else h_star_ref(0.0)
    if abs(h0) > 1e-9 or abs(r0) > 1e-9:
        raise ParameterError("direct error needs functions normalized to vanish at 0")
    xs = np.asarray(x, dtype=float)
    hv = h(xs) if isinstance(h, TabularFunction) else evaluate(h, xs)
    rv = h_star_ref(xs) if isinstance(h_star_ref, TabularFunction) else evaluate(h_star_ref, xs)
    out = np.asarray(rv) - np.asarray(hv)
    return float(out) if out.ndim == 0 else out


@dataclass
class ErrorReport:
    x: np.ndarray
    bellman: np.ndarray
    direct: np.ndarray | None
    normalized_max: np.ndarray
    eta: float
    model: CostModel

    def normalized(self, x, u):
        k = np.searchsorted(self.x, x)
        return np.abs(self.eta - self.bellman[k]) / (self.model(x, u) + 1.0)


def error_report(h, model: CostModel, arrivals: ArrivalPmf, x, eta: float, h_star=None,
                 **kw) -> ErrorReport:
    xs = np.asarray(x, dtype=float)
    eb = np.atleast_1d(bellman_error_mdp(h, model, arrivals, xs, **kw))
    d = None if h_star is None else np.atleast_1d(direct_error(h, h_star, xs))
    return ErrorReport(xs, eb, d, np.abs(eta - eb) / (xs + 1.0), eta, model)


# ---------------------------------------------------------------------------
# Monte-Carlo direct-error bounds


@dataclass
class McBounds:
    lower: float
    upper: float
    lower_se: float
    upper_se: float
    n_reps: int
    capped: int


def _excursion_sums(u_tab, weight, arrivals, start, n_reps, rng, cap, t_cap):
    x = np.full(n_reps, start, dtype=np.int64)
    total = np.zeros(n_reps)
    active = np.ones(n_reps, dtype=bool)
    steps = 0
    while steps < t_cap:
        ia = np.flatnonzero(active)
        if ia.size == 0:
            break
        xi = x[ia]
        total[ia] += weight[xi]
        nxt = np.minimum(xi - u_tab[xi] + arrivals.sample_idx(rng, ia.size), cap)
        x[ia] = nxt
        active[ia] = nxt != 0
        steps += 1
    return total, int(active.sum())


def direct_error_bounds_mc(h, model: CostModel, arrivals: ArrivalPmf, via: ViaResult, x: float,
                           n_reps: int, rng: np.random.Generator, t_cap: int = 10**6) -> McBounds:
    """Estimate the excursion bounds on ``h*(x) - h(x)``.

    lower = E^{phi*}_x sum_{t < tau_0} (E_B(X_t) - eta*),
    upper = the same sum under the (c, h)-myopic policy,
    with tau_0 the first hitting time of the origin.  Everything is computed on
    the truncated lattice model of ``via`` so both identities are exact there.
    At ``x = 0`` the sum is empty and both bounds are zero.
    """
    grid = via.V.grid
    k0 = grid.index(x)
    if k0 == 0:
        return McBounds(0.0, 0.0, 0.0, 0.0, n_reps, 0)
    eb = bellman_error_mdp(h, model, arrivals, grid.x, grid=grid, refine=False)
    weight = np.asarray(eb) - via.eta_hat
    phi_h = myopic_policy(h, model, arrivals, grid=grid).table()
    phi_star = via.policy.table()
    cap = grid.n - 1
    lo, c_lo = _excursion_sums(phi_star, weight, arrivals, k0, n_reps, rng, cap, t_cap)
    hi, c_hi = _excursion_sums(phi_h, weight, arrivals, k0, n_reps, rng, cap, t_cap)
    capped = c_lo + c_hi
    if capped > 0.01 * 2 * n_reps:
        warnings.warn(f"{capped} of {2 * n_reps} episodes hit the {t_cap}-step cap", ReliabilityWarning)
    se = lambda v: float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    return McBounds(float(lo.mean()), float(hi.mean()), se(lo), se(hi), n_reps, capped)
