"""Linear bases, chain simulation, LSTD for average cost and TD policy iteration."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import EvaluationError, ParameterError, SingularityError
from .fluid import DiffusionBasis, k_star
from .model import ArrivalPmf, CostModel
from .rng import Streams
from .solver import Policy, myopic_policy

THETA_BOUND = 20.0
_COND_LIMIT = 1e12


# ---------------------------------------------------------------------------
# bases


@dataclass(frozen=True)
class LinearBasis:
    """Feature map ``psi(x) = (psi_1(x), ..., psi_d(x))``; each feature is vectorized."""

    functions: tuple[Callable, ...]
    names: tuple[str, ...]
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.functions) != len(self.names) or not self.functions:
            raise ParameterError("need one name per basis function")

    @property
    def d(self) -> int:
        return len(self.functions)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.stack([np.broadcast_to(np.asarray(f(x), dtype=float), x.shape)
                         for f in self.functions], axis=-1)

    def value(self, theta) -> Callable:
        """``h_theta(x) = psi(x) . theta`` as a vectorized callable."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.d,):
            raise ParameterError(f"theta must have shape ({self.d},)")
        return lambda x: self(x) @ theta


def fluid_diffusion_basis(eta: float = 2.0, q: float | None = None, alpha: float = 1.0) -> LinearBasis:
    """``psi_1 = K*`` and ``psi_2 = q - sqrt(2x + q^2)`` (so ``theta = (1, eta)`` is the diffusion basis)."""
    diff = DiffusionBasis(eta=eta, q=q, alpha=alpha)
    q = diff.q
    return LinearBasis(
        (lambda x: k_star(x, alpha), lambda x: q - np.sqrt(2.0 * x + q * q)),
        ("k_star", "sqrt_correction"),
        {"eta": eta, "q": q, "alpha": alpha},
    )


def polynomial_basis() -> LinearBasis:
    return LinearBasis((lambda x: x, lambda x: x * x), ("x", "x2"))


def indicator_basis(n_states: int, delta: float) -> LinearBasis:
    """Indicators of lattice states ``1..n_states``; fits any h with h(0) = 0."""
    if n_states < 1:
        raise ParameterError("need at least one state")

    def make(i):
        return lambda x: (np.rint(np.asarray(x) / delta) == i).astype(float)

    return LinearBasis(tuple(make(i) for i in range(1, n_states + 1)),
                       tuple(f"1[x={i}]" for i in range(1, n_states + 1)),
                       {"delta": delta})


# ---------------------------------------------------------------------------
# simulation


@dataclass
class ChainTrace:
    """States ``X_0..X_n`` and actions ``U_0..U_{n-1}`` in lattice units."""

    x_idx: np.ndarray
    u_idx: np.ndarray
    delta: float
    cost: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return self.x_idx * self.delta

    @property
    def u(self) -> np.ndarray:
        return self.u_idx * self.delta

    @property
    def n(self) -> int:
        return len(self.u_idx)


def simulate_chain(policy: Policy, model: CostModel, arrivals: ArrivalPmf, x0: float, n_steps: int,
                   stream: np.random.Generator | None = None, arrival_idx: np.ndarray | None = None,
                   cap: int | None = None) -> ChainTrace:
    """Run ``X(t+1) = X(t) - phi(X(t)) + A(t+1)`` for ``n_steps`` steps.

    Arrival indices come from ``arrival_idx`` when given (common random
    numbers) or are drawn from ``stream``.  ``cap`` clamps the state index.
    """
    if abs(policy.delta - arrivals.delta) > 1e-12 * arrivals.delta:
        raise ParameterError("policy and arrivals use different lattices")
    if arrival_idx is None:
        if stream is None:
            raise ParameterError("need a random stream or pre-drawn arrivals")
        arrival_idx = arrivals.sample_idx(stream, n_steps)
    arr = np.ascontiguousarray(arrival_idx, dtype=np.int64)
    if arr.shape[0] < n_steps:
        raise ParameterError("not enough pre-drawn arrivals")
    x = int(round(x0 / arrivals.delta))
    if abs(x * arrivals.delta - x0) > 1e-9 * max(1.0, x0) or x < 0:
        raise EvaluationError("initial state must be a lattice point")
    xs = np.empty(n_steps + 1, dtype=np.int64)
    us = np.empty(n_steps, dtype=np.int64)
    table = policy.table(x + 1)
    t = 0
    while True:
        t, x = kernels.run_chain(table, arr, xs, us, t, n_steps, x, -1 if cap is None else cap)
        if t >= n_steps:
            break
        table = policy.table(x + 1)
    xs[n_steps] = x
    c = model(xs[:-1] * arrivals.delta, us * arrivals.delta)
    return ChainTrace(xs, us, arrivals.delta, c)


# ---------------------------------------------------------------------------
# LSTD


@dataclass
class LstdResult:
    theta: np.ndarray  # projected onto [-THETA_BOUND, THETA_BOUND]
    theta_raw: np.ndarray
    eta_hat: float
    n_samples: int
    condition: float


def lstd_average_cost(trace: ChainTrace, basis: LinearBasis, ridge_eps: float = 1e-8) -> LstdResult:
    """LSTD(0) for the average-cost Poisson equation.

    Solves ``A theta = b`` with ``A = mean psi_t (psi_t - psi_{t+1})^T`` and
    ``b = mean psi_t (c_t - eta)``, ``eta`` the sample average cost.  A small
    ridge scaled to ``A`` keeps the solve stable.
    """
    n, d = trace.n, basis.d
    if n < 10 * d:
        raise ParameterError(f"need at least {10 * d} transitions for {d} features, got {n}")
    psi = basis(trace.x)
    p0, p1 = psi[:-1], psi[1:]
    eta = float(trace.cost.mean())
    A = p0.T @ (p0 - p1) / n
    b = p0.T @ (trace.cost - eta) / n
    scale = np.trace(np.abs(A)) / d
    A_reg = A + ridge_eps * scale * np.eye(d)
    cond = float(np.linalg.cond(A_reg)) if scale > 0 else np.inf
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise SingularityError(f"LSTD matrix ill-conditioned (cond={cond:.3g})")
    theta = np.linalg.solve(A_reg, b)
    return LstdResult(np.clip(theta, -THETA_BOUND, THETA_BOUND), theta, eta, n, cond)


# ---------------------------------------------------------------------------
# TD policy iteration


def policy_improvement(h: Callable, model: CostModel, arrivals: ArrivalPmf) -> Policy:
    """Myopic policy for ``h`` on the untruncated lattice."""
    return myopic_policy(h, model, arrivals)


@dataclass
class TdpiaStage:
    theta: np.ndarray
    theta_raw: np.ndarray
    eta_hat: float
    condition: float


@dataclass
class TdpiaTrace:
    basis: LinearBasis
    stages: list[TdpiaStage]
    final_policy: Policy

    @property
    def thetas(self) -> np.ndarray:
        return np.array([s.theta for s in self.stages])

    @property
    def etas(self) -> np.ndarray:
        return np.array([s.eta_hat for s in self.stages])


def tdpia(basis: LinearBasis, phi0: Policy, model: CostModel, arrivals: ArrivalPmf,
          stages: int = 4, steps_per_stage: int = 30_000, streams: Streams | None = None,
          x0: float = 0.0, arrival_draws: Sequence[np.ndarray] | None = None) -> TdpiaTrace:
    """Alternate LSTD evaluation and myopic improvement.

    Each stage runs a fresh trajectory from ``x0``.  Arrivals for stage ``k``
    are ``arrival_draws[k]`` or come from the ``arrivals/k`` substream.
    The raw (unprojected) coefficients drive the improvement step.
    """
    if stages < 1 or steps_per_stage < 1:
        raise ParameterError("need at least one stage and one step")
    if arrival_draws is None and streams is None:
        raise ParameterError("need streams or pre-drawn arrivals")
    policy = phi0
    records = []
    for k in range(stages):
        if arrival_draws is not None:
            draw = arrival_draws[k]
        else:
            draw = arrivals.sample_idx(streams.generator(f"arrivals/{k}"), steps_per_stage)
        trace = simulate_chain(policy, model, arrivals, x0, steps_per_stage, arrival_idx=draw)
        res = lstd_average_cost(trace, basis)
        records.append(TdpiaStage(res.theta, res.theta_raw, res.eta_hat, res.condition))
        policy = policy_improvement(basis.value(res.theta_raw), model, arrivals)
    return TdpiaTrace(basis, records, policy)


def min_one_policy(delta: float) -> Policy:
    """``phi(x) = min(x, 1)``, the usual initial policy."""
    return Policy.from_function(lambda x: np.minimum(x, 1.0), delta, name="min(x,1)")
