import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from speedscale import (
    ArrivalPmf,
    CostModel,
    ParameterError,
    Policy,
    SingularityError,
    StateGrid,
    Streams,
    fluid_diffusion_basis,
    lstd_average_cost,
    min_one_policy,
    myopic_policy,
    policy_improvement,
    polynomial_basis,
    simulate_chain,
    tdpia,
)
from speedscale.fluid import DiffusionBasis, k_star
from speedscale.td import THETA_BOUND, ChainTrace, LinearBasis, indicator_basis


def _batch_se(v, batches=50):
    m = v[: len(v) // batches * batches].reshape(batches, -1).mean(axis=1)
    return m.std(ddof=1) / np.sqrt(batches)


# small ergodic chain on {0, .., 4}: serve one unit, arrivals 0/1/2, clamp at 4
SMALL_PMF = ArrivalPmf.from_points([0.0, 1.0, 2.0], [0.4, 0.35, 0.25], 1.0)
SMALL_CAP = 4


def _small_poisson(model):
    n = SMALL_CAP + 1
    u = np.minimum(np.arange(n), 1)
    P = np.zeros((n, n))
    for k in range(n):
        for a, p in zip(SMALL_PMF.idx, SMALL_PMF.prob):
            P[k, min(k - u[k] + a, SMALL_CAP)] += p
    c = model(np.arange(n, dtype=float), u.astype(float))
    M = np.zeros((n, n))
    M[:, 0] = 1.0
    M[:, 1:] = (np.eye(n) - P)[:, 1:]
    sol = np.linalg.solve(M, c)
    return sol[0], sol[1:]


class TestSimulation:
    def test_zero_arrivals_drain(self, quad):
        pmf = ArrivalPmf.from_points([0.0], [1.0], 1.0)
        tr = simulate_chain(min_one_policy(1.0), quad, pmf, 5.0, 8, arrival_idx=np.zeros(8, dtype=np.int64))
        np.testing.assert_array_equal(tr.x, [5, 4, 3, 2, 1, 0, 0, 0, 0])
        np.testing.assert_array_equal(tr.u, [1, 1, 1, 1, 1, 0, 0, 0])
        np.testing.assert_allclose(tr.cost, quad(tr.x[:-1], tr.u))

    def test_reproducible(self, quad, pmf):
        phi = min_one_policy(pmf.delta)
        a = simulate_chain(phi, quad, pmf, 0.0, 5000, stream=Streams(7).generator("t"))
        b = simulate_chain(phi, quad, pmf, 0.0, 5000, stream=Streams(7).generator("t"))
        np.testing.assert_array_equal(a.x_idx, b.x_idx)

    def test_disjoint_streams_agree(self, via, quad, pmf, grid):
        means, ses = [], []
        for tag in ("left", "right"):
            tr = simulate_chain(via.policy, quad, pmf, 0.0, 200_000,
                                stream=Streams(3).generator(tag), cap=grid.n - 1)
            means.append(tr.cost.mean())
            ses.append(_batch_se(tr.cost))
        assert abs(means[0] - means[1]) <= 3 * np.hypot(*ses)
        assert abs(means[0] - via.eta_hat) <= 4 * ses[0]

    def test_needs_randomness(self, quad, pmf):
        with pytest.raises(ParameterError):
            simulate_chain(min_one_policy(pmf.delta), quad, pmf, 0.0, 10)

    def test_short_draws_rejected(self, quad, pmf):
        with pytest.raises(ParameterError):
            simulate_chain(min_one_policy(pmf.delta), quad, pmf, 0.0, 10, arrival_idx=np.zeros(5, np.int64))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_trajectory_feasible(self, seed):
        from speedscale import ScaledGeometric, arrival_pmf
        pmf = arrival_pmf(ScaledGeometric())
        phi = myopic_policy(k_star, CostModel.quadratic(), pmf)
        tr = simulate_chain(phi, CostModel.quadratic(), pmf, 0.0, 300, stream=np.random.default_rng(seed))
        assert np.all(tr.u_idx <= tr.x_idx[:-1])
        assert np.all(tr.x_idx >= 0)


class TestLstd:
    def test_tabular_oracle(self, quad):
        eta, h = _small_poisson(quad)
        tr = simulate_chain(Policy.from_function(lambda x: np.minimum(x, 1.0), 1.0), quad, SMALL_PMF,
                            0.0, 400_000, stream=np.random.default_rng(11), cap=SMALL_CAP)
        res = lstd_average_cost(tr, indicator_basis(SMALL_CAP, 1.0))
        assert res.eta_hat == pytest.approx(eta, rel=1e-2)
        np.testing.assert_allclose(res.theta_raw, h, rtol=1e-2, atol=1e-2)

    def test_fluid_diffusion_embedding(self):
        basis = fluid_diffusion_basis(eta=2.0)
        x = np.linspace(0, 50, 101)
        np.testing.assert_allclose(basis.value([1.0, 2.0])(x), DiffusionBasis(2.0)(x), rtol=1e-13, atol=1e-13)
        np.testing.assert_allclose(basis.value([1.0, 0.0])(x), k_star(x), rtol=1e-13)

    def test_sample_size_guard(self, quad, pmf):
        tr = simulate_chain(min_one_policy(pmf.delta), quad, pmf, 0.0, 19, stream=np.random.default_rng(0))
        with pytest.raises(ParameterError):
            lstd_average_cost(tr, polynomial_basis())

    def test_cost_shift_invariance(self, via, quad, pmf, grid):
        tr = simulate_chain(via.policy, quad, pmf, 0.0, 20_000, stream=np.random.default_rng(2), cap=grid.n - 1)
        basis = fluid_diffusion_basis()
        a = lstd_average_cost(tr, basis)
        shifted = ChainTrace(tr.x_idx, tr.u_idx, tr.delta, tr.cost + 5.0)
        b = lstd_average_cost(shifted, basis)
        np.testing.assert_allclose(b.theta_raw, a.theta_raw, rtol=1e-9, atol=1e-12)
        assert b.eta_hat == pytest.approx(a.eta_hat + 5.0)

    def test_ridge_is_negligible(self, via, quad, pmf, grid):
        tr = simulate_chain(via.policy, quad, pmf, 0.0, 20_000, stream=np.random.default_rng(4), cap=grid.n - 1)
        basis = fluid_diffusion_basis()
        a = lstd_average_cost(tr, basis, ridge_eps=1e-8)
        b = lstd_average_cost(tr, basis, ridge_eps=1e-11)
        np.testing.assert_allclose(a.theta_raw, b.theta_raw, rtol=1e-5)

    def test_singular_features(self, quad, pmf):
        tr = simulate_chain(min_one_policy(pmf.delta), quad, pmf, 0.0, 1000, stream=np.random.default_rng(0))
        zero = LinearBasis((lambda x: 0.0 * x, lambda x: 0.0 * x), ("z1", "z2"))
        with pytest.raises(SingularityError):
            lstd_average_cost(tr, zero)
        dup = LinearBasis((lambda x: x, lambda x: x), ("a", "b"))
        with pytest.raises(SingularityError):
            lstd_average_cost(tr, dup, ridge_eps=0.0)

    def test_projection(self):
        x_idx = np.array([0, 1, 0, 1] * 10 + [0])
        tr = ChainTrace(x_idx, np.zeros(40, np.int64), 1.0, np.where(x_idx[:-1] == 1, 1e6, 0.0))
        res = lstd_average_cost(tr, indicator_basis(1, 1.0))
        assert abs(res.theta_raw[0]) > THETA_BOUND
        assert abs(res.theta[0]) == THETA_BOUND


class TestImprovement:
    def test_zero_theta_serves_nothing(self, quad, pmf):
        phi = policy_improvement(fluid_diffusion_basis().value([0.0, 0.0]), quad, pmf)
        assert np.all(phi.table(500) == 0)

    def test_unit_theta_is_kstar_myopic(self, quad, pmf):
        a = policy_improvement(fluid_diffusion_basis().value([1.0, 0.0]), quad, pmf).table(2000)
        b = myopic_policy(k_star, quad, pmf).table(2000)
        np.testing.assert_array_equal(a, b)


class TestTdpia:
    def test_single_stage(self, quad, pmf):
        basis = fluid_diffusion_basis()
        out = tdpia(basis, min_one_policy(pmf.delta), quad, pmf, stages=1, steps_per_stage=2000,
                    streams=Streams(5))
        assert out.thetas.shape == (1, 2)
        assert np.all(np.abs(out.thetas) <= THETA_BOUND)
        ref = policy_improvement(basis.value(out.stages[0].theta_raw), quad, pmf)
        np.testing.assert_array_equal(out.final_policy.table(300), ref.table(300))

    def test_reproducible_and_shared_draws(self, quad, pmf):
        basis = fluid_diffusion_basis()
        phi0 = min_one_policy(pmf.delta)
        a = tdpia(basis, phi0, quad, pmf, stages=2, steps_per_stage=3000, streams=Streams(9))
        b = tdpia(basis, phi0, quad, pmf, stages=2, steps_per_stage=3000, streams=Streams(9))
        np.testing.assert_array_equal(a.thetas, b.thetas)
        draws = [pmf.sample_idx(Streams(9).generator(f"arrivals/{k}"), 3000) for k in range(2)]
        c = tdpia(basis, phi0, quad, pmf, stages=2, steps_per_stage=3000, arrival_draws=draws)
        np.testing.assert_array_equal(a.thetas, c.thetas)

    def test_needs_randomness(self, quad, pmf):
        with pytest.raises(ParameterError):
            tdpia(fluid_diffusion_basis(), min_one_policy(pmf.delta), quad, pmf)
