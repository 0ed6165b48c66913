import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from speedscale import _pykernels as py
from speedscale import kernels
from speedscale import CoinMixture, ScaledGeometric, arrival_pmf, mixture_for_variance

try:
    from speedscale import _ckernels as cy
except ImportError:  # pragma: no cover - extension not built
    cy = None

needs_ext = pytest.mark.skipif(cy is None, reason="compiled extension not built")


def convex_costs(n, power):
    return 0.5 * (np.arange(n) / 24.0) ** power


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 120), st.integers(0, 2**32 - 1), st.sampled_from([1.0, 1.5, 2.0, 3.0]))
def test_monotone_minplus_matches_brute_force(n, seed, power):
    g = np.random.default_rng(seed).normal(size=n) * 3.0
    pc = convex_costs(n, power)
    v, a = py.minplus_monotone(g, pc, n)
    vb, ab = py.minplus_brute(g, pc, n)
    assert np.array_equal(v, vb)
    assert np.array_equal(a, ab)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 60), st.integers(0, 2**32 - 1))
def test_minplus_ties_pick_largest_y(n, seed):
    # integer-valued data produces many exact ties
    g = np.random.default_rng(seed).integers(0, 3, size=n).astype(float)
    pc = np.arange(n, dtype=float) ** 2
    _, a = py.minplus_monotone(g, pc, n)
    for x in range(n):
        cand = pc[x - np.arange(x + 1)] + g[: x + 1]
        assert a[x] == np.flatnonzero(cand == cand.min()).max()


@needs_ext
@settings(max_examples=40, deadline=None)
@given(st.integers(1, 200), st.integers(0, 2**32 - 1))
def test_backends_agree_on_minplus(n, seed):
    g = np.random.default_rng(seed).normal(size=n)
    pc = convex_costs(n, 2.0)
    vp, ap = py.minplus_monotone(g, pc, n)
    vc, ac = cy.minplus_monotone(g, pc, n)
    assert np.array_equal(vp, vc) and np.array_equal(ap, ac)


@needs_ext
@pytest.mark.parametrize("spec", [ScaledGeometric(), mixture_for_variance(1.0), mixture_for_variance(8.0)])
def test_backends_agree_on_expectations(spec, rng):
    pmf = arrival_pmf(spec)
    n = 400
    v = rng.random(n + pmf.max_idx) * np.arange(n + pmf.max_idx) ** 1.5
    assert np.array_equal(py.expect_shift(v, pmf.idx, pmf.prob, n), cy.expect_shift(v, pmf.idx, pmf.prob, n))
    g = pmf.geometric
    args = (g.stride, g.ratio, g.weights, g.tail_weight, g.point_idx, g.point_prob, n)
    assert np.array_equal(py.expect_geometric(v, *args), cy.expect_geometric(v, *args))


@pytest.mark.parametrize("spec", [ScaledGeometric(), mixture_for_variance(2.0), mixture_for_variance(32.0),
                                  CoinMixture(rho_z=1.0)])
def test_geometric_recursion_matches_direct_sum(spec, rng):
    pmf = arrival_pmf(spec)
    n = 3000
    v = np.arange(n + pmf.max_idx) ** 1.5 + rng.random(n + pmf.max_idx)
    direct = kernels.expect_shift(v, pmf.idx, pmf.prob, n)
    fast = kernels.expect(v, pmf, n)
    np.testing.assert_allclose(fast, direct, rtol=1e-13)


def test_expect_rejects_short_input(pmf):
    v = np.zeros(10)
    with pytest.raises(IndexError):
        kernels.expect_shift(v, pmf.idx, pmf.prob, 5)
    with pytest.raises(IndexError):
        kernels.expect(v, pmf, 5)


@needs_ext
def test_backends_agree_on_chain(rng):
    table = np.minimum(np.arange(500), 24).astype(np.int64)
    arr = rng.integers(0, 40, size=300).astype(np.int64)
    out = []
    for mod in (py, cy):
        xs = np.zeros(301, dtype=np.int64)
        us = np.zeros(300, dtype=np.int64)
        t, x = mod.run_chain(table, arr, xs, us, 0, 300, 3, -1)
        out.append((t, x, xs.copy(), us.copy()))
    assert out[0][0] == out[1][0] and out[0][1] == out[1][1]
    assert np.array_equal(out[0][2], out[1][2]) and np.array_equal(out[0][3], out[1][3])


def test_chain_stops_at_table_edge():
    table = np.zeros(5, dtype=np.int64)
    arr = np.full(10, 2, dtype=np.int64)
    xs = np.zeros(11, dtype=np.int64)
    us = np.zeros(10, dtype=np.int64)
    t, x = kernels.run_chain(table, arr, xs, us, 0, 10, 0, -1)
    assert (t, x) == (3, 6)
    assert list(xs[:3]) == [0, 2, 4]


def test_chain_cap_clamps_state():
    table = np.zeros(5, dtype=np.int64)
    arr = np.full(10, 2, dtype=np.int64)
    xs = np.zeros(11, dtype=np.int64)
    us = np.zeros(10, dtype=np.int64)
    t, x = kernels.run_chain(table, arr, xs, us, 0, 10, 0, 4)
    assert (t, x) == (10, 4)


def test_backend_name():
    assert kernels.BACKEND in ("cython", "python")


def test_environment_forces_fallback():
    import os
    import subprocess
    import sys

    env = dict(os.environ, SPEEDSCALE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import speedscale; print(speedscale.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
