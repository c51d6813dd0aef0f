import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from covfest import (
    BilinearForm,
    CovarianceMatrix,
    PlanError,
    SampleBatch,
    SpikedModel,
    TracePower,
    build_plan,
    estimate_t1,
    estimate_t2,
    evaluate,
    plugin_estimate,
    sample_covariance,
    sample_gaussian,
    spiked_covariance,
    u_statistic,
)
from covfest.jackknife import JackknifePlan, extrapolation_weights
from covfest.rng import mix
from oracles import closed_form_plugin_bias


def exact_weights(sizes):
    out = []
    for j, nj in enumerate(sizes):
        c = Fraction(1)
        for i, ni in enumerate(sizes):
            if i != j:
                c *= Fraction(nj, nj - ni)
        out.append(c)
    return out


def test_plan_examples():
    p = build_plan(1000, 1, 2.0)
    assert p.sizes == (1000,) and p.weights == (1.0,)
    p = build_plan(1000, 2, 2.0)
    assert p.sizes == (500, 1000) and p.weights == pytest.approx((-1.0, 2.0), abs=1e-15)
    p = build_plan(1000, 3, 2.0)
    assert p.sizes == (250, 500, 1000)
    assert p.weights == pytest.approx((1 / 3, -2.0, 8 / 3), rel=1e-14)
    w, n = np.array(p.weights), np.array(p.sizes, float)
    assert abs(w.sum() - 1) < 1e-14
    assert abs(np.sum(w / n)) < 1e-15
    assert abs(np.sum(w / n**2)) < 1e-18


@pytest.mark.parametrize("k", range(1, 7))
@pytest.mark.parametrize("q", [1.5, 2.0, 3.0])
def test_plan_identities(k, q):
    p = build_plan(10_000, k, q)
    assert all(r <= 1e-9 for r in p.identity_residuals())
    exact = exact_weights(p.sizes)
    assert sum(exact) == 1
    for ell in range(1, k):
        assert sum(c / Fraction(nj) ** ell for c, nj in zip(exact, p.sizes)) == 0
    np.testing.assert_allclose(p.weights, [float(c) for c in exact], rtol=1e-12)
    assert p.sizes[0] >= p.n / p.c - 1e-9


def test_log_weight_path_matches_exact():
    sizes = [int(round(1.5 ** (j - 10) * 10**6)) for j in range(1, 11)]
    np.testing.assert_allclose(extrapolation_weights(sizes), [float(c) for c in exact_weights(sizes)], rtol=1e-10)
    p = build_plan(10**6, 10, 1.5)
    assert all(r <= 1e-9 for r in p.identity_residuals())


def test_plan_collision_repair_and_errors():
    p = build_plan(12, 4, 1.1)
    assert list(p.sizes) == sorted(set(p.sizes)) and p.sizes[-1] == 12
    with pytest.raises(PlanError):
        build_plan(3, 3, 2.0)
    with pytest.raises(PlanError):
        build_plan(100, 0, 2.0)
    with pytest.raises(PlanError):
        build_plan(100, 2, 1.0)


def test_plan_json_roundtrip():
    p = build_plan(1000, 3, 2.0)
    assert JackknifePlan.from_dict(p.to_dict()) == p
    bad = p.to_dict() | {"weights": [1.0, 1.0, 1.0]}
    with pytest.raises(PlanError):
        JackknifePlan.from_dict(bad)


def test_plugin_examples(rng):
    x = rng.standard_normal((7, 3))
    assert plugin_estimate(TracePower(1), SampleBatch(x)) == pytest.approx(np.mean(np.sum(x**2, axis=1)))
    u = rng.standard_normal(3)
    assert plugin_estimate(BilinearForm(u, u), SampleBatch(x[:1])) == pytest.approx(float(x[0] @ u) ** 2)
    assert plugin_estimate(TracePower(2), SampleBatch(np.zeros((4, 3)))) == 0.0


def test_t1_examples(rng):
    x = rng.standard_normal((40, 3))
    b = SampleBatch(x)
    assert estimate_t1(TracePower(2), b, build_plan(40, 1)) == plugin_estimate(TracePower(2), b)
    u, v = rng.standard_normal(3), rng.standard_normal(3)
    f = BilinearForm(u, v)
    expected = 2 * evaluate(f, sample_covariance(x)) - evaluate(f, sample_covariance(x[:20]))
    assert estimate_t1(f, b, build_plan(40, 2, 2.0)) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(PlanError):
        estimate_t1(f, b, build_plan(50, 2))


def test_t1_unbiased_for_trace_square():
    sigma = spiked_covariance(SpikedModel(10, 10, 1.0, 0.2))
    f = TracePower(2)
    plan = build_plan(500, 2, 2.0)
    target = evaluate(f, sigma)
    reps = 20_000
    est = np.array([estimate_t1(f, sample_gaussian(sigma, 500, seed=mix(17, r)), plan) for r in range(reps)])
    se = est.std(ddof=1) / math.sqrt(reps)
    assert abs(est.mean() - target) <= 3 * se
    plug = np.array([plugin_estimate(f, sample_gaussian(sigma, 500, seed=mix(17, r))) for r in range(2000)])
    # sanity: the plug-in is visibly biased at this size
    assert plug.mean() - target > 0.5 * closed_form_plugin_bias(sigma.entries, 500)


def test_t2_k1_equals_plugin(rng):
    b = SampleBatch(rng.standard_normal((30, 4)))
    for m in (1, 5, 200):
        assert estimate_t2(TracePower(2), b, build_plan(30, 1), m_subsets=m) == plugin_estimate(TracePower(2), b)


def test_u_statistic_of_mean_is_full_mean(rng):
    y = rng.standard_normal((6, 3))
    u = u_statistic(lambda rows: rows.mean(axis=0), y, 3)
    np.testing.assert_allclose(u, y.mean(axis=0), atol=1e-12)


def _exact_u(f, x, m):
    vals = [evaluate(f, sample_covariance(x[list(c)])) for c in itertools.combinations(range(len(x)), m)]
    return float(np.mean(vals))


def test_t2_exact_enumeration_matches_bruteforce(rng):
    x = rng.standard_normal((6, 2))
    b = SampleBatch(x)
    plan = JackknifePlan(6, 2, 2.0, (3, 6), tuple(extrapolation_weights([3, 6])))
    f = TracePower(2)
    expected = 2 * evaluate(f, sample_covariance(x)) - _exact_u(f, x, 3)
    assert estimate_t2(f, b, plan, m_subsets=20) == pytest.approx(expected, rel=1e-13)


def test_t2_incomplete_converges_to_exact(rng):
    x = rng.standard_normal((6, 2))
    b = SampleBatch(x)
    plan = JackknifePlan(6, 2, 2.0, (3, 6), tuple(extrapolation_weights([3, 6])))
    f = TracePower(2)
    exact = estimate_t2(f, b, plan)
    errs = [abs(estimate_t2(f, b, plan, m_subsets=m, seed=4, exact_limit=0) - exact) for m in (5, 19, 20_000)]
    # m_subsets >= C(6,3) switches to exact enumeration
    assert estimate_t2(f, b, plan, m_subsets=20, exact_limit=0) == pytest.approx(exact, rel=1e-14)
    assert errs[2] < 0.02 * abs(exact)
    assert errs[2] < errs[0]


def test_t2_deterministic_given_seed(rng):
    b = SampleBatch(rng.standard_normal((200, 3)))
    plan = build_plan(200, 2)
    a = estimate_t2(TracePower(2), b, plan, m_subsets=30, seed=9)
    assert a == estimate_t2(TracePower(2), b, plan, m_subsets=30, seed=9)
    assert a != estimate_t2(TracePower(2), b, plan, m_subsets=30, seed=10)


@given(st.integers(0, 2**32), st.integers(3, 8))
def test_t2_linear_exactness(seed, n):
    g = np.random.default_rng(seed)
    d = 3
    x = g.standard_normal((n, d))
    u, v = g.standard_normal(d), g.standard_normal(d)
    f = BilinearForm(u, v)
    sizes = sorted({max(1, n // 2), n})
    plan = JackknifePlan(n, len(sizes), 2.0, tuple(sizes), tuple(extrapolation_weights(sizes)))
    assert estimate_t2(f, SampleBatch(x), plan) == pytest.approx(plugin_estimate(f, SampleBatch(x)), rel=1e-10, abs=1e-12)


def test_u_statistic_variance_reduction():
    sigma = CovarianceMatrix(np.diag([1.0, 0.5]))
    f = TracePower(2)
    n, m, reps = 8, 4, 3000
    u_vals, prefix_vals = [], []
    for r in range(reps):
        x = sample_gaussian(sigma, n, seed=mix(23, r)).data
        u_vals.append(_exact_u(f, x, m))
        prefix_vals.append(evaluate(f, sample_covariance(x[:m])))
    u_var, p_var = np.var(u_vals, ddof=1), np.var(prefix_vals, ddof=1)
    assert u_var <= p_var * (1 + 4 * math.sqrt(2 / (reps - 1)))
    assert u_var < p_var
