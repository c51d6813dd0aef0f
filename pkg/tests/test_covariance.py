import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from covfest import (
    CovarianceMatrix,
    DegenerateCovariance,
    InvalidInput,
    SampleBatch,
    SpikedModel,
    effective_rank,
    operator_norm,
    sample_covariance,
    sample_gaussian,
    spiked_covariance,
    spiked_kl,
)
from covfest.rng import mix, splitmix64
from conftest import random_spd
from oracles import gaussian_kl


def test_sample_covariance_examples():
    assert np.array_equal(sample_covariance(SampleBatch(np.zeros((4, 3)))).entries, np.zeros((3, 3)))
    np.testing.assert_array_equal(sample_covariance(SampleBatch([[1.0, 0.0], [0.0, 1.0]])).entries, [[0.5, 0], [0, 0.5]])
    np.testing.assert_array_equal(sample_covariance(SampleBatch([[1.0, 1.0]])).entries, [[1, 1], [1, 1]])


def test_empty_batch_rejected():
    with pytest.raises(InvalidInput):
        SampleBatch(np.zeros((0, 3)))
    with pytest.raises(InvalidInput):
        sample_covariance(np.zeros((0, 3)))


def test_covariance_matrix_invariants(rng):
    a = random_spd(rng, 6)
    s = CovarianceMatrix(a)
    w = s.spectrum
    assert np.all(np.diff(w) <= 0)
    assert s.norm == pytest.approx(np.linalg.norm(a, 2), rel=1e-10)
    assert s.trace == pytest.approx(w.sum(), rel=1e-10)
    resid = a @ s.eigvecs - s.eigvecs * w
    assert np.max(np.linalg.norm(resid, axis=0)) <= 1e-9 * s.norm
    np.testing.assert_allclose(s.sqrt @ s.sqrt, a, atol=1e-12)
    with pytest.raises(ValueError):
        s.entries[0, 0] = 1.0


def test_asymmetric_and_nonfinite_rejected():
    with pytest.raises(InvalidInput):
        CovarianceMatrix([[1.0, 0.1], [0.0, 1.0]])
    with pytest.raises(InvalidInput):
        CovarianceMatrix([[np.nan, 0.0], [0.0, 1.0]])


def test_effective_rank_examples():
    assert effective_rank(CovarianceMatrix.identity(7)) == pytest.approx(7.0)
    assert effective_rank(CovarianceMatrix.diag([2, 1, 1])) == pytest.approx(2.0)
    sp = spiked_covariance(SpikedModel(50, 50, 1.0, 0.1))
    assert effective_rank(sp) == pytest.approx(5.9, rel=1e-12)
    with pytest.raises(DegenerateCovariance):
        effective_rank(np.zeros((3, 3)))


@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32))
def test_effective_rank_range(d, rank, seed):
    rank = min(rank, d)
    g = np.random.default_rng(seed)
    b = g.standard_normal((d, rank))
    s = CovarianceMatrix(b @ b.T)
    r = effective_rank(s)
    assert 1.0 - 1e-12 <= r <= rank + 1e-9


def test_sample_gaussian_zero_and_determinism():
    z = sample_gaussian(np.zeros((3, 3)), 5, seed=1)
    assert np.array_equal(z.data, np.zeros((5, 3)))
    a = sample_gaussian(CovarianceMatrix.diag([1, 2]), 100, seed=42)
    b = sample_gaussian(CovarianceMatrix.diag([1, 2]), 100, seed=42)
    assert a.data.tobytes() == b.data.tobytes()
    assert a.seed == 42 and a.generator_id.startswith("philox")
    c = sample_gaussian(CovarianceMatrix.diag([1, 2]), 100, seed=43)
    assert not np.array_equal(a.data, c.data)


def test_sample_gaussian_errors():
    with pytest.raises(InvalidInput):
        sample_gaussian([[np.inf, 0], [0, 1]], 3, seed=0)
    with pytest.raises(InvalidInput):
        sample_gaussian(np.eye(2), 0, seed=0)
    with pytest.raises(InvalidInput):
        sample_gaussian([[1.0, 0.0], [0.0, -1.0]], 3, seed=0)


def test_sample_gaussian_law_of_large_numbers():
    b = sample_gaussian(np.eye(2), 50_000, seed=7)
    np.testing.assert_allclose(sample_covariance(b).entries, np.eye(2), atol=0.05)


def test_sample_gaussian_singular_spiked():
    s = spiked_covariance(SpikedModel(4, 2, 2.0, 1.0))
    b = sample_gaussian(s, 200, seed=3)
    assert np.all(b.data[:, 2:] == 0.0)


def test_sample_covariance_unbiased_single_row():
    sigma = CovarianceMatrix(random_spd(np.random.default_rng(5), 3))
    reps = 10_000
    draws = np.stack([sample_covariance(sample_gaussian(sigma, 1, seed=mix(11, r))).entries for r in range(reps)])
    mean = draws.mean(axis=0)
    se = draws.std(axis=0, ddof=1) / np.sqrt(reps)
    assert np.all(np.abs(mean - sigma.entries) <= 4 * se)


def test_spiked_covariance_examples():
    np.testing.assert_array_equal(spiked_covariance(SpikedModel(2, 2, 2.0, 1.0, [1.0, 0.0])).entries, np.diag([2.0, 1.0]))
    np.testing.assert_array_equal(spiked_covariance(SpikedModel(3, 2, 2.0, 1.0, [1.0, 0, 0])).entries, np.diag([2.0, 1.0, 0.0]))
    iso = spiked_covariance(SpikedModel(3, 2, 0.5, 0.5), strict=False)
    np.testing.assert_array_equal(iso.entries, np.diag([0.5, 0.5, 0.0]))
    with pytest.raises(InvalidInput):
        spiked_covariance(SpikedModel(3, 2, 0.5, 0.5))
    with pytest.raises(InvalidInput):
        spiked_covariance(SpikedModel(2, 2, 2.0, 1.0, [1.0, 1.0]))


@given(st.integers(2, 7), st.integers(0, 2**32))
def test_spiked_spectrum(d, seed):
    g = np.random.default_rng(seed)
    m = int(g.integers(2, d + 1))
    u = np.zeros(d)
    u[:m] = g.standard_normal(m)
    u /= np.linalg.norm(u)
    lam, mu = 1.0 + g.uniform(0.1, 3), g.uniform(0.05, 1.0)
    model = SpikedModel(d, m, lam, mu, u)
    s = spiked_covariance(model)
    expected = np.sort(np.r_[lam, np.full(m - 1, mu), np.zeros(d - m)])[::-1]
    np.testing.assert_allclose(s.spectrum, expected, atol=1e-12)
    assert u @ s.entries @ u == pytest.approx(lam, rel=1e-12)
    assert effective_rank(s) == pytest.approx(model.effective_rank, rel=1e-12)


def _unit(g, m):
    v = g.standard_normal(m)
    return v / np.linalg.norm(v)


def test_spiked_kl_examples():
    assert spiked_kl([1.0, 0.0], [1.0, 0.0], 2.0, 1.0) == 0.0
    # orthogonal spikes: ||P1 - P2||_F^2 = 2
    assert spiked_kl([1.0, 0.0], [0.0, 1.0], 3.0, 1.0) == pytest.approx((3 - 1) * (1 - 1 / 3) / 2)
    u2 = np.array([np.sqrt(0.5), np.sqrt(0.5)])
    s1 = np.diag([2.0, 1.0])
    s2 = (2.0 - 1.0) * np.outer(u2, u2) + np.eye(2)
    assert spiked_kl([1.0, 0.0], u2, 2.0, 1.0) == pytest.approx(gaussian_kl(s1, s2), abs=1e-10)
    with pytest.raises(InvalidInput):
        spiked_kl([1.0, 0.0], u2, 1.0, 1.0)
    with pytest.raises(InvalidInput):
        spiked_kl([1.0, 0.0], u2, 1.0, 0.0)


def test_spiked_kl_matches_dense_oracle():
    g = np.random.default_rng(99)
    for _ in range(100):
        m = int(g.integers(2, 8))
        u1, u2 = _unit(g, m), _unit(g, m)
        mu = g.uniform(0.1, 2.0)
        lam = mu + g.uniform(0.05, 3.0)
        s1 = (lam - mu) * np.outer(u1, u1) + mu * np.eye(m)
        s2 = (lam - mu) * np.outer(u2, u2) + mu * np.eye(m)
        assert abs(spiked_kl(u1, u2, lam, mu) - gaussian_kl(s1, s2)) <= 1e-10


def test_operator_norm_of_indefinite():
    assert operator_norm(np.diag([1.0, -3.0])) == 3.0


def test_matrix_serialization_roundtrip(rng):
    s = CovarianceMatrix(random_spd(rng, 4))
    assert CovarianceMatrix.from_csv(s.to_csv()) == s
    assert CovarianceMatrix.from_json(s.to_json()) == s
    assert s.to_dict()["dim"] == 4


def test_batch_csv_roundtrip():
    b = sample_gaussian(np.eye(3), 5, seed=2)
    text = b.to_csv()
    assert text.splitlines()[0] == "x1,x2,x3"
    assert SampleBatch.from_csv(text).data.tobytes() == b.data.tobytes()


def test_mix_is_order_sensitive_and_stable():
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert mix(1, 2, 3) != mix(1, 3, 2)
    assert mix(1, 2, 3) == mix(1, 2, 3)
    assert 0 <= mix(2**64 - 1, 5) < 2**64


def test_deviation_concentrates_at_sqrt_n_scale():
    from covfest.diagnostics import empirical_orlicz

    sigma = spiked_covariance(SpikedModel(30, 30, 1.0, 0.1))
    scaled = []
    for n in (200, 800, 3200):
        v = np.array([
            operator_norm(sample_covariance(sample_gaussian(sigma, n, seed=mix(31, n, i))).entries - sigma.entries)
            for i in range(300)
        ])
        scaled.append(empirical_orlicz(v - v.mean(), 1.0) * np.sqrt(n) / sigma.norm)
    assert max(scaled) / min(scaled) <= 3.0
    assert all(1 / 3 <= s <= 3 for s in scaled)
