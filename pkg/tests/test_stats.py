import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gglab.stats import (MomentAccumulator, batch_means, fit_power_law, fit_power_law_weighted,
                         integrated_autocorr_time, jackknife, linear_fit)

samples = arrays(float, st.integers(2, 60), elements=st.floats(-1e3, 1e3))


@given(samples, samples)
def test_merge_equals_single_pass(a, b):
    left, right, whole = MomentAccumulator(), MomentAccumulator(), MomentAccumulator()
    left.extend(a)
    right.extend(b)
    whole.extend(np.concatenate([a, b]))
    merged = left.merge(right)
    assert merged.count == whole.count
    scale = max(1.0, np.abs(np.concatenate([a, b])).max())
    assert merged.mean == pytest.approx(whole.mean, abs=1e-9 * scale)
    assert merged.m2 == pytest.approx(whole.m2, rel=1e-9, abs=1e-9 * scale**2)


@given(samples)
def test_accumulator_matches_numpy(x):
    acc = MomentAccumulator()
    acc.extend(x)
    assert acc.mean == pytest.approx(x.mean(), abs=1e-9 * max(1, np.abs(x).max()))
    assert acc.variance == pytest.approx(x.var(ddof=1), rel=1e-8, abs=1e-6)


def test_vector_accumulator_batches():
    acc = MomentAccumulator(shape=(2,), batch_size=5)
    acc.extend(np.arange(40.0).reshape(20, 2))
    assert len(acc.batches) == 4
    assert np.isfinite(acc.batch_stderr()).all()


def test_batch_means_iid(rng):
    m, se = batch_means(rng.standard_normal(64000), 32)
    assert abs(m) < 4 * se
    assert se == pytest.approx(1 / np.sqrt(64000), rel=0.35)
    with pytest.raises(ValueError):
        batch_means(np.ones(3), 16)


def test_jackknife_mean_reproduces_standard_error(rng):
    x = rng.standard_normal(200)
    est, err = jackknife(x)
    assert est == pytest.approx(x.mean())
    assert err == pytest.approx(x.std(ddof=1) / np.sqrt(200), rel=1e-10)


def test_autocorr_time_of_ar1(rng):
    rho = 0.8
    x = np.zeros(200000)
    z = rng.standard_normal(len(x))
    for i in range(1, len(x)):
        x[i] = rho * x[i - 1] + z[i]
    # (1 + rho) / (1 - rho) = 9
    assert integrated_autocorr_time(x) == pytest.approx(9.0, rel=0.15)
    assert integrated_autocorr_time(np.ones(10)) == 1.0


@given(st.floats(0.1, 4), st.floats(0.01, 100))
def test_power_law_exact(p, c):
    x = np.array([2.0, 3.0, 5.0, 8.0])
    got_p, got_c, r2 = fit_power_law(x, c * x**-p)
    assert got_p == pytest.approx(p) and got_c == pytest.approx(c, rel=1e-8) and r2 == pytest.approx(1.0)


def test_weighted_power_law_handles_signs():
    x = np.arange(2.0, 7.0)
    y = 3e-3 * x**-2.0
    p, c, pe = fit_power_law_weighted(x, y, np.full(5, 1e-6))
    assert p == pytest.approx(2.0, abs=1e-6) and c == pytest.approx(3e-3, rel=1e-5)
    noisy = y + np.array([0, 0, 0, -2e-4, 0])
    p2, _, _ = fit_power_law_weighted(x, noisy, np.full(5, 1e-4))
    assert np.isfinite(p2)


def test_linear_fit():
    b, a, r2 = linear_fit([0, 1, 2], [1, 3, 5])
    assert (b, a, r2) == pytest.approx((2, 1, 1))
