import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gglab.estimators import (MIN_ENSEMBLE, bond_vector, brascamp_lieb_ratio, cone_domain, convolution_bound_check,
                              diagonal_convolution, exact_tilt, exact_window_decomposition,
                              gradient_mean_disorder_variance, infinite_volume_bond_covariance,
                              model_a_covariance_decay, model_b_covariance_decay, model_b_first_order_covariance,
                              model_b_quenched_moments, pinned_variance_profile, quenched_annealed_decompose,
                              tilt_estimate, window_weights)
from gglab.estimators import _point_variance
from gglab.gibbs import BoundarySpec, FiniteVolumeModel
from gglab.lattice import build_box
from gglab.potentials import DisorderLaw, make_potential


@given(st.lists(st.floats(-2, 2), min_size=2, max_size=2), st.integers(0, 1), st.integers(0, 3))
def test_exact_tilt_recovers_u(u, axis, n):
    box = build_box(2, 4)
    m = FiniteVolumeModel(box, make_potential("quadratic", 1.0), None, BoundarySpec("tilt", tilt=tuple(u)))
    assert exact_tilt(m, axis, n) == pytest.approx(u[axis], abs=1e-10)


def test_window_weights_sum_to_zero_and_reject_large_windows():
    box = build_box(3, 3)
    v = window_weights(box, 2, 3)
    assert abs(v.sum()) < 1e-12
    with pytest.raises(ValueError):
        window_weights(box, 0, 4)


def test_tilt_estimate_on_exact_samples(rng):
    box = build_box(2, 4)
    m = FiniteVolumeModel(box, make_potential("quadratic", 1.0), None, BoundarySpec("tilt", tilt=(0.7, 0.0)))
    x = m.gaussian().sample(rng, (320, 4))
    rep = tilt_estimate(x, box, 0, 2)
    assert abs(rep.value - 0.7) < 4 * rep.stderr
    assert "forward" in rep.orientation


def test_brascamp_lieb_ratio_is_one_for_the_reference_measure(rng):
    box = build_box(2, 3)
    g = FiniteVolumeModel(box, make_potential("quadratic", 1.0)).gaussian()
    v = np.zeros(box.n_sites)
    v[box.index((0, 0))], v[box.index((1, 1))] = 1.0, -1.0
    ratio, se = brascamp_lieb_ratio(g.sample(rng, 32000), v, g.linear_variance(v), 1.0)
    assert abs(ratio - 1) < 4 * se
    with pytest.raises(ValueError):
        brascamp_lieb_ratio(g.sample(rng, 32), np.zeros(box.n_sites), 1.0, 1.0)


@pytest.mark.parametrize("N", [6, 10])
def test_pinned_variance_d1_closed_form(N):
    prof = pinned_variance_profile(1, N, range(1, N + 1))
    a = np.arange(1, N + 1)
    assert np.allclose(prof.variances, a * (N + 1 - a) / (N + 1))


def test_cone_variance_d1_closed_form():
    # the cone of a = 4 is {b >= 2}, killed at 1 and N + 1
    N = 10
    assert _point_variance(cone_domain((4,), N), (4,)) == pytest.approx(3 * (N + 1 - 4) / N)
    assert cone_domain((4,), N).sites.min() == 2


def test_pinned_profile_d2_logarithmic():
    prof = pinned_variance_profile(2, 16, range(2, 5))
    assert prof.regressor == "log|a|" and prof.slope > 0
    assert prof.ratio_band_ok()


def test_model_a_covariance_against_dense_inverse():
    d, N = 3, 3
    box = build_box(d, N)
    m = FiniteVolumeModel(box, make_potential("quadratic", 1.0))
    Ainv = np.linalg.inv(m.gaussian().A.toarray())
    q0 = bond_vector(box, (0, 0, 0), 0)[m.free]
    vals = []
    for s in (1, 2, 3):
        qs = bond_vector(box, (0, s, 0), 0)[m.free]
        vals.append(4.0 * (Ainv @ q0) @ (Ainv @ qs))
    rep = model_a_covariance_decay(d, N, [1, 2, 3], sigma=2.0)
    assert np.allclose(rep.values, vals)


def test_whole_lattice_bond_covariance_is_the_box_limit():
    b12 = model_a_covariance_decay(3, 12, [1, 2, 4]).values
    b24 = model_a_covariance_decay(3, 24, [1, 2, 4]).values
    inf = np.array([infinite_volume_bond_covariance(s) for s in (1, 2, 4)])
    assert np.all(b12 < b24) and np.all(b24 < inf)
    # boundary corrections scale like 1/N in d=3: Richardson extrapolation lands close to the limit
    assert np.allclose(2 * b24 - b12, inf, rtol=0.03)
    with pytest.raises(ValueError):
        infinite_volume_bond_covariance(1, d=2)


def test_disorder_variance_grows_in_d2_and_saturates_in_d3():
    v2 = [gradient_mean_disorder_variance(2, N) for N in (4, 8, 16)]
    v3 = [gradient_mean_disorder_variance(3, N) for N in (4, 8)]
    assert np.all(np.diff(v2) > 0.03)
    assert 0 < v3[1] - v3[0] < 0.01
    assert v3[1] < infinite_volume_bond_covariance(0)


def test_first_order_response_matches_exact_change():
    box = build_box(2, 4)
    law = DisorderLaw("conductance", 1e-3)
    bonds = [((0, 0), 0), ((0, 2), 0)]
    Q, L = model_b_quenched_moments(box, law, 3, bonds, 4, linear=True)
    Q0 = model_b_quenched_moments(box, DisorderLaw("conductance", 0.0), 3, bonds, 1)[0]
    assert np.allclose(Q - Q0, L, rtol=5e-3, atol=1e-12)


def test_model_b_threads_do_not_change_results():
    box = build_box(2, 3)
    law = DisorderLaw("conductance", 0.2)
    bonds = [((0, 0), 0), ((0, 1), 0)]
    a = model_b_quenched_moments(box, law, 1, bonds, 10)
    b = model_b_quenched_moments(box, law, 1, bonds, 10, threads=3)
    assert np.array_equal(a, b)


def test_first_order_covariance_variance_scaling():
    box = build_box(2, 3)
    bonds = [((0, 0), 0), ((0, 2), 0)]
    c1 = model_b_first_order_covariance(box, DisorderLaw("conductance", 0.1), bonds)
    c2 = model_b_first_order_covariance(box, DisorderLaw("conductance", 0.2), bonds)
    assert np.allclose(c2, 4 * c1) and np.all(c1 > 0)


def test_model_b_decay_small_ensemble():
    rep = model_b_covariance_decay(6, 0.2, [2, 3, 4], 64, seed=0)
    assert rep.stderr.shape == (3,)
    assert np.all(np.abs(rep.values - rep.oracle) < 5 * rep.stderr)
    with pytest.raises(ValueError):
        model_b_covariance_decay(6, 0.2, [2, 3, 4], MIN_ENSEMBLE - 1)


@given(st.lists(st.floats(-5, 5), min_size=8, max_size=30), st.floats(-2, 2))
def test_decomposition_adds_up(means, target):
    m = np.array(means)
    v = np.abs(m) + 0.1
    rep = quenched_annealed_decompose(m, v, target)
    assert sum(rep.terms) == pytest.approx(rep.total, rel=1e-10, abs=1e-10)


def test_exact_window_decomposition_quadratic():
    rep = exact_window_decomposition(2, 4, 1, DisorderLaw("gaussian", 1.0), range(8), tilt=(0.5, 0.0))
    assert rep.var_quenched_mean > 0 and rep.mean_quenched_var > 0
    # the quenched variance does not depend on the field in the quadratic model
    assert np.ptp(rep.quenched_vars) < 1e-12


def brute_convolution(d, k, R, z):
    r = int(R)
    total = 0.0
    for y in itertools.product(range(-r, r + 1), repeat=d):
        y = np.array(y, float)
        if y @ y <= R * R:
            total += max(np.linalg.norm(y), 1) ** -k * max(np.linalg.norm(z - y), 1) ** -k
    return total


@pytest.mark.parametrize("d,kind", [(1, "91"), (2, "91"), (3, "90")])
def test_convolution_sums_against_brute_force(d, kind):
    rep = convolution_bound_check(d, kind, radii=(6,), separations=[1, 2, 3])
    k, p = (d - 1, d - 2) if kind == "90" else (d, d)
    for j, s in enumerate([1, 2, 3]):
        z = np.zeros(d)
        z[0] = s
        assert rep.normalized[6][j] == pytest.approx(brute_convolution(d, k, 6, z) * s**p, rel=1e-12)


def test_convolution_argument_checks():
    with pytest.raises(ValueError):
        convolution_bound_check(2, "90")
    with pytest.raises(ValueError):
        convolution_bound_check(2, "92")


def test_diagonal_convolution_small_radius():
    # k = d - 1 on both factors gives sum ||y||^{-2(d-1)}
    assert diagonal_convolution(2, 3) == pytest.approx(brute_convolution(2, 1, 3, np.zeros(2)), rel=1e-12)
    assert diagonal_convolution(3, 4) == pytest.approx(brute_convolution(3, 2, 4, np.zeros(3)), rel=1e-12)
