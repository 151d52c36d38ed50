import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gglab.gradient import (GradientField, LinearBondFunctional, PlaquetteError, cesaro_average, check_plaquettes,
                            gradient_of, plaquette_sums, reconstruct, spatial_average_observable, tilt_gradient,
                            weighted_distance)
from gglab.lattice import Bond, build_box, plaquettes

boxes = st.builds(build_box, st.integers(1, 3), st.integers(1, 3))
heights = st.floats(-1e3, 1e3, allow_nan=False)


@given(st.data())
def test_reconstruct_inverts_gradient(data):
    box = data.draw(boxes)
    phi = data.draw(arrays(float, box.n_sites, elements=heights))
    centre = box.index(box.offset)
    eta = gradient_of(phi, box)
    back = reconstruct(eta, phi0=phi[centre])
    assert np.allclose(back, phi, atol=1e-9 * max(1.0, np.abs(phi).max()))


@given(st.data())
def test_gradients_of_heights_close_every_plaquette(data):
    box = data.draw(st.builds(build_box, st.integers(2, 3), st.integers(1, 2)))
    phi = data.draw(arrays(float, box.n_sites, elements=heights))
    sums = plaquette_sums(gradient_of(phi, box))
    assert np.all(np.abs(sums) <= 1e-9 * max(1.0, np.abs(phi).max()))


def test_plaquette_sign_convention_matches_bond_cycle():
    box = build_box(2, 1)
    phi = np.random.default_rng(0).standard_normal(box.n_sites)
    eta = gradient_of(phi, box)
    for p in plaquettes(box):
        assert sum(eta(b) for b in p.bonds) == pytest.approx(0.0, abs=1e-12)


def test_curl_is_detected():
    box = build_box(2, 2)
    vals = np.zeros(box.n_edges)
    ids, _ = box.plaquette_edges
    vals[ids[3, 0]] = 1.0
    with pytest.raises(PlaquetteError) as err:
        check_plaquettes(GradientField(box, vals))
    assert abs(err.value.worst_value) == 1.0


def test_tilt_field_reconstructs_plane():
    box = build_box(3, 2)
    u = np.array([1.0, -0.5, 2.0])
    phi = reconstruct(tilt_gradient(box, u))
    assert np.allclose(phi, box.sites @ u)


def test_bond_orientation():
    box = build_box(2, 2)
    phi = box.sites[:, 0].astype(float) ** 2
    eta = gradient_of(phi, box)
    assert eta(Bond((0, 0), (1, 0))) == 1.0
    assert eta(Bond((1, 0), (0, 0))) == -1.0
    assert eta(Bond((-1, 0), (0, 0))) == -1.0


def test_weighted_distance_unit_bump():
    # one unit bump at the origin changes the 2d bonds at the origin both ways
    box = build_box(2, 3)
    phi = np.zeros(box.n_sites)
    phi[box.index((0, 0))] = 1.0
    D = weighted_distance(gradient_of(phi, box), gradient_of(np.zeros(box.n_sites), box), r=0.5)
    assert D == pytest.approx(4 * (1 + np.exp(-1.0)))


def test_weighted_distance_rejects_bad_inputs():
    a, b = build_box(2, 2), build_box(2, 3)
    with pytest.raises(ValueError):
        weighted_distance(tilt_gradient(a, [0, 0]), tilt_gradient(b, [0, 0]), 0.1)
    with pytest.raises(ValueError):
        weighted_distance(tilt_gradient(a, [0, 0]), tilt_gradient(a, [0, 0]), 0.0)


def test_spatial_average_combines_errors():
    box = build_box(1, 2)
    F = LinearBondFunctional((Bond((0,), (1,)),), (1.0,))
    est, err = spatial_average_observable(F, box, [(0,), (1,), (2,)], lambda b, s: (float(s[0]), 0.3), threads=2)
    assert est == pytest.approx(1.0)
    assert err == pytest.approx(np.sqrt(3 * 0.09) / 3)


def test_cesaro_average():
    assert np.allclose(cesaro_average([1.0, 3.0, 5.0]), [1.0, 2.0, 3.0])
