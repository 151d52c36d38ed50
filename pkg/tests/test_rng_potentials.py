import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gglab.lattice import build_box, shift
from gglab.potentials import DisorderLaw, make_potential, parse_potential, sample_disorder
from gglab.rng import coordinate_keys, counter_normal, counter_uniform, splitmix64


def test_splitmix_reference_values():
    # reference outputs of the SplitMix64 generator seeded with 0
    assert int(splitmix64(np.uint64(0))) == 0xE220A8397B1DCDAF
    assert int(splitmix64(np.uint64(0x9E3779B97F4A7C15))) == 0x6E789E6AA1B965F4


def test_counter_streams_are_keyed():
    keys = coordinate_keys(np.array([[0, 0], [1, 0], [0, 1]]))
    assert len(set(keys.tolist())) == 3
    u = counter_uniform(7, 1, keys)
    assert np.all((u > 0) & (u < 1))
    assert np.array_equal(u, counter_uniform(7, 1, keys))
    assert not np.array_equal(u, counter_uniform(8, 1, keys))


def test_counter_normal_moments():
    keys = coordinate_keys(np.arange(200000)[:, None])
    z = counter_normal(3, 1, keys)
    assert abs(z.mean()) < 5 / np.sqrt(len(z))
    assert abs(z.var() - 1) < 0.02


@given(st.integers(0, 2**32), st.lists(st.integers(-4, 4), min_size=2, max_size=2))
def test_disorder_is_translation_covariant(seed, v):
    law = DisorderLaw("gaussian", 1.0)
    box = build_box(2, 3)
    a = sample_disorder("A", box, law, seed)
    b = sample_disorder("A", shift(box, v), law, seed)
    # both boxes see the same environment on common absolute coordinates
    common = {tuple(x): i for i, x in enumerate(box.sites)}
    for j, x in enumerate(b.box.sites):
        i = common.get(tuple(x))
        if i is not None:
            assert a.xi[i] == b.xi[j]


def test_disorder_independent_of_box_size():
    law = DisorderLaw("conductance", 0.2)
    small, big = build_box(2, 2), build_box(2, 5)
    cs = sample_disorder("B", small, law, 1).conductances
    cb = sample_disorder("B", big, law, 1).conductances
    lookup = {}
    t, _, ax = big.edges
    for k in range(big.n_edges):
        lookup[(tuple(big.sites[t[k]]), int(ax[k]))] = cb[k]
    t, _, ax = small.edges
    for k in range(small.n_edges):
        assert cs[k] == lookup[(tuple(small.sites[t[k]]), int(ax[k]))]


def test_conductances_in_support():
    law = DisorderLaw("conductance", 0.2, 2.0)
    c = sample_disorder("B", build_box(2, 6), law, 0).conductances
    assert c.min() >= 1.6 and c.max() <= 2.4
    assert law.variance == pytest.approx((2.0 * 0.2) ** 2 / 3)


def test_law_validation():
    with pytest.raises(ValueError):
        DisorderLaw("conductance", 1.5)
    with pytest.raises(ValueError):
        DisorderLaw("cauchy", 1.0)
    with pytest.raises(ValueError):
        sample_disorder("B", build_box(1, 2), DisorderLaw("gaussian", 1.0), 0)


def test_sign_flip_model_a_only():
    s = sample_disorder("A", build_box(1, 3), DisorderLaw("rademacher", 1.0), 0)
    assert np.array_equal((-s).xi, -s.xi)
    assert set(np.abs(s.xi).tolist()) == {1.0}
    with pytest.raises(TypeError):
        -sample_disorder("B", build_box(1, 3), DisorderLaw("conductance", 0.1), 0)


@pytest.mark.parametrize("spec", ["quadratic:2.0", "perturbed:0.5", "mixture:0.3,0.5,2.0"])
@given(s=st.floats(-5, 5))
def test_derivatives_match_finite_differences(spec, s):
    V = parse_potential(spec, exploratory=True)
    h = 1e-5
    assert V.dV(s) == pytest.approx((V.V(s + h) - V.V(s - h)) / (2 * h), abs=1e-6)
    assert V.d2V(s) == pytest.approx((V.dV(s + h) - V.dV(s - h)) / (2 * h), abs=1e-5)


@given(st.floats(0, 3), st.floats(-20, 20))
def test_perturbed_convexity_bounds(eps, s):
    V = make_potential("perturbed", eps)
    assert V.C1 <= V.d2V(s) <= V.C2 + 1e-12


def test_mixture_needs_exploratory_flag():
    with pytest.raises(ValueError):
        make_potential("mixture", 0.5, 1.0, 2.0)
    V = make_potential("mixture", 0.5, 0.2, 3.0, exploratory=True)
    assert not V.uniformly_convex and V.C1 is None
    # a well-separated mixture is not convex near the origin
    assert V.d2V(np.linspace(-3, 3, 601)).min() < 0


def test_potential_spec_round_trip():
    V = parse_potential("perturbed:0.25")
    assert parse_potential(V.spec()) == V
    with pytest.raises(ValueError):
        parse_potential("quadratic:-1")
