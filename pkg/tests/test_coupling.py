import math

import numpy as np
import pytest
import scipy.linalg as sla

from gglab.coupling import CoupledState, NonDecayError, contraction_rate, coupled_run, default_cadence
from gglab.gibbs import BoundarySpec, FiniteVolumeModel
from gglab.lattice import build_box
from gglab.potentials import DisorderLaw, make_potential, sample_disorder


def quad_model(box, boundary=None):
    return FiniteVolumeModel(box, make_potential("quadratic", 1.0), None, boundary)


def test_difference_evolves_by_the_euler_matrix():
    box = build_box(2, 2)
    m = quad_model(box)
    rng = np.random.default_rng(0)
    phi, phibar = m.gaussian().sample(rng), m.gaussian().sample(rng)
    h, n = 0.02, 50
    s = coupled_run(m, phi, phibar, n * h, h=h, every=n, keep_deltas=True, seed=4)
    M = np.eye(len(m.free)) - h * m.gaussian().A.toarray()
    expected = np.linalg.matrix_power(M, n) @ (phi - phibar)[m.free]
    assert np.allclose(s.deltas[-1], expected, atol=1e-12)


def test_shared_noise_cancels():
    box = build_box(2, 3)
    dis = sample_disorder("A", box, DisorderLaw("gaussian", 1.0), 3)
    m = FiniteVolumeModel(box, make_potential("perturbed", 0.5), dis)
    phi = m.initial_values() + (~m.frozen) * 0.7
    s = coupled_run(m, phi, phi.copy(), 2.0, seed=1)
    assert np.all(s.D_r == 0) and np.all(s.field_distance_sq == 0)
    assert contraction_rate(s) == (math.inf, 0.0)


def test_quadratic_rate_is_twice_the_smallest_eigenvalue():
    box = build_box(2, 4)
    m = quad_model(box, BoundarySpec("tilt", tilt=(0.5, 0.0)))
    lam = sla.eigvalsh(m.gaussian().A.toarray())[0]
    rng = np.random.default_rng(2)
    g = m.gaussian()
    s = coupled_run(m, g.sample(rng), g.sample(rng), 8 / lam, seed=0)
    rate, resid = contraction_rate(s)
    assert rate == pytest.approx(2 * lam, rel=0.02)
    assert resid < 0.1


def test_noise_off_matches_noise_on_for_the_difference():
    box = build_box(1, 5)
    m = quad_model(box)
    rng = np.random.default_rng(8)
    a, b = m.gaussian().sample(rng), m.gaussian().sample(rng)
    s1 = coupled_run(m, a, b, 1.0, h=0.01, seed=1)
    s2 = coupled_run(m, a, b, 1.0, h=0.01, noise=False)
    assert np.allclose(s1.D_r, s2.D_r, rtol=1e-9)


def test_replicas_must_share_frozen_sites():
    box = build_box(1, 3)
    m = quad_model(box)
    a = m.initial_values()
    b = a.copy()
    b[-1] = 1.0
    with pytest.raises(ValueError):
        CoupledState(m, a, b)


def test_growth_is_reported():
    from gglab.coupling import CouplingSeries

    t = np.linspace(0, 1, 10)
    s = CouplingSeries(t, np.exp(t), t, t, t)
    with pytest.raises(NonDecayError):
        contraction_rate(s)


def test_cadence_and_csv(tmp_path):
    from gglab.snapshots import read_table

    box = build_box(2, 3)
    m = quad_model(box)
    h = m.default_step()
    assert default_cadence(m, h) >= 1
    s = coupled_run(m, m.initial_values(), m.initial_values() + (~m.frozen), 1.0)
    s.write_csv(tmp_path / "c.csv", {"r": 0.1})
    meta, cols, rows = read_table(tmp_path / "c.csv")
    assert meta == {"r": "0.1"} and cols[:2] == ["t", "D_r"]
    assert float(rows[-1][0]) == pytest.approx(s.t[-1])
