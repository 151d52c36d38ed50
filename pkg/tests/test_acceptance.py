"""Acceptance criteria 1-14 at their stated tolerances.

Each criterion runs its experiment preset (cached per session) and prints one
PASS/FAIL line in the terminal summary. Criterion 14 runs the property
checks inline.
"""
import time

import numpy as np
import pytest

from gglab import experiments as ex
from gglab.coupling import coupled_run
from gglab.estimators import model_b_quenched_moments
from gglab.gibbs import BoundarySpec, FiniteVolumeModel
from gglab.gradient import check_plaquettes, gradient_of, reconstruct
from gglab.green import Domain, DynamicEnvironment, hs_walk_green, srw_green_exact
from gglab.lattice import build_box
from gglab.potentials import DisorderLaw, make_potential, sample_disorder
from gglab.stats import MomentAccumulator

from .conftest import ACCEPTANCE_LINES

CRITERIA = {
    1: ("green-asymptotics", "1D Green closed form to 1e-10, n <= 64"),
    2: ("green-asymptotics", "d=3 |x| G(0,x) within 10% of 3/(2 pi), 8 <= |x| <= 12, N=24"),
    3: ("delocalize-2d", "d=2 centre Green increments match (2/pi) ln 2 within 10%"),
    4: ("hs-identity", "walk occupation times match A^-1 within 3 stderr, 1e5 walkers"),
    5: ("brascamp-lieb", "Langevin probe variances within 3 stderr, h-halving shift < 1 stderr"),
    6: ("brascamp-lieb", "Brascamp-Lieb ratio <= 1 + 3 stderr, perturbed eps=0.5"),
    7: ("coupling-contraction", "D_r rate within 5% of 2 lambda_1(A); perturbed rate >= 1.8 C1 lambda_1"),
    8: ("tilt", "exact quadratic tilt to 1e-10; disordered window tilt within 3 stderr of u"),
    9: ("cov-decay-A", "exact annealed covariance exponent 1 +- 0.3, d=3 N=24"),
    10: ("cov-decay-B", "model B exponent >= 1.5 and MC within 3 stderr of first-order oracle"),
    11: ("nonexist-2d", "d=2 variance grows with ln N; d=3 successive differences < 2%"),
    12: ("pinning", "pinned profiles R^2 >= 0.99 (d=1), 0.95 (d=2); cone ratio in [1/3, 3]"),
    13: ("convolution-appendix", "normalised sups change < 5% when R doubles 64 -> 128"),
}

_RUNS = {}


def _result(name, tmp_path_factory):
    if name not in _RUNS:
        out = tmp_path_factory.mktemp(name)
        _RUNS[name] = ex.run(name, ex.preset(name), out)
    return _RUNS[name]


def _mine(check, k):
    return check.gating and (check.id == str(k) or check.id.startswith((f"{k}-", f"{k}:")))


def _report(k, ok, detail, seconds=None):
    t = "" if seconds is None else f" [{seconds:.1f}s]"
    ACCEPTANCE_LINES.append(f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}{t}")


@pytest.mark.slow
@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(k, tmp_path_factory):
    name, text = CRITERIA[k]
    res = _result(name, tmp_path_factory)
    checks = [c for c in res.checks if _mine(c, k)]
    assert checks, f"experiment {name} recorded no checks for criterion {k}"
    failed = [c for c in checks if not c.passed]
    worst = failed[0] if failed else checks[0]
    _report(k, not failed, f"{text}; {worst.id}: measured={ex._num(worst.measured)} target={ex._num(worst.target)}",
            res.manifest["wall_clock_s"])
    assert not failed, "\n".join(c.line() for c in failed)


def _property_checks():
    rng = np.random.default_rng(14)
    out = {}
    # plaquette / reconstruction round trip
    box = build_box(3, 3)
    phi = rng.standard_normal(box.n_sites) * 10
    eta = gradient_of(phi, box)
    check_plaquettes(eta)
    out["reconstruction"] = np.abs(reconstruct(eta, phi[box.index((0, 0, 0))]) - phi).max() < 1e-9
    # drift-energy finite differences
    b2 = build_box(2, 3)
    m = FiniteVolumeModel(b2, make_potential("perturbed", 0.5), sample_disorder("A", b2, DisorderLaw("gaussian", 1.0), 1),
                          BoundarySpec("tilt", tilt=(0.4, -0.1)))
    x = m.initial_values() + rng.standard_normal(b2.n_sites) * (~m.frozen)
    E = np.eye(b2.n_sites)[m.free] * 1e-6
    fd = -np.array([(m.energy(x + e) - m.energy(x - e)) / 2e-6 for e in E])
    out["drift-energy"] = np.abs(fd - m.drift(x)).max() < 1e-6
    # Green symmetry and domain monotonicity
    Gs, Gb = srw_green_exact(Domain.ball(2, 5)), srw_green_exact(Domain.ball(2, 7))
    sym = np.abs(Gb.dense - Gb.dense.T).max() < 1e-12
    mono = all(Gs(a, b) <= Gb(a, b) + 1e-12 for a in Gs.domain.sites[::7] for b in Gs.domain.sites[::5])
    out["green"] = sym and mono
    # accumulator merge exactness
    data = rng.standard_normal((1000, 3))
    parts = [MomentAccumulator((3,)) for _ in range(4)]
    for p, chunk in zip(parts, np.array_split(data, 4)):
        p.extend(chunk)
    merged = parts[0].merge(parts[1]).merge(parts[2].merge(parts[3]))
    out["merge"] = np.allclose(merged.mean, data.mean(0), rtol=0, atol=1e-14) and np.allclose(
        merged.variance, data.var(0, ddof=1), rtol=1e-12)
    # determinism under thread-count variation
    env = DynamicEnvironment.static(FiniteVolumeModel(b2, make_potential("quadratic", 1.0)))
    w1 = hs_walk_green(env, (0, 0), (1, 1), 8000, seed=5, batch=1000, threads=1)
    w4 = hs_walk_green(env, (0, 0), (1, 1), 8000, seed=5, batch=1000, threads=4)
    law = DisorderLaw("conductance", 0.2)
    q1 = model_b_quenched_moments(b2, law, 2, [((0, 0), 0)], 12, threads=1)
    q4 = model_b_quenched_moments(b2, law, 2, [((0, 0), 0)], 12, threads=4)
    s1 = coupled_run(m, x, m.initial_values(), 1.0, seed=3)
    s2 = coupled_run(m, x, m.initial_values(), 1.0, seed=3)
    out["threads"] = w1 == w4 and np.array_equal(q1, q4) and np.array_equal(s1.D_r, s2.D_r)
    return out


def test_criterion_14_property_suites():
    t0 = time.perf_counter()
    res = _property_checks()
    bad = [k for k, v in res.items() if not v]
    _report(14, not bad, "property suites: " + ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in res.items()),
            time.perf_counter() - t0)
    assert not bad
