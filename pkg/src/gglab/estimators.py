"""Estimators that turn samples and exact Gaussian computations into reports.

Two noise sources are kept apart: thermal noise within one disorder
realisation (batch means) and quenched noise across realisations
(jackknife over the ensemble).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.integrate as si
import scipy.sparse.linalg as spla
from scipy.special import ive

from .gibbs import CG_RTOL, BoundarySpec, FiniteVolumeModel
from .green import Domain
from .lattice import LatticeBox, build_box
from .potentials import DisorderLaw, make_potential, sample_disorder
from .rng import splitmix64
from .stats import (MomentAccumulator, batch_means, fit_power_law, fit_power_law_weighted,
                    integrated_autocorr_time, jackknife, linear_fit)

__all__ = [
    "MomentAccumulator", "batch_means", "jackknife", "integrated_autocorr_time", "fit_power_law", "linear_fit",
    "TiltReport", "window_weights", "tilt_estimate", "exact_tilt", "brascamp_lieb_ratio", "PinnedProfile",
    "pinned_variance_profile", "CovarianceDecay", "bond_vector", "model_a_covariance_decay",
    "model_b_quenched_moments", "model_b_first_order_covariance", "model_b_covariance_decay",
    "gradient_mean_disorder_variance", "QuenchedAnnealedReport", "quenched_annealed_decompose",
    "ConvolutionReport", "convolution_bound_check", "diagonal_convolution", "exact_window_decomposition",
    "cone_domain", "infinite_volume_bond_covariance", "fit_power_law_weighted",
]

MIN_ENSEMBLE = 8


# -- tilt -------------------------------------------------------------------------------

@dataclass
class TiltReport:
    value: float
    stderr: float
    axis: int
    window: int
    orientation: str = "x -> x + e_axis (forward bond, target +u_axis)"
    proxy: str = "window average under a fixed tilted boundary"


def window_weights(box: LatticeBox, axis: int, n: int) -> np.ndarray:
    """Site weights ``v`` with ``v . phi = |W|^{-1} sum_{x in W} (phi(x + e) - phi(x))``, ``W = offset + [-n, n]^d``."""
    if not 0 <= axis < box.d:
        raise ValueError("axis out of range")
    if not 0 <= n <= box.N:
        raise ValueError(f"window half-side {n} exceeds the box half-side {box.N}")
    rng = np.arange(-n, n + 1)
    pts = np.stack(np.meshgrid(*[rng] * box.d, indexing="ij"), axis=-1).reshape(-1, box.d) + np.asarray(box.offset)
    e = np.zeros(box.d, dtype=np.int64)
    e[axis] = 1
    v = np.zeros(box.n_sites)
    np.add.at(v, box.index_array(pts + e), 1.0)
    np.add.at(v, box.index_array(pts), -1.0)
    return v / len(pts)


def tilt_estimate(samples, box: LatticeBox, axis: int, n: int, n_batches: int = 16) -> TiltReport:
    """Window-averaged forward gradient along ``axis`` from a sample array.

    ``samples`` has shape ``(n_samples, ..., n_sites)``; the first axis is
    time-ordered and feeds the batch-means error, remaining leading axes
    (independent chains) are averaged.
    """
    v = window_weights(box, axis, n)
    x = np.asarray(samples, dtype=float) @ v
    x = x.reshape(len(x), -1).mean(axis=1)
    if len(x) >= n_batches:
        m, se = batch_means(x, n_batches)
    else:
        m, se = x.mean(), x.std(ddof=1) / math.sqrt(len(x)) if len(x) > 1 else math.nan
    return TiltReport(float(m), float(se), axis, n)


def exact_tilt(model: FiniteVolumeModel, axis: int, n: int) -> float:
    """Window-averaged gradient of the exact Gaussian mean (quadratic models)."""
    return float(window_weights(model.box, axis, n) @ model.gaussian().mean)


# -- Brascamp-Lieb -----------------------------------------------------------------------

def brascamp_lieb_ratio(samples, v, gaussian_variance: float, C1: float, n_batches: int = 16):
    """``var(v . phi) / (var_G(v . phi) / C1)`` with a batch-means standard error.

    ``samples`` has shape ``(n_samples, ..., n_sites)`` with time along the
    first axis; independent chains along further axes are pooled per batch.
    The inequality holds when ``ratio <= 1 + 3 * stderr``.
    """
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        raise ValueError("degenerate functional v = 0")
    if not gaussian_variance > 0:
        raise ValueError("comparison variance must be positive")
    x = np.asarray(samples, dtype=float) @ v
    x = x.reshape(len(x), -1)
    mu = x.mean()
    size = len(x) // n_batches
    if size < 1:
        raise ValueError(f"need at least {n_batches} samples")
    b = ((x[: size * n_batches] - mu) ** 2).reshape(n_batches, -1).mean(axis=1)
    var = float(((x - mu) ** 2).mean()) * x.size / (x.size - 1)
    se = float(b.std(ddof=1) / math.sqrt(n_batches))
    ref = gaussian_variance / C1
    return var / ref, se / ref


# -- pinning -------------------------------------------------------------------------------

@dataclass
class PinnedProfile:
    d: int
    N: int
    distances: np.ndarray
    variances: np.ndarray
    regressor: str
    slope: float
    intercept: float
    r2: float
    cone_variances: np.ndarray
    ratios: np.ndarray

    def ratio_band_ok(self, lo: float = 1 / 3, hi: float = 3.0) -> bool:
        return bool(np.all((self.ratios >= lo) & (self.ratios <= hi)))


def _point_variance(domain: Domain, site) -> float:
    """``Var(phi_site)`` for the zero-boundary Gaussian on ``domain`` (unit conductances)."""
    from .gibbs import _cg_solve

    i = domain.index(np.atleast_2d(site))[0]
    if i < 0:
        raise ValueError("probe outside the domain")
    L = domain.laplacian()
    e = np.zeros(domain.n)
    e[i] = 1.0
    if domain.n < 5000:
        import scipy.linalg as sla

        return float(sla.solve(L.toarray(), e, assume_a="pos")[i])
    return float(_cg_solve(L, e, CG_RTOL)[i])


def cone_domain(a, N: int) -> Domain:
    """``{b : |a - b|_inf <= |b|_inf}`` intersected with ``[-N, N]^d``."""
    a = np.asarray(a, dtype=np.int64)
    d = len(a)
    rng = np.arange(-N, N + 1)
    pts = np.stack(np.meshgrid(*[rng] * d, indexing="ij"), axis=-1).reshape(-1, d)
    keep = np.abs(pts - a).max(axis=1) <= np.abs(pts).max(axis=1)
    return Domain(pts[keep])


def pinned_variance_profile(d: int, N: int, probes, axis: int = 0) -> PinnedProfile:
    """Exact ``Var(phi_a)`` for the unit Gaussian on ``[-N, N]^d`` pinned at the origin.

    ``probes`` are distances ``k`` giving ``a = k e_axis``. The variances
    are regressed on ``k`` (d = 1) or ``log k`` (d >= 2), and compared with
    the variance on the cone ``{b : |a - b|_inf <= |b|_inf}`` cut to the box.
    """
    probes = np.asarray(probes, dtype=int)
    if probes.min() < 1 or probes.max() > N:
        raise ValueError("probes must lie in 1..N")
    box = build_box(d, N)
    model = FiniteVolumeModel(box, make_potential("quadratic", 1.0), None, BoundarySpec(pinned=((0,) * d,)))
    g = model.gaussian()
    sites = []
    for k in probes:
        a = [0] * d
        a[axis] = int(k)
        sites.append(a)
    var = np.array([g.cov(box.index(tuple(a)), box.index(tuple(a))) for a in sites])
    x = probes.astype(float) if d == 1 else np.log(probes)
    slope, icpt, r2 = linear_fit(x, var)
    cone = np.array([_point_variance(cone_domain(a, N), a) for a in sites])
    return PinnedProfile(d, N, probes, var, "|a|" if d == 1 else "log|a|", slope, icpt, r2, cone, var / cone)


# -- annealed covariance decay ---------------------------------------------------------

@dataclass
class CovarianceDecay:
    separations: np.ndarray
    values: np.ndarray
    exponent: float
    prefactor: float
    r2: float
    exponent_without_first: float
    stderr: np.ndarray | None = None
    oracle: np.ndarray | None = None
    oracle_exponent: float | None = None
    meta: dict = field(default_factory=dict)


def bond_vector(model_or_box, tail, axis: int) -> np.ndarray:
    """Site weights of ``eta(b) = phi(tail + e_axis) - phi(tail)``."""
    box = model_or_box.box if hasattr(model_or_box, "box") else model_or_box
    tail = np.asarray(tail, dtype=np.int64)
    e = np.zeros(box.d, dtype=np.int64)
    e[axis] = 1
    q = np.zeros(box.n_sites)
    q[box.index(tuple(tail + e))] += 1.0
    q[box.index(tuple(tail))] -= 1.0
    return q


def _decay(seps, vals, **kw) -> CovarianceDecay:
    seps = np.asarray(seps, dtype=float)
    vals = np.asarray(vals, dtype=float)
    if len(seps) < 3:
        raise ValueError("need at least three separations")
    if np.all(vals == 0):
        raise ValueError("all covariances vanish; for model B use a quadratic observable at zero tilt")
    p, c, r2 = fit_power_law(seps, vals)
    p1, _, _ = fit_power_law(seps[1:], vals[1:])
    return CovarianceDecay(seps, vals, p, c, r2, p1, **kw)


def _bond_pair(d, s, bond_axis=0, sep_axis=1):
    a = [0] * d
    b = [0] * d
    b[sep_axis] = int(s)
    return tuple(a), tuple(b), bond_axis


def model_a_covariance_decay(d: int, N: int, separations, sigma: float = 1.0, bond_axis: int = 0,
                             sep_axis: int = 1) -> CovarianceDecay:
    """Exact annealed covariance of quenched gradient means, quadratic model A.

    With zero boundary the quenched mean of ``eta(b)`` is ``-w_b . xi`` with
    ``w_b = A^{-1} q_b``, so ``Cov = sigma^2 w_b . w_b'``. The bond ``b``
    points along ``bond_axis`` from the origin; ``b'`` is ``b`` moved by
    ``s e_sep_axis``.
    """
    box = build_box(d, N)
    model = FiniteVolumeModel(box, make_potential("quadratic", 1.0))
    g = model.gaussian()
    free = model.free
    w0 = g.solve(bond_vector(box, (0,) * d, bond_axis)[free])
    vals = []
    for s in separations:
        _, tail, _ = _bond_pair(d, s, bond_axis, sep_axis)
        ws = g.solve(bond_vector(box, tail, bond_axis)[free])
        vals.append(sigma**2 * float(w0 @ ws))
    return _decay(separations, vals, meta={"d": d, "N": N, "sigma": sigma, "bond_axis": bond_axis,
                                           "separation_axis": sep_axis})


def infinite_volume_bond_covariance(s: int, d: int = 3) -> float:
    """``w_b . w_b'`` on Z^d for unit bonds along e_1 separated by ``s e_2`` (unit conductances).

    Uses ``q_b^T A^{-2} q_b' = int_0^inf t q_b^T e^{-tA} q_b' dt`` with the
    heat kernel ``prod_i e^{-2t} I_{x_i}(2t)``.
    """
    if d < 3:
        raise ValueError("the whole-lattice covariance is finite only for d >= 3")

    def f(t):
        return t * ive(s, 2 * t) * ive(0, 2 * t) ** (d - 2) * 2 * (ive(0, 2 * t) - ive(1, 2 * t))

    return float(si.quad(f, 0, np.inf, limit=500, epsabs=0, epsrel=1e-10)[0])


def gradient_mean_disorder_variance(d: int, N: int, sigma: float = 1.0, axis: int = 0) -> float:
    """``Var_xi`` of the quenched mean of ``eta`` on the bond from the origin (quadratic model A)."""
    box = build_box(d, N)
    model = FiniteVolumeModel(box, make_potential("quadratic", 1.0))
    g = model.gaussian()
    w = g.solve(bond_vector(box, (0,) * d, axis)[model.free])
    return sigma**2 * float(w @ w)


def _realisation_seed(seed: int, k: int) -> int:
    return int(splitmix64(np.array([(int(seed) * 0x9E3779B97F4A7C15 + int(k)) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))[0])


def model_b_quenched_moments(box: LatticeBox, law: DisorderLaw, seed: int, bonds, n_real: int,
                             linear: bool = False, threads: int = 1):
    """Quenched ``E[eta(b)^2]`` for each bond and each conductance realisation.

    Quadratic model B with zero boundary: ``E[eta(b)^2] = q_b^T A(omega)^{-1} q_b``.
    Realisation ``k`` uses the disorder seed derived from ``(seed, k)``.
    Returns an array of shape ``(n_real, n_bonds)``; with ``linear=True``
    also the first-order responses ``-sum_e (kappa_e - kappa) c_e(b)^2``
    (same shape), used as control variates. Realisations are split across
    ``threads`` workers; the output does not depend on the split.
    """
    model = FiniteVolumeModel(box, make_potential("quadratic", law.kappa))
    free = model.free
    Df = model.D[:, free].tocsr()
    DfT = Df.T.tocsr()
    Q = np.stack([bond_vector(box, t, a)[free] for t, a in bonds], axis=1)
    c2 = (Df @ model.gaussian().solve(Q)) ** 2
    out = np.empty((n_real, Q.shape[1]))
    lin = np.empty_like(out)

    def work(ks):
        for k in ks:
            kap = sample_disorder("B", box, law, _realisation_seed(seed, k)).conductances[model.edge_ids]
            A = (DfT @ sp.diags(kap) @ Df).tocsc()
            X = spla.splu(A).solve(Q)
            out[k] = np.einsum("nr,nr->r", X, Q)
            lin[k] = -(kap - law.kappa) @ c2

    chunks = np.array_split(np.arange(n_real), max(1, threads))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        list(pool.map(work, chunks))
    return (out, lin) if linear else out


def model_b_first_order_covariance(box: LatticeBox, law: DisorderLaw, bonds, ref: int = 0) -> np.ndarray:
    """First-order perturbative ``Cov(Q_ref, Q_j)`` for ``Q_j = E[eta(b_j)^2]``.

    Expanding ``A(omega)^{-1}`` around the mean conductance gives
    ``Q_j ~ Q_j^0 - sum_e (kappa_e - kappa) c_e(b_j)^2`` with
    ``c_e(b) = d_e^T G_0 q_b``, hence
    ``Cov(Q_i, Q_j) ~ Var(kappa_e) sum_e c_e(b_i)^2 c_e(b_j)^2``.
    """
    model = FiniteVolumeModel(box, make_potential("quadratic", law.kappa))
    g = model.gaussian()
    free = model.free
    Df = model.D[:, free]
    c = [Df @ g.solve(bond_vector(box, t, a)[free]) for t, a in bonds]
    return np.array([law.variance * float(np.sum(c[ref] ** 2 * cj**2)) for cj in c])


def _sample_cov(v):
    c = v - v.mean(axis=0)
    return (c[:, :1] * c[:, 1:]).sum(axis=0) / (len(v) - 1)


def model_b_covariance_decay(N: int, delta: float, separations, n_real: int, seed: int = 0, d: int = 2,
                             kappa: float = 1.0, bond_axis: int = 0, sep_axis: int = 1,
                             n_blocks: int = 64, control_variate: bool = True, threads: int = 1) -> CovarianceDecay:
    """Annealed covariance of ``E[eta(b)^2]`` and ``E[eta(b')^2]`` for random conductances.

    Monte Carlo over ``n_real`` realisations with exact quenched values, so
    the only noise is quenched; errors by jackknife over realisations.
    With ``control_variate`` the estimator is
    ``Cov_hat(Q, Q') - Cov_hat(L, L') + Cov(L, L')`` where ``L`` is the
    first-order response, whose covariance is known in closed form; it is
    unbiased for ``Cov(Q, Q')`` at any order. The fitted exponent uses the
    Monte Carlo values; ``oracle`` holds the first-order values.
    """
    if n_real < MIN_ENSEMBLE:
        raise ValueError(f"ensemble must hold at least {MIN_ENSEMBLE} realisations")
    box = build_box(d, N)
    law = DisorderLaw("conductance", delta, kappa)
    bonds = [((0,) * d, bond_axis)] + [(_bond_pair(d, s, bond_axis, sep_axis)[1], bond_axis) for s in separations]
    Qs, Ls = model_b_quenched_moments(box, law, seed, bonds, n_real, linear=True, threads=threads)
    oracle = model_b_first_order_covariance(box, law, bonds)[1:]
    nb = Qs.shape[1]
    if control_variate:
        both = np.concatenate([Qs, Ls], axis=1)
        est, err = jackknife(both, lambda v: _sample_cov(v[:, :nb]) - _sample_cov(v[:, nb:]) + oracle, n_blocks)
    else:
        est, err = jackknife(Qs, _sample_cov, n_blocks)
    rep = _decay(separations, est, stderr=err, oracle=oracle,
                 meta={"d": d, "N": N, "delta": delta, "n_real": n_real, "seed": seed,
                       "control_variate": control_variate, "var_Q": float(Qs[:, 0].var(ddof=1))})
    rep.oracle_exponent = fit_power_law(separations, oracle)[0]
    p, c, pe = fit_power_law_weighted(separations, est, err)
    rep.meta.update(weighted_exponent=p, weighted_exponent_stderr=pe, weighted_prefactor=c)
    return rep


# -- quenched / annealed decomposition -----------------------------------------------

@dataclass
class QuenchedAnnealedReport:
    quenched_means: np.ndarray
    quenched_vars: np.ndarray
    target: float
    mean_quenched_var: float
    var_quenched_mean: float
    squared_bias: float
    total: float
    stderr: dict

    @property
    def terms(self):
        return self.mean_quenched_var, self.var_quenched_mean, self.squared_bias


def quenched_annealed_decompose(quenched_means, quenched_vars, target: float = 0.0) -> QuenchedAnnealedReport:
    """Split ``E[(X - target)^2]`` into mean quenched variance, variance of
    quenched means and squared bias of the annealed mean.

    Disorder averages use the empirical law of the ensemble, so the three
    terms add up to the total exactly; errors come from a jackknife over
    realisations.
    """
    m = np.asarray(quenched_means, dtype=float)
    v = np.asarray(quenched_vars, dtype=float)
    if len(m) < MIN_ENSEMBLE:
        raise ValueError(f"ensemble must hold at least {MIN_ENSEMBLE} realisations")
    if m.shape != v.shape:
        raise ValueError("means and variances must align")
    t1 = float(v.mean())
    t2 = float(((m - m.mean()) ** 2).mean())
    t3 = float((m.mean() - target) ** 2)
    total = float((v + (m - target) ** 2).mean())
    pair = np.stack([m, v], axis=1)
    _, e1 = jackknife(pair, lambda p: p[:, 1].mean())
    _, e2 = jackknife(pair, lambda p: p[:, 0].var())
    _, e3 = jackknife(pair, lambda p: (p[:, 0].mean() - target) ** 2)
    _, et = jackknife(pair, lambda p: (p[:, 1] + (p[:, 0] - target) ** 2).mean())
    return QuenchedAnnealedReport(m, v, target, t1, t2, t3, total,
                                  {"mean_quenched_var": float(e1), "var_quenched_mean": float(e2),
                                   "squared_bias": float(e3), "total": float(et)})


def exact_window_decomposition(d: int, N: int, n: int, law: DisorderLaw, seeds, axis: int = 0,
                               tilt=None) -> QuenchedAnnealedReport:
    """Decomposition for the window-averaged gradient of quadratic model A, from exact Gaussian formulas."""
    box = build_box(d, N)
    bc = BoundarySpec("tilt", tilt=tilt) if tilt is not None else BoundarySpec()
    v = window_weights(box, axis, n)
    means, vars_ = [], []
    for s in seeds:
        model = FiniteVolumeModel(box, make_potential("quadratic", 1.0), sample_disorder("A", box, law, s), bc)
        g = model.gaussian()
        means.append(float(v @ g.mean))
        vars_.append(g.linear_variance(v))
    target = 0.0 if tilt is None else float(tilt[axis])
    return quenched_annealed_decompose(means, vars_, target)


# -- convolution sums ---------------------------------------------------------------------

@dataclass
class ConvolutionReport:
    d: int
    kind: str
    radii: tuple
    separations: np.ndarray
    normalized: dict
    sup: dict
    relative_change: float


def _conv_sum(d, k, R, z_list, chunk=2_000_000):
    r = int(R)
    axes = [np.arange(-r, r + 1, dtype=float)] * d
    out = np.zeros(len(z_list))
    # iterate over the first coordinate to bound memory
    rest = np.stack(np.meshgrid(*axes[1:], indexing="ij"), axis=-1).reshape(-1, d - 1) if d > 1 else np.zeros((1, 0))
    rest_sq = (rest**2).sum(axis=1)
    for y0 in axes[0]:
        sel = rest_sq + y0 * y0 <= R * R
        if not sel.any():
            continue
        pts = np.column_stack([np.full(sel.sum(), y0), rest[sel]])
        nx = np.maximum(np.linalg.norm(pts, axis=1), 1.0) ** (-k)
        for j, z in enumerate(z_list):
            nz = np.maximum(np.linalg.norm(pts - z, axis=1), 1.0) ** (-k)
            out[j] += np.dot(nx, nz)
    return out


def convolution_bound_check(d: int, kind: str = "90", radii=(64, 128), separations=range(1, 17)) -> ConvolutionReport:
    """Truncated sums ``S(0, z) = sum_{|y| <= R} ||y||^{-k} ||z - y||^{-k}`` with ``||.|| = max(|.|, 1)``.

    ``kind="90"``: ``k = d - 1``, normalised by ``|z|^{d-2}`` (d >= 3).
    ``kind="91"``: ``k = d``, normalised by ``|z|^d``.
    Reports the sup over ``z = s e_1`` of the normalised sum for each
    radius and its relative change between the first and last radius.
    """
    if kind == "90":
        if d < 3:
            raise ValueError("the (d-1)-exponent bound needs d >= 3")
        k, p = d - 1, d - 2
    elif kind == "91":
        k, p = d, d
    else:
        raise ValueError("kind must be '90' or '91'")
    seps = np.asarray(list(separations), dtype=float)
    zs = [np.concatenate([[s], np.zeros(d - 1)]) for s in seps]
    normalized, sup = {}, {}
    for R in radii:
        S = _conv_sum(d, k, R, zs)
        normalized[R] = S * seps**p
        sup[R] = float(normalized[R].max())
    lo, hi = sup[radii[0]], sup[radii[-1]]
    return ConvolutionReport(d, kind, tuple(radii), seps, normalized, sup, abs(hi - lo) / abs(lo))


def diagonal_convolution(d: int, R: float) -> float:
    """``sum_{|y| <= R} ||y||^{-2(d-1)}``; bounded in R for d >= 2."""
    return float(_conv_sum(d, d - 1, R, [np.zeros(d)])[0])
