"""Discrete Green functions.

Normalizations
--------------
``visits``
    ``G = (I - P)^{-1}``: expected number of visits of the discrete-time
    simple random walk killed on leaving the domain.
``occupation``
    Expected time spent at ``y`` by the continuous-time walk that crosses
    each bond ``b`` at rate ``a_b``; equal to the inverse of the weighted
    Laplacian.
``precision-inverse``
    ``A^{-1}`` for the Gaussian precision ``A = D^T diag(c) D``.

For homogeneous conductance ``kappa``: ``precision-inverse = occupation =
visits / (2 d kappa)``. All conversions go through :meth:`GreenTable.to`.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.integrate as si
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import ive

from .gibbs import CG_RTOL, DENSE_LIMIT, BoundarySpec, FiniteVolumeModel, SolverError, _cg_solve
from .lattice import LatticeBox
from .potentials import make_potential
from .rng import make_rng
from .stats import fit_power_law

NORMALIZATIONS = ("visits", "occupation", "precision-inverse")


class HorizonError(RuntimeError):
    pass


# -- domains ----------------------------------------------------------------------

class Domain:
    """A finite set of interior sites of Z^d; every other site is absorbing."""

    def __init__(self, sites):
        sites = np.asarray(sites, dtype=np.int64)
        if sites.ndim != 2 or len(sites) == 0:
            raise ValueError("domain needs a non-empty (n, d) array of sites")
        order = np.lexsort(sites.T[::-1])
        self.sites = sites[order]
        self.d = sites.shape[1]
        self._lo = self.sites.min(axis=0) - 1
        self._shape = tuple(self.sites.max(axis=0) - self._lo + 2)
        self._lookup = np.full(int(np.prod(self._shape)), -1, dtype=np.int64)
        self._lookup[self._flat(self.sites)] = np.arange(len(self.sites))
        if len(np.unique(self._flat(self.sites))) != len(self.sites):
            raise ValueError("duplicate sites in domain")

    def _flat(self, coords):
        return np.ravel_multi_index(tuple((np.asarray(coords) - self._lo).T), self._shape)

    @property
    def n(self) -> int:
        return len(self.sites)

    def index(self, coords) -> np.ndarray:
        """Site indices (``-1`` for sites outside the domain)."""
        c = np.atleast_2d(np.asarray(coords, dtype=np.int64))
        inside = np.all((c > self._lo) & (c < self._lo + np.array(self._shape) - 1), axis=1)
        out = np.full(len(c), -1, dtype=np.int64)
        out[inside] = self._lookup[self._flat(c[inside])]
        return out

    def neighbours(self) -> np.ndarray:
        """(n, 2d) neighbour indices in the order +e_0, -e_0, +e_1, ...; -1 outside."""
        out = np.empty((self.n, 2 * self.d), dtype=np.int64)
        for a in range(self.d):
            e = np.zeros(self.d, dtype=np.int64)
            e[a] = 1
            out[:, 2 * a] = self.index(self.sites + e)
            out[:, 2 * a + 1] = self.index(self.sites - e)
        return out

    def laplacian(self) -> sp.csr_matrix:
        """``2d I - adjacency`` on the domain (killed walk)."""
        nb = self.neighbours()
        rows = np.repeat(np.arange(self.n), 2 * self.d)
        cols = nb.ravel()
        keep = cols >= 0
        adj = sp.csr_matrix((np.ones(keep.sum()), (rows[keep], cols[keep])), shape=(self.n, self.n))
        return (2 * self.d * sp.identity(self.n, format="csr") - adj).tocsr()

    @classmethod
    def from_box(cls, box: LatticeBox) -> "Domain":
        return cls(box.interior)

    @classmethod
    def ball(cls, d: int, r: float) -> "Domain":
        """Euclidean ball ``{x : |x| < r}``."""
        k = int(math.ceil(r))
        axes = [np.arange(-k, k + 1)] * d
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        return cls(pts[(pts**2).sum(axis=1) < r * r])

    @classmethod
    def interval(cls, n: int) -> "Domain":
        """Sites ``1..n`` of Z, absorbing at ``0`` and ``n + 1``."""
        return cls(np.arange(1, n + 1)[:, None])


# -- Green tables -------------------------------------------------------------------

@dataclass
class GreenTable:
    """Green function on a domain with an explicit normalization tag.

    ``operator`` is the matrix whose inverse is the table in the stated
    normalization (scaled: ``table = scale * operator^{-1}``). Small
    domains keep a dense inverse, larger ones solve columns on demand.
    """

    domain: Domain
    normalization: str
    operator: sp.csr_matrix = field(repr=False)
    scale: float = 1.0
    kappa: float | None = None
    _dense: np.ndarray | None = field(default=None, repr=False)
    _columns: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self._dense is None and self.domain.n < DENSE_LIMIT:
            try:
                inv = sla.cho_solve(sla.cho_factor(self.operator.toarray(), lower=True), np.eye(self.domain.n))
            except np.linalg.LinAlgError as exc:
                raise SolverError("Green operator is not positive definite") from exc
            self._dense = self.scale * inv

    @property
    def dense(self) -> np.ndarray | None:
        return self._dense

    def column(self, y: int) -> np.ndarray:
        if self._dense is not None:
            return self._dense[:, y]
        if y not in self._columns:
            e = np.zeros(self.domain.n)
            e[y] = 1.0
            self._columns[y] = self.scale * _cg_solve(self.operator.tocsr(), e, CG_RTOL)
        return self._columns[y]

    def __call__(self, x, y) -> float:
        """Entry G(x, y) for site coordinates (zero if either lies outside)."""
        ix, iy = self.domain.index(x)[0], self.domain.index(y)[0]
        if ix < 0 or iy < 0:
            return 0.0
        return float(self.column(iy)[ix])

    def to(self, normalization: str) -> "GreenTable":
        """Same Green function in another normalization (homogeneous conductances only)."""
        if normalization == self.normalization:
            return self
        if normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {normalization!r}")
        if self.kappa is None:
            raise ValueError("normalization change needs homogeneous conductances")
        f = 2 * self.domain.d * self.kappa
        factor = f if normalization == "visits" else 1.0
        factor /= f if self.normalization == "visits" else 1.0
        return GreenTable(self.domain, normalization, self.operator, self.scale * factor, self.kappa,
                          None if self._dense is None else self._dense * factor)

    def residual(self) -> float:
        """``max |(I - P) G - I|`` in visits normalization (dense tables only)."""
        if self._dense is None:
            raise ValueError("residual needs a dense table")
        vis = self.to("visits")._dense
        L = self.domain.laplacian() / (2 * self.domain.d)
        return float(np.abs(L @ vis - np.eye(self.domain.n)).max())

    def rows(self):
        """Iterate ``(x, y, value)`` with x, y as coordinate tuples (dense tables)."""
        if self._dense is None:
            raise ValueError("export needs a dense table")
        s = [tuple(int(v) for v in c) for c in self.domain.sites]
        for i, j in itertools.product(range(self.domain.n), repeat=2):
            yield s[i], s[j], float(self._dense[i, j])


def srw_green_exact(domain, kappa: float = 1.0) -> GreenTable:
    """Killed simple-random-walk Green function ``(I - P)^{-1}`` (visits normalization).

    ``domain`` is a :class:`Domain` or a :class:`~gglab.lattice.LatticeBox`.

    >>> G = srw_green_exact(Domain.interval(2))
    >>> round(G((1,), (1,)), 12), round(G((1,), (2,)), 12)
    (1.333333333333, 0.666666666667)
    """
    if isinstance(domain, LatticeBox):
        domain = Domain.from_box(domain)
    L = domain.laplacian()
    return GreenTable(domain, "visits", L, 2.0 * domain.d, kappa)


def conductance_green(model: FiniteVolumeModel) -> GreenTable:
    """Precision-inverse table of a quadratic model (weighted Laplacian on its free sites)."""
    g = model.gaussian()
    dom = Domain(model.box.sites[model.free])
    # Domain sorts sites lexicographically; model.free is already in site order
    kap = g.conductance
    homog = float(kap[0]) if np.allclose(kap, kap[0]) and not model.boundary.pinned else None
    return GreenTable(dom, "precision-inverse", g.A.tocsr(), 1.0, homog)


def interval_green_closed_form(n: int) -> np.ndarray:
    """``2 min(x, y) (n + 1 - max(x, y)) / (n + 1)`` for ``x, y = 1..n``."""
    x = np.arange(1, n + 1)
    lo, hi = np.minimum.outer(x, x), np.maximum.outer(x, x)
    return 2.0 * lo * (n + 1 - hi) / (n + 1)


# -- infinite lattice -------------------------------------------------------------------

@lru_cache(maxsize=None)
def _bessel_green(key: tuple) -> float:
    d = len(key)

    def f(t):
        return float(np.prod([ive(k, t / d) for k in key]))

    val, _ = si.quad(f, 0.0, np.inf, limit=400, epsabs=1e-13, epsrel=1e-11)
    return val


def lattice_green_bessel(x) -> float:
    """Infinite-lattice Green function G(0, x), visits normalization, d >= 3.

    ``G(0, x) = int_0^inf prod_i e^{-t/d} I_{x_i}(t/d) dt``.
    """
    x = tuple(sorted(abs(int(v)) for v in x))
    if len(x) < 3:
        raise ValueError("the simple random walk is recurrent in d < 3")
    return _bessel_green(x)


def infinite_volume_green(box: LatticeBox, targets) -> np.ndarray:
    """G_{Z^d}(0, x) at ``targets`` recovered from a finite box.

    Uses ``G = G_box + h`` where ``h`` is harmonic in the box with boundary
    values ``G_{Z^d}(0, .)`` on the outer boundary; only the boundary
    values come from :func:`lattice_green_bessel`.
    """
    if box.offset != (0,) * box.d:
        raise ValueError("box must be centred at the origin")
    bsites = box.boundary
    table = {tuple(int(v) for v in c): lattice_green_bessel(c) for c in bsites}
    model = FiniteVolumeModel(box, make_potential("quadratic", 1.0), None, BoundarySpec("custom", table=table))
    g = model.gaussian()
    harmonic = g.mean
    origin = box.index((0,) * box.d)
    col = g.covariance_column(origin) * 2 * box.d
    idx = np.array([box.index(tuple(t)) for t in targets])
    return col[idx] + harmonic[idx]


def box_green_column(box: LatticeBox, y=None) -> np.ndarray:
    """Column ``G_box(., y)`` over all box sites in visits normalization (zero off the interior)."""
    model = FiniteVolumeModel(box, make_potential("quadratic", 1.0))
    y = tuple(box.offset) if y is None else tuple(y)
    return 2 * box.d * model.gaussian().covariance_column(box.index(y))


def green_center_growth(d: int, radii) -> np.ndarray:
    """``G_{B_N}(0, 0)`` (visits) on Euclidean balls ``B_N = {|x| < N}``."""
    out = []
    for r in radii:
        dom = Domain.ball(d, r)
        L = dom.laplacian()
        o = dom.index(np.zeros((1, d), dtype=np.int64))[0]
        e = np.zeros(dom.n)
        e[o] = 1.0
        if dom.n < DENSE_LIMIT:
            col = sla.cho_solve(sla.cho_factor(L.toarray(), lower=True), e)
        else:
            col = _cg_solve(L, e, CG_RTOL)
        out.append(2 * d * col[o])
    return np.array(out)


# -- Helffer-Sjostrand walk ----------------------------------------------------------

@dataclass
class DynamicEnvironment:
    """Piecewise-constant bond rates ``a(t, b)`` on the active edges of a model.

    ``rates[k]`` applies on ``[times[k], times[k+1])``; the last slice is
    frozen beyond ``horizon``.
    """

    model: FiniteVolumeModel
    times: np.ndarray
    rates: np.ndarray
    horizon: float = math.inf
    bounds: tuple | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.rates = np.atleast_2d(np.asarray(self.rates, dtype=float))
        if len(self.times) != len(self.rates):
            raise ValueError("one rate slice per time")
        if self.rates.shape[1] != len(self.model.tail):
            raise ValueError("rates must cover the active edges of the model")
        if self.bounds is not None:
            lo, hi = self.bounds
            if self.rates.min() < lo * (1 - 1e-12) or self.rates.max() > hi * (1 + 1e-12):
                raise ValueError("environment rates leave [C1, C2]")

    @classmethod
    def static(cls, model: FiniteVolumeModel, rates=None) -> "DynamicEnvironment":
        """Time-independent rates; default ``kappa_e V''(0)``."""
        if rates is None:
            rates = model.kappa * model.potential.d2V(np.zeros(len(model.tail)))
        return cls(model, np.zeros(1), np.asarray(rates)[None, :])

    @classmethod
    def from_trajectory(cls, model: FiniteVolumeModel, snapshots, dt: float) -> "DynamicEnvironment":
        """Rates ``kappa_e V''(grad phi_t)`` from height snapshots spaced ``dt`` apart."""
        snaps = np.asarray(snapshots, dtype=float)
        rates = model.kappa * model.potential.d2V(model.gradients(snaps))
        times = dt * np.arange(len(snaps))
        bounds = None
        if model.C1 is not None:
            bounds = (model.C1, model.C2)
        return cls(model, times, rates, horizon=float(times[-1] + dt), bounds=bounds)

    @property
    def rate_max(self) -> float:
        return float(self.rates.max())


def _walk_tables(model: FiniteVolumeModel):
    """Per site and direction: neighbour site and active-edge index (-1 where absent)."""
    box = model.box
    d = box.d
    active_pos = np.full(box.n_edges, -1)
    active_pos[model.edge_ids] = np.arange(len(model.edge_ids))
    nbr = np.full((box.n_sites, 2 * d), -1, dtype=np.int64)
    edge = np.full((box.n_sites, 2 * d), -1, dtype=np.int64)
    tail, head, axis = box.edges
    for k in range(d):
        sel = axis == k
        t, h = tail[sel], head[sel]
        ids = active_pos[np.flatnonzero(sel)]
        nbr[t, 2 * k], edge[t, 2 * k] = h, ids
        nbr[h, 2 * k + 1], edge[h, 2 * k + 1] = t, ids
    return nbr, edge


def hs_walk_green(env: DynamicEnvironment, x, z, walkers: int, seed: int = 0, max_mass: float = 0.01,
                  batch: int = 10000, threads: int = 1):
    """Monte Carlo estimate of the killed-walk occupation Green function ``g(x, z)``.

    Each walker starts at ``x`` at time 0, crosses bond ``b`` at rate
    ``a(t, b)`` and dies on reaching a frozen site; the estimate is the mean
    time spent at ``z``. Jumps are generated by uniformization at total rate
    ``2 d max a`` with acceptance ``a(t, b) / max a``.

    Walkers are simulated in batches of ``batch`` with the stream
    ``(seed, batch index)``, so the result does not depend on ``threads``.
    Returns ``(estimate, stderr)``. Raises :class:`HorizonError` when more
    than ``max_mass`` of the walkers outlive the stored environment.
    """
    model = env.model
    box = model.box
    ix, iz = box.index(x), box.index(z)
    if model.frozen[ix] or model.frozen[iz]:
        return 0.0, 0.0
    nbr, edge = _walk_tables(model)
    frozen = model.frozen
    amax = env.rate_max
    total = 2 * box.d * amax
    starts = list(range(0, walkers, batch))

    def run_batch(k):
        rng = make_rng(seed, 0x45, k)
        w = min(batch, walkers - starts[k])
        pos = np.full(w, ix)
        t = np.zeros(w)
        acc = np.zeros(w)
        alive = np.arange(w)
        crossed = np.zeros(w, dtype=bool)
        while len(alive):
            p = pos[alive]
            dt = rng.exponential(1.0 / total, len(alive))
            acc[alive] += np.where(p == iz, dt, 0.0)
            t[alive] += dt
            direction = rng.integers(0, 2 * box.d, len(alive))
            e = edge[p, direction]
            if len(env.times) == 1:
                a = env.rates[0, e]
            else:
                slot = np.searchsorted(env.times, t[alive], side="right") - 1
                a = env.rates[slot, e]
            jump = rng.random(len(alive)) * amax < a
            newp = np.where(jump, nbr[p, direction], p)
            pos[alive] = newp
            crossed[alive] |= t[alive] > env.horizon
            alive = alive[~frozen[newp]]
        return acc, int(crossed.sum())

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(run_batch, range(len(starts))))
    occ = np.concatenate([r[0] for r in results])
    outlived = sum(r[1] for r in results)
    if math.isfinite(env.horizon) and outlived > max_mass * walkers:
        raise HorizonError(f"{outlived / walkers:.1%} of walkers outlived the environment; store a longer trajectory")
    return float(occ.mean()), float(occ.std(ddof=1) / math.sqrt(walkers))


# -- gradient diagnostics ----------------------------------------------------------------

@dataclass
class GradientDiagnostics:
    radii: np.ndarray
    annulus_sums: np.ndarray
    annulus_exponent: float
    annulus_constant: float
    pointwise_max: np.ndarray
    pointwise_exponent: float
    mixed_max: np.ndarray | None
    mixed_exponent: float | None


def _shells(dist, radii):
    """Masks of ``R <= |x - z| <= 2R``; a point on a shared edge belongs to the lower shell."""
    out, taken = [], np.zeros(len(dist), dtype=bool)
    for R in radii:
        m = (dist >= R) & (dist <= 2 * R) & ~taken
        taken |= m
        out.append(m)
    return out


def _site_gradients(box: LatticeBox, g):
    """Forward differences ``g(x + e_a) - g(x)`` on all box edges, with the edge tails."""
    tail, head, _ = box.edges
    return g[head] - g[tail], tail


def green_gradient_diagnostics(box: LatticeBox, column, z, radii, column_shifted=None,
                               shift_axis: int = 0) -> GradientDiagnostics:
    """Annulus sums and decay fits for ``x -> g(x, z)``.

    ``column`` holds ``g(., z)`` over all box sites (zero on the boundary).
    If ``column_shifted`` holds ``g(., z + e_shift_axis)`` the mixed second
    differences ``grad_x grad_z g`` are analysed as well. Distances are
    Euclidean and measured from the edge tail.
    """
    radii = np.asarray(sorted(radii), dtype=float)
    if len(radii) < 2:
        raise ValueError("need at least two annuli")
    grad, tails = _site_gradients(box, np.asarray(column, float))
    dist = np.linalg.norm(box.sites[tails] - np.asarray(z), axis=1)
    shells = _shells(dist, radii)
    if any(not m.any() for m in shells):
        raise ValueError("an annulus falls outside the box")
    sums = np.array([np.sum(grad[m] ** 2) for m in shells])
    p_ann, c_ann, _ = fit_power_law(radii, sums)
    pmax = np.array([np.abs(grad[m]).max() for m in shells])
    p_pt, _, _ = fit_power_law(radii, pmax)
    mixed_max = p_mix = None
    if column_shifted is not None:
        mixed, _ = _site_gradients(box, np.asarray(column_shifted, float) - np.asarray(column, float))
        mixed_max = np.array([np.abs(mixed[m]).max() for m in shells])
        p_mix, _, _ = fit_power_law(radii, mixed_max)
    # fit_power_law returns decay exponents; the annulus growth power is its negative
    return GradientDiagnostics(radii, sums, -p_ann, c_ann, pmax, p_pt, mixed_max, p_mix)
