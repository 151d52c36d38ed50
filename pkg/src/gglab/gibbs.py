"""Finite-volume Gibbs measures: energy, drift, Langevin dynamics and exact Gaussian sampling.

Conventions
-----------
The Hamiltonian is

    H(phi) = sum_{edges e} kappa_e V(phi(x_e) - phi(y_e)) + sum_{free x} xi(x) phi(x)

where every undirected edge with at least one free endpoint is counted once
(the ordered-pair sum with its factor 1/2) and ``kappa_e = 1`` for model A.
The Langevin drift is ``-grad H``. With this sign the random field enters the
drift as ``-xi``; for the symmetric disorder laws used here ``xi`` and
``-xi`` have the same law, so both sign conventions give the same annealed
statistics.

Frozen sites are the outer boundary plus any pinned interior sites; they are
never updated and do not carry a field term.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lattice import LatticeBox, dirichlet_lambda1, shift
from .potentials import DisorderSample, Potential, make_potential
from .rng import make_rng
from .stats import integrated_autocorr_time

DENSE_LIMIT = 5000
CG_RTOL = 1e-10


class DivergenceError(RuntimeError):
    pass


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class BoundarySpec:
    """Boundary condition psi on the outer boundary and on pinned sites.

    ``kind`` is ``"zero"``, ``"tilt"`` (``psi_u(x) = u . x``) or ``"custom"``
    (``table`` maps site tuples to values; missing sites get 0).
    """

    kind: str = "zero"
    tilt: tuple | None = None
    table: dict | None = None
    pinned: tuple = ()

    def __post_init__(self):
        if self.kind not in ("zero", "tilt", "custom"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.kind == "tilt" and self.tilt is None:
            raise ValueError("tilt boundary needs a tilt vector")
        object.__setattr__(self, "pinned", tuple(tuple(int(v) for v in p) for p in self.pinned))
        if self.tilt is not None:
            object.__setattr__(self, "tilt", tuple(float(v) for v in self.tilt))

    def value_at(self, coords: np.ndarray) -> np.ndarray:
        coords = np.atleast_2d(coords)
        if self.kind == "zero":
            return np.zeros(len(coords))
        if self.kind == "tilt":
            return coords @ np.asarray(self.tilt)
        return np.array([float(self.table.get(tuple(int(v) for v in c), 0.0)) for c in coords])


@dataclass
class HeightField:
    box: LatticeBox
    values: np.ndarray
    frozen: np.ndarray = field(repr=False)

    def at(self, site) -> float:
        return float(self.values[self.box.index(site)])

    def copy(self):
        return HeightField(self.box, self.values.copy(), self.frozen)


@shift.register
def _(obj: HeightField, v):
    return HeightField(shift(obj.box, v), obj.values.copy(), obj.frozen)


class FiniteVolumeModel:
    """Gradient model on a box with fixed potential, disorder and boundary.

    Arrays of heights have shape ``(..., box.n_sites)`` in site order, so
    batches of independent chains are handled by the leading axes.
    """

    def __init__(self, box: LatticeBox, potential: Potential, disorder: DisorderSample | None = None,
                 boundary: BoundarySpec | None = None):
        self.box = box
        self.potential = potential
        self.disorder = disorder
        self.boundary = boundary or BoundarySpec()
        if disorder is not None and disorder.box.n_sites != box.n_sites:
            raise ValueError("disorder and model live on different boxes")
        if disorder is not None and disorder.box.offset != box.offset:
            raise ValueError("disorder box offset does not match the model box")

        n = box.n_sites
        frozen = np.zeros(n, dtype=bool)
        frozen[box.n_interior:] = True
        for p in self.boundary.pinned:
            frozen[box.index(p)] = True
        self.frozen = frozen
        self.free = np.flatnonzero(~frozen)
        self.psi = np.zeros(n)
        self.psi[frozen] = self.boundary.value_at(box.sites[frozen])

        tail, head, _ = box.edges
        active = ~(frozen[tail] & frozen[head])
        self.edge_ids = np.flatnonzero(active)
        self.tail, self.head = tail[active], head[active]
        if disorder is not None and disorder.model == "B":
            self.kappa = disorder.conductances[active]
        else:
            self.kappa = np.ones(len(self.tail))
        self.xi = np.zeros(n)
        if disorder is not None and disorder.model == "A":
            self.xi[~frozen] = disorder.xi[~frozen]
        m = len(self.tail)
        rows = np.concatenate([np.arange(m), np.arange(m)])
        cols = np.concatenate([self.tail, self.head])
        vals = np.concatenate([np.ones(m), -np.ones(m)])
        self.D = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
        self.DT = self.D.T.tocsr()

    def with_field_batch(self, disorders) -> "FiniteVolumeModel":
        """Copy whose model-A field has one row per disorder sample.

        Height arrays of shape ``(len(disorders), n_sites)`` then evolve one
        chain per realisation in a single vectorised step.
        """
        import copy

        if self.model != "A":
            raise ValueError("field batches are a model A feature")
        out = copy.copy(self)
        xi = np.zeros((len(disorders), self.box.n_sites))
        for k, dis in enumerate(disorders):
            if dis.model != "A" or dis.box.offset != self.box.offset or dis.box.N != self.box.N:
                raise ValueError("disorder sample does not match the model box")
            xi[k, ~self.frozen] = dis.xi[~self.frozen]
        out.xi = xi
        return out

    # -- bounds and defaults ---------------------------------------------------
    @property
    def model(self) -> str:
        return "B" if self.disorder is not None and self.disorder.model == "B" else "A"

    @property
    def C1(self) -> float | None:
        return None if self.potential.C1 is None else float(self.kappa.min() * self.potential.C1)

    @property
    def C2(self) -> float:
        return float(self.kappa.max() * self.potential.C2)

    def default_step(self) -> float:
        """Explicit Euler step with a 5x margin below the stiffest-mode limit."""
        return 0.1 / (2 * self.box.d * self.C2)

    def default_burn_in(self) -> float:
        c1 = self.C1 if self.C1 is not None else self.C2
        return 10.0 / (c1 * dirichlet_lambda1(self.box))

    # -- fields -------------------------------------------------------------------
    def initial_values(self, batch=(), fill: str = "boundary") -> np.ndarray:
        """Heights with frozen sites set to psi; free sites 0 or the tilt plane."""
        batch = (batch,) if isinstance(batch, int) else tuple(batch)
        phi = np.zeros(batch + (self.box.n_sites,))
        if fill == "boundary" and self.boundary.kind == "tilt":
            phi[...] = self.box.sites @ np.asarray(self.boundary.tilt)
        phi[..., self.frozen] = self.psi[self.frozen]
        return phi

    def field(self, values) -> HeightField:
        return HeightField(self.box, np.asarray(values, dtype=float), self.frozen)

    def check(self, phi):
        phi = np.asarray(phi, dtype=float)
        if phi.shape[-1] != self.box.n_sites:
            raise ValueError(f"height array has {phi.shape[-1]} sites, box has {self.box.n_sites}")
        return phi

    # -- energy and drift ---------------------------------------------------------
    def gradients(self, phi) -> np.ndarray:
        """phi(tail) - phi(head) on active edges, shape (..., n_active)."""
        phi = self.check(phi)
        flat = phi.reshape(-1, phi.shape[-1])
        return (self.D @ flat.T).T.reshape(phi.shape[:-1] + (len(self.tail),))

    def energy(self, phi):
        phi = self.check(phi)
        s = self.gradients(phi)
        bond = (self.kappa * self.potential.V(s)).sum(axis=-1)
        return bond + np.sum(phi * self.xi, axis=-1)

    def grad_energy(self, phi) -> np.ndarray:
        """dH/dphi at every site (frozen entries are zeroed)."""
        phi = self.check(phi)
        s = self.gradients(phi)
        f = self.kappa * self.potential.dV(s)
        flat = f.reshape(-1, f.shape[-1])
        g = (self.DT @ flat.T).T.reshape(phi.shape) + self.xi
        g[..., self.frozen] = 0.0
        return g

    def drift(self, phi) -> np.ndarray:
        """-dH/dphi on the free sites, shape (..., n_free)."""
        return -self.grad_energy(phi)[..., self.free]

    def langevin_step(self, phi, h: float, rng=None, noise=None, guard: float = 1e8) -> np.ndarray:
        """One Euler-Maruyama step ``phi + h drift + sqrt(2h) g`` on the free sites.

        ``noise`` may supply the standard normals (shape ``(..., n_free)``);
        ``noise=False`` switches the noise off (zero-temperature test hook).
        """
        if not h > 0:
            raise ValueError("step size must be positive")
        phi = self.check(phi)
        out = phi.copy()
        step = h * self.drift(phi)
        if noise is None:
            noise = rng.standard_normal(phi.shape[:-1] + (len(self.free),))
        if noise is not False:
            step = step + np.sqrt(2.0 * h) * noise
        out[..., self.free] += step
        if not np.all(np.abs(out[..., self.free]) <= guard):
            raise DivergenceError(f"Langevin step diverged (|phi| > {guard:g}); reduce the step size")
        return out

    # -- Gaussian case ------------------------------------------------------------
    def gaussian(self, comparison: bool = False) -> "GaussianModel":
        """Exact Gaussian measure for quadratic potentials.

        With ``comparison=True`` the potential is replaced by ``s^2/2`` on
        every bond with ``xi = 0`` (the reference measure of the
        Brascamp-Lieb inequality).
        """
        if comparison:
            ref = FiniteVolumeModel(self.box, make_potential("quadratic", 1.0), None, self.boundary)
            return GaussianModel(ref)
        if not self.potential.is_quadratic:
            raise ValueError("exact Gaussian sampling needs a quadratic potential")
        return GaussianModel(self)


class GaussianModel:
    """Precision matrix A over free sites, mean A^{-1} b and sampling.

    ``A_yy = sum_{x~y} c_xy`` and ``A_xy = -c_xy`` with conductances
    ``c = kappa_e * V''``: the graph Laplacian weighted by conductances, each
    undirected bond once.
    """

    def __init__(self, model: FiniteVolumeModel):
        self.model = model
        c = model.kappa * model.potential.params[0]
        self.conductance = c
        Df = model.D[:, model.free]
        frozen_idx = np.flatnonzero(model.frozen)
        Dc = model.D[:, frozen_idx]
        self.A = (Df.T @ sp.diags(c) @ Df).tocsc()
        self.b = -(Df.T @ (c * (Dc @ model.psi[frozen_idx]))) - model.xi[model.free]
        self.n = len(model.free)
        self._pos = np.full(model.box.n_sites, -1)
        self._pos[model.free] = np.arange(self.n)

    @cached_property
    def _chol(self):
        if self.n >= DENSE_LIMIT:
            return None
        try:
            return sla.cho_factor(self.A.toarray(), lower=True)
        except np.linalg.LinAlgError as exc:
            raise SolverError("precision matrix is not positive definite") from exc

    @cached_property
    def _ldl(self):
        lu = spla.splu(self.A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
        if not np.array_equal(lu.perm_r, lu.perm_c):
            raise SolverError("symmetric factorisation lost its symmetric ordering")
        d = lu.U.diagonal()
        if np.any(d <= 0):
            raise SolverError("precision matrix is not positive definite")
        return lu, d

    def solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if self._chol is not None:
            return sla.cho_solve(self._chol, rhs)
        return _cg_solve(self.A, rhs)

    @cached_property
    def mean_free(self) -> np.ndarray:
        return self.solve(self.b)

    @property
    def mean(self) -> np.ndarray:
        """Mean heights at every site (frozen sites carry psi)."""
        out = self.model.psi.copy()
        out[self.model.free] = self.mean_free
        return out

    def free_position(self, site_index) -> np.ndarray:
        pos = self._pos[np.asarray(site_index)]
        if np.any(pos < 0):
            raise ValueError("site is frozen; its variance is zero")
        return pos

    def cov(self, x, z) -> float:
        """(A^{-1})_{xz} for site indices x, z (zero if either is frozen)."""
        if self.model.frozen[x] or self.model.frozen[z]:
            return 0.0
        e = np.zeros(self.n)
        e[self._pos[z]] = 1.0
        return float(self.solve(e)[self._pos[x]])

    def covariance_column(self, z) -> np.ndarray:
        """Column (A^{-1})_{. z} over all sites (zeros on frozen sites)."""
        out = np.zeros(self.model.box.n_sites)
        if self.model.frozen[z]:
            return out
        e = np.zeros(self.n)
        e[self._pos[z]] = 1.0
        out[self.model.free] = self.solve(e)
        return out

    def linear_variance(self, v) -> float:
        """Variance of ``v . phi`` for a weight vector over all sites."""
        vf = np.asarray(v, dtype=float)[self.model.free]
        return float(vf @ self.solve(vf))

    def dense_covariance(self) -> np.ndarray:
        if self.n >= DENSE_LIMIT:
            raise MemoryError("dense covariance requested for a large box")
        return sla.cho_solve(self._chol, np.eye(self.n))

    def sample(self, rng, size=()) -> np.ndarray:
        """Exact samples ``m + A^{-1/2} g`` as full height arrays."""
        size = (size,) if isinstance(size, int) else tuple(size)
        g = rng.standard_normal(size + (self.n,))
        flat = g.reshape(-1, self.n).T
        if self._chol is not None:
            L = np.tril(self._chol[0])
            x = sla.solve_triangular(L, flat, lower=True, trans="T")
        else:
            lu, d = self._ldl
            Lt = lu.L.T.tocsr()
            y = spla.spsolve_triangular(Lt, flat / np.sqrt(d)[:, None], lower=False, unit_diagonal=True)
            x = y[lu.perm_c]
        x = x.T.reshape(size + (self.n,))
        out = np.broadcast_to(self.model.psi, size + (self.model.box.n_sites,)).copy()
        out[..., self.model.free] = self.mean_free + x
        return out


def _cg_solve(A, rhs, rtol=CG_RTOL):
    M = sp.diags(1.0 / A.diagonal())
    if rhs.ndim == 1:
        x, info = spla.cg(A, rhs, rtol=rtol, atol=0.0, maxiter=20 * A.shape[0], M=M)
        if info != 0:
            raise SolverError(f"conjugate gradient did not converge (info={info})")
        return x
    return np.stack([_cg_solve(A, rhs[:, j], rtol) for j in range(rhs.shape[1])], axis=1)


# -- functional wrappers ---------------------------------------------------------

def _model_for(phi: HeightField, potential, disorder, boundary):
    return FiniteVolumeModel(phi.box, potential, disorder, boundary)


def energy(phi: HeightField, potential: Potential, disorder=None, boundary=None) -> float:
    return float(_model_for(phi, potential, disorder, boundary).energy(phi.values))


def drift(phi: HeightField, potential: Potential, disorder=None, boundary=None) -> np.ndarray:
    return _model_for(phi, potential, disorder, boundary).drift(phi.values)


def sample_gaussian_exact(box, conductances=None, disorder=None, boundary=None, rng=None, kappa: float = 1.0):
    """Exact sample of the quadratic model.

    Returns ``(HeightField, mean, GaussianModel)``; the model answers
    covariance queries.
    """
    from .potentials import DisorderLaw

    if conductances is not None:
        disorder = DisorderSample("B", box, DisorderLaw("conductance", 0.0), 0, np.asarray(conductances, float))
    model = FiniteVolumeModel(box, make_potential("quadratic", kappa), disorder, boundary)
    g = model.gaussian()
    rng = rng if rng is not None else make_rng(0)
    return model.field(g.sample(rng)), g.mean, g


@dataclass
class SamplerConfig:
    """Langevin run parameters. ``h`` and ``burn_in`` default to the model's
    stability-based choices when left as ``None``; ``thin`` is in steps."""

    h: float | None = None
    burn_in: float | None = None
    thin: int = 10
    n_samples: int = 1000
    chains: int = 1
    seed: int = 0
    noise: bool = True
    init: np.ndarray | None = None


class LangevinSampler:
    """Burn-in then thinned sampling of a batch of independent chains."""

    def __init__(self, model: FiniteVolumeModel, config: SamplerConfig):
        self.model = model
        self.config = config
        self.h = config.h if config.h is not None else model.default_step()
        self.burn_in = config.burn_in if config.burn_in is not None else model.default_burn_in()
        self.energy_trace: list = []
        self.steps = 0

    def run(self):
        cfg, m = self.config, self.model
        rng = make_rng(cfg.seed, 0x1A)
        phi = m.initial_values(cfg.chains) if cfg.init is None else np.array(cfg.init, dtype=float)
        noise = None if cfg.noise else False
        for _ in range(int(np.ceil(self.burn_in / self.h))):
            phi = m.langevin_step(phi, self.h, rng, noise=noise)
            self.steps += 1
        for _ in range(cfg.n_samples):
            for _ in range(cfg.thin):
                phi = m.langevin_step(phi, self.h, rng, noise=noise)
                self.steps += 1
            self.energy_trace.append(np.atleast_1d(m.energy(phi)).mean())
            yield phi

    def autocorrelation_time(self) -> float:
        return integrated_autocorr_time(np.asarray(self.energy_trace))


def equilibrate_and_sample(model: FiniteVolumeModel, config: SamplerConfig):
    """Stream of post-burn-in samples, each of shape ``(chains, n_sites)``."""
    return LangevinSampler(model, config).run()
