"""Two replicas driven by the same Brownian increments and the same disorder.

Both replicas share the frozen sites, so the difference field obeys a
noiseless equation: for quadratic potentials ``delta_{n+1} = (I - h A) delta_n``
exactly, and for uniformly convex potentials the plain distance contracts at
least at rate ``C1 * lambda1`` per unit time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gibbs import FiniteVolumeModel
from .gradient import _directed_weights
from .lattice import dirichlet_lambda1
from .rng import make_rng

EPS_FLOOR = 1e2 * np.finfo(float).eps


class NonDecayError(RuntimeError):
    pass


@dataclass
class CoupledState:
    model: FiniteVolumeModel
    phi: np.ndarray
    phibar: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        fr = self.model.frozen
        if not np.array_equal(self.phi[..., fr], self.phibar[..., fr]):
            raise ValueError("replicas must agree on frozen sites")


@dataclass
class CouplingSeries:
    t: np.ndarray
    D_r: np.ndarray
    field_distance_sq: np.ndarray
    energy_1: np.ndarray
    energy_2: np.ndarray
    deltas: list | None = None

    def write_csv(self, path, meta=None):
        from .snapshots import write_table

        write_table(path, ["t", "D_r", "field_distance_sq", "energy_1", "energy_2"],
                    zip(self.t, self.D_r, self.field_distance_sq, self.energy_1, self.energy_2), meta or {})


def default_cadence(model: FiniteVolumeModel, h: float) -> int:
    c1 = model.C1 if model.C1 is not None else model.C2
    return max(1, math.ceil(0.1 / (h * c1 * dirichlet_lambda1(model.box))))


def coupled_run(model: FiniteVolumeModel, phi0, phibar0, T: float, h: float | None = None, r: float = 0.1,
                seed: int = 0, every: int | None = None, noise: bool = True, keep_deltas: bool = False,
                guard: float = 1e8) -> CouplingSeries:
    """Evolve two replicas with identical Gaussian increments up to time ``T``.

    Records the weighted gradient distance ``D_r`` (over directed bonds), the
    squared height distance and both energies every ``every`` steps.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    h = model.default_step() if h is None else h
    every = default_cadence(model, h) if every is None else every
    state = CoupledState(model, np.array(phi0, dtype=float), np.array(phibar0, dtype=float))
    rng = make_rng(seed, 0xC0)
    n_steps = int(round(T / h))
    w = _directed_weights(model.box, r)
    e_dir, _ = model.box.directed_bonds
    tail, head, _ = model.box.edges

    rec = {k: [] for k in ("t", "D", "F", "E1", "E2")}
    deltas = [] if keep_deltas else None

    def record(n):
        diff = state.phi - state.phibar
        g = diff[..., head] - diff[..., tail]
        rec["t"].append(n * h)
        rec["D"].append(float((w * g[..., e_dir] ** 2).sum()))
        rec["F"].append(float((diff**2).sum()))
        rec["E1"].append(float(np.sum(model.energy(state.phi))))
        rec["E2"].append(float(np.sum(model.energy(state.phibar))))
        if deltas is not None:
            deltas.append(diff[..., model.free].copy())

    record(0)
    for n in range(1, n_steps + 1):
        g = rng.standard_normal(state.phi.shape[:-1] + (len(model.free),)) if noise else False
        state.phi = model.langevin_step(state.phi, h, noise=g, guard=guard)
        state.phibar = model.langevin_step(state.phibar, h, noise=g, guard=guard)
        state.t = n * h
        if n % every == 0 or n == n_steps:
            record(n)
    return CouplingSeries(np.array(rec["t"]), np.array(rec["D"]), np.array(rec["F"]),
                          np.array(rec["E1"]), np.array(rec["E2"]), deltas)


def contraction_rate(series: CouplingSeries, tail_fraction: float = 0.5):
    """Exponential decay rate of ``D_r`` fitted on the tail of the series.

    Uses the last ``tail_fraction`` of the samples that sit above the
    round-off floor. Returns ``(rate, residual_rms)``; an identically zero
    series returns ``(inf, 0.0)``.
    """
    D = np.asarray(series.D_r)
    t = np.asarray(series.t)
    if np.all(D == 0):
        return math.inf, 0.0
    ok = D > EPS_FLOOR * max(1.0, D[0])
    t, D = t[ok], D[ok]
    k = len(t) - max(2, int(round(tail_fraction * len(t))))
    t, D = t[max(k, 0):], D[max(k, 0):]
    if len(t) < 2:
        raise NonDecayError("not enough samples above the noise floor to fit a rate")
    slope, icpt = np.polyfit(t, np.log(D), 1)
    resid = float(np.sqrt(np.mean((np.log(D) - icpt - slope * t) ** 2)))
    if slope >= 0:
        raise NonDecayError(f"distance does not decay (fitted slope {slope:.3g})")
    return float(-slope), resid
