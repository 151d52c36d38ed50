"""Gradient configurations on bonds.

A :class:`GradientField` stores one value per undirected edge of the box,
oriented along ``+e_axis``; the value of the reversed bond is the negative,
so antisymmetry holds by construction.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .lattice import Bond, DomainError, LatticeBox, shift

PLAQUETTE_RTOL = 1e-9


class PlaquetteError(ValueError):
    def __init__(self, msg, worst_index, worst_value):
        super().__init__(msg)
        self.worst_index = worst_index
        self.worst_value = worst_value


@dataclass
class GradientField:
    box: LatticeBox
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[-1] != self.box.n_edges:
            raise ValueError("gradient values do not match the box edges")

    def __call__(self, bond: Bond) -> float:
        e, s = self.box.edge_index(bond)
        return float(s * self.values[..., e])

    def directed(self) -> np.ndarray:
        """Values on the directed bond set (Lambda* both ways, then dLambda*)."""
        e, s = self.box.directed_bonds
        return s * self.values[..., e]


@shift.register
def _(obj: GradientField, v):
    return GradientField(shift(obj.box, v), obj.values.copy())


def gradient_of(phi, box: LatticeBox | None = None) -> GradientField:
    """eta(b) = phi(head) - phi(tail) for every edge, including boundary edges.

    ``phi`` is a :class:`~gglab.gibbs.HeightField` or an array over sites
    (then ``box`` is required); leading batch axes are kept.
    """
    if box is None:
        box, values = phi.box, phi.values
    else:
        values = np.asarray(phi, dtype=float)
    tail, head, _ = box.edges
    return GradientField(box, values[..., head] - values[..., tail])


def tilt_gradient(box: LatticeBox, u) -> GradientField:
    _, _, axis = box.edges
    return GradientField(box, np.asarray(u, dtype=float)[axis])


def plaquette_sums(eta: GradientField) -> np.ndarray:
    ids, signs = eta.box.plaquette_edges
    return (signs * eta.values[..., ids]).sum(axis=-1)


def check_plaquettes(eta: GradientField, rtol: float = PLAQUETTE_RTOL):
    sums = plaquette_sums(eta)
    if sums.size == 0:
        return
    scale = max(1.0, float(np.abs(eta.values).max()))
    k = int(np.argmax(np.abs(sums)))
    if abs(sums.flat[k]) > rtol * scale:
        raise PlaquetteError(f"plaquette condition violated: worst plaquette #{k} sums to {sums.flat[k]:.3e}",
                             k, float(sums.flat[k]))


def _prefix_sums(box: LatticeBox, values):
    """Per axis, cumulative sums of edge values along grid lines (0 on missing edges)."""
    shape = box.grid_shape
    out = []
    for a in range(box.d):
        el = box.edge_lookup[a]
        e = np.where(el >= 0, values[np.maximum(el, 0)], 0.0).reshape(shape)
        c = np.cumsum(e, axis=a)
        c = np.roll(c, 1, axis=a)
        idx = [slice(None)] * box.d
        idx[a] = 0
        c[tuple(idx)] = 0.0
        out.append(c.ravel())
    return out


def reconstruct(eta: GradientField, phi0: float = 0.0, order=None, check: bool = True) -> np.ndarray:
    """Heights from gradients along a staircase chain from the box centre.

    The chain moves along the axes in ``order`` (default ``0, 1, ..., d-1``);
    for a boundary site the axis on which it sticks out of the box is moved
    last, so the chain never uses a bond between two boundary sites.
    Returns heights over all sites with ``phi(centre) = phi0``.
    """
    box = eta.box
    if check:
        check_plaquettes(eta)
    if eta.values.ndim != 1:
        raise ValueError("reconstruct works on a single field")
    order = list(range(box.d)) if order is None else list(order)
    strides = np.array([int(np.prod(box.grid_shape[j + 1:])) for j in range(box.d)])
    P = _prefix_sums(box, eta.values)
    rel = box.sites - np.asarray(box.offset) + box.N + 1
    centre = np.full(box.d, box.N + 1)
    out_axis = np.where(np.abs(box.sites - np.asarray(box.offset)) > box.N)
    stick = np.full(box.n_sites, -1)
    stick[out_axis[0]] = out_axis[1]
    phi = np.full(box.n_sites, float(phi0))
    for s_ax in range(-1, box.d):
        sel = np.flatnonzero(stick == s_ax)
        if len(sel) == 0:
            continue
        ax_order = [a for a in order if a != s_ax] + ([s_ax] if s_ax >= 0 else [])
        cur = np.tile(centre, (len(sel), 1))
        for a in ax_order:
            nxt = cur.copy()
            nxt[:, a] = rel[sel, a]
            phi[sel] += P[a][nxt @ strides] - P[a][cur @ strides]
            cur = nxt
    return phi


def weighted_distance(eta1: GradientField, eta2: GradientField, r: float) -> np.ndarray:
    """sum_b exp(-2 r ||x_b||_inf) (eta1(b) - eta2(b))^2 over directed bonds.

    The sup-norm of the bond tail is measured from the origin of Z^d.
    """
    if eta1.box != eta2.box:
        raise ValueError("fields live on different boxes")
    if r <= 0:
        raise ValueError("decay rate r must be positive")
    box = eta1.box
    w = _directed_weights(box, r)
    e, _ = box.directed_bonds
    diff = eta1.values - eta2.values
    return (w * diff[..., e] ** 2).sum(axis=-1)


def _directed_weights(box, r):
    tails = box.sites[box.directed_tails()]
    return np.exp(-2.0 * r * np.abs(tails).max(axis=1))


# -- spatial averaging -----------------------------------------------------------

@dataclass(frozen=True)
class LinearBondFunctional:
    """F(eta) = sum_k coeffs[k] * eta(bonds[k]) with bonds in absolute coordinates."""

    bonds: tuple
    coeffs: tuple

    def evaluate(self, eta: GradientField):
        return sum(c * _bond_values(eta, b) for b, c in zip(self.bonds, self.coeffs))


def _bond_values(eta, bond):
    e, s = eta.box.edge_index(bond)
    return s * eta.values[..., e]


def spatial_average_observable(F, base_box: LatticeBox, shifts, estimate_one, threads: int = 1):
    """Average of per-volume estimates of E[F] over translated boxes ``base_box + x``.

    ``estimate_one(box, shift)`` returns ``(estimate, stderr)`` for the
    measure on one translated box, holding the quenched disorder fixed in
    absolute coordinates. Independent shifts are combined with
    ``stderr = sqrt(sum stderr_i^2) / n``. If a shift fails the error is
    re-raised with the partial results attached as ``exc.partial``.
    """
    shifts = [tuple(int(v) for v in s) for s in shifts]
    if not shifts:
        raise ValueError("need at least one shift")

    def one(s):
        return estimate_one(shift(base_box, s), s)

    results = []
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futures = [pool.submit(one, s) for s in shifts]
        for s, fut in zip(shifts, futures):
            try:
                results.append(fut.result())
            except Exception as exc:
                exc.partial = list(zip(shifts, results))
                raise
    est = np.array([r[0] for r in results], dtype=float)
    err = np.array([r[1] for r in results], dtype=float)
    return float(est.mean()), float(np.sqrt((err**2).sum()) / len(est))


def cesaro_average(values_by_volume):
    """Running Cesaro means of a sequence of per-volume estimates."""
    v = np.asarray(values_by_volume, dtype=float)
    return np.cumsum(v, axis=0) / np.arange(1, len(v) + 1).reshape((-1,) + (1,) * (v.ndim - 1))


def gaussian_estimator(F: LinearBondFunctional, potential_kappa: float, disorder_fn, boundary):
    """``estimate_one`` for quadratic models: exact mean of a linear functional, zero error."""
    from .gibbs import FiniteVolumeModel
    from .potentials import make_potential

    def estimate(box, _s):
        model = FiniteVolumeModel(box, make_potential("quadratic", potential_kappa), disorder_fn(box), boundary)
        mean = model.gaussian().mean
        return float(F.evaluate(gradient_of(mean, box))), 0.0

    return estimate


__all__ = [
    "DomainError", "GradientField", "LinearBondFunctional", "PlaquetteError", "cesaro_average",
    "check_plaquettes", "gaussian_estimator", "gradient_of", "plaquette_sums", "reconstruct",
    "spatial_average_observable", "tilt_gradient", "weighted_distance",
]
