"""Lattice geometry: cubic boxes, their outer boundary, bonds and plaquettes.

A box is ``offset + [-N, N]^d``. Sites of the box together with its outer
boundary (lattice points at L1 distance one) are numbered lexicographically,
interior first. Adjacency is always L1 nearest-neighbour; the sup-norm only
enters through the weights of the weighted gradient norm.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property, singledispatch

import numpy as np


class DomainError(ValueError):
    """Raised when a site or bond lies outside the domain of a field."""


@dataclass(frozen=True)
class Bond:
    """Directed nearest-neighbour bond ``tail -> head``."""

    tail: tuple
    head: tuple

    def __post_init__(self):
        if len(self.tail) != len(self.head):
            raise ValueError("tail and head have different dimensions")
        if sum(abs(a - b) for a, b in zip(self.tail, self.head)) != 1:
            raise ValueError(f"{self.tail} and {self.head} are not nearest neighbours")

    def reversed(self) -> "Bond":
        return Bond(self.head, self.tail)

    def __neg__(self) -> "Bond":
        return self.reversed()

    @property
    def axis(self) -> int:
        return next(i for i, (a, b) in enumerate(zip(self.tail, self.head)) if a != b)

    @property
    def sign(self) -> int:
        """+1 if the bond points along +e_axis."""
        a = self.axis
        return 1 if self.head[a] > self.tail[a] else -1


@dataclass(frozen=True)
class Plaquette:
    bonds: tuple

    def __post_init__(self):
        b = self.bonds
        if len(b) != 4:
            raise ValueError("a plaquette has four bonds")
        for i in range(4):
            if b[i].head != b[(i + 1) % 4].tail:
                raise ValueError("plaquette bonds do not chain")
        if len({x.tail for x in b}) != 4:
            raise ValueError("plaquette corners are not distinct")


@dataclass(frozen=True)
class LatticeBox:
    d: int
    N: int
    offset: tuple = field(default=None)

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if not isinstance(self.N, (int, np.integer)) or self.N < 1:
            raise ValueError(f"half-side must be >= 1, got {self.N}")
        off = (0,) * self.d if self.offset is None else tuple(int(v) for v in self.offset)
        if len(off) != self.d:
            raise ValueError("offset has wrong dimension")
        object.__setattr__(self, "offset", off)

    # -- grid helpers -------------------------------------------------------
    @property
    def side(self) -> int:
        return 2 * self.N + 1

    @property
    def grid_shape(self) -> tuple:
        """Shape of the extended grid ``offset + [-N-1, N+1]^d``."""
        return (2 * self.N + 3,) * self.d

    @cached_property
    def _grid_coords(self) -> np.ndarray:
        r = np.arange(-self.N - 1, self.N + 2)
        g = np.stack(np.meshgrid(*([r] * self.d), indexing="ij"), axis=-1).reshape(-1, self.d)
        return g + np.asarray(self.offset)

    @cached_property
    def _grid_kind(self) -> np.ndarray:
        # 0 = interior, 1 = boundary, -1 = neither (corners of the extended grid)
        rel = self._grid_coords - np.asarray(self.offset)
        out = np.abs(rel) > self.N
        n_out = out.sum(axis=1)
        kind = np.full(len(rel), -1, dtype=np.int8)
        kind[n_out == 0] = 0
        kind[n_out == 1] = 1
        return kind

    @cached_property
    def lookup(self) -> np.ndarray:
        """Flat extended-grid index -> site index (or -1)."""
        kind = self._grid_kind
        lut = np.full(len(kind), -1, dtype=np.int64)
        inner = np.flatnonzero(kind == 0)
        outer = np.flatnonzero(kind == 1)
        lut[inner] = np.arange(len(inner))
        lut[outer] = len(inner) + np.arange(len(outer))
        return lut

    @cached_property
    def sites(self) -> np.ndarray:
        """All sites, shape (n_sites, d): interior (lexicographic) then boundary."""
        kind = self._grid_kind
        g = self._grid_coords
        return np.concatenate([g[kind == 0], g[kind == 1]]).astype(np.int64)

    @cached_property
    def grid_of_site(self) -> np.ndarray:
        """Site index -> flat extended-grid index."""
        kind = self._grid_kind
        return np.concatenate([np.flatnonzero(kind == 0), np.flatnonzero(kind == 1)])

    @property
    def n_interior(self) -> int:
        return self.side ** self.d

    @property
    def n_boundary(self) -> int:
        return len(self.sites) - self.n_interior

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def interior(self) -> np.ndarray:
        return self.sites[: self.n_interior]

    @property
    def boundary(self) -> np.ndarray:
        return self.sites[self.n_interior:]

    def grid_index(self, coords) -> np.ndarray:
        """Flat extended-grid index of coordinates (n, d); -1 when off-grid."""
        c = np.atleast_2d(np.asarray(coords, dtype=np.int64)) - np.asarray(self.offset) + self.N + 1
        ok = np.all((c >= 0) & (c < 2 * self.N + 3), axis=1)
        flat = np.full(len(c), -1, dtype=np.int64)
        if ok.any():
            flat[ok] = np.ravel_multi_index(tuple(c[ok].T), self.grid_shape)
        return flat

    def index_array(self, coords) -> np.ndarray:
        """Site indices of coordinates (n, d); -1 for points outside the box and its boundary."""
        flat = self.grid_index(coords)
        out = np.full(len(flat), -1, dtype=np.int64)
        ok = flat >= 0
        out[ok] = self.lookup[flat[ok]]
        return out

    def index(self, site) -> int:
        i = int(self.index_array([site])[0])
        if i < 0:
            raise DomainError(f"site {tuple(site)} not in box or boundary")
        return i

    def contains(self, site) -> bool:
        rel = np.asarray(site) - np.asarray(self.offset)
        return bool(np.all(np.abs(rel) <= self.N))

    def is_interior_index(self, i) -> np.ndarray:
        return np.asarray(i) < self.n_interior

    # -- bonds ----------------------------------------------------------------
    @cached_property
    def edges(self):
        """Undirected edges with at least one interior endpoint.

        Returns ``(tail, head, axis)`` arrays of site indices with
        ``head = tail + e_axis``; ordered by axis, then lexicographically by tail.
        """
        lut = self.lookup.reshape(self.grid_shape)
        tails, heads, axes = [], [], []
        for a in range(self.d):
            sl_t = [slice(None)] * self.d
            sl_h = [slice(None)] * self.d
            sl_t[a] = slice(0, -1)
            sl_h[a] = slice(1, None)
            t = lut[tuple(sl_t)].ravel()
            h = lut[tuple(sl_h)].ravel()
            ok = (t >= 0) & (h >= 0) & ((t < self.n_interior) | (h < self.n_interior))
            tails.append(t[ok])
            heads.append(h[ok])
            axes.append(np.full(ok.sum(), a, dtype=np.int64))
        return np.concatenate(tails), np.concatenate(heads), np.concatenate(axes)

    @property
    def n_edges(self) -> int:
        return len(self.edges[0])

    @cached_property
    def edge_lookup(self) -> np.ndarray:
        """Array (d, grid size): edge index of the edge leaving a grid point along +e_a, or -1."""
        tail, _, axis = self.edges
        out = np.full((self.d, int(np.prod(self.grid_shape))), -1, dtype=np.int64)
        out[axis, self.grid_of_site[tail]] = np.arange(len(tail))
        return out

    @cached_property
    def inner_edge_mask(self) -> np.ndarray:
        tail, head, _ = self.edges
        return (tail < self.n_interior) & (head < self.n_interior)

    @cached_property
    def directed_bonds(self):
        """Directed bonds of Lambda* (both orientations) followed by dLambda* (outside -> inside).

        Returned as ``(edge_index, sign)``: the value of the directed bond is
        ``sign * eta[edge_index]`` and its tail is the edge tail when sign = +1.
        """
        inner = np.flatnonzero(self.inner_edge_mask)
        outer = np.flatnonzero(~self.inner_edge_mask)
        tail, _, _ = self.edges
        outer_sign = np.where(tail[outer] >= self.n_interior, 1, -1)
        e = np.concatenate([inner, inner, outer])
        s = np.concatenate([np.ones(len(inner), np.int64), -np.ones(len(inner), np.int64), outer_sign])
        return e, s

    def directed_tails(self) -> np.ndarray:
        e, s = self.directed_bonds
        tail, head, _ = self.edges
        return np.where(s > 0, tail[e], head[e])

    def edge_index(self, bond: Bond):
        """(edge index, sign) for a directed bond; raises DomainError if absent."""
        a = bond.axis
        lower = bond.tail if bond.sign > 0 else bond.head
        g = self.grid_index([lower])[0]
        if g < 0 or self.edge_lookup[a, g] < 0:
            raise DomainError(f"bond {bond} not in box")
        return int(self.edge_lookup[a, g]), bond.sign

    # -- plaquettes -----------------------------------------------------------
    @cached_property
    def plaquette_edges(self):
        """Arrays (P, 4) of edge indices and signs for all-interior unit squares."""
        if self.d < 2:
            return np.zeros((0, 4), np.int64), np.zeros((0, 4), np.int64)
        strides = np.array([int(np.prod(self.grid_shape[j + 1:])) for j in range(self.d)])
        inner = self.grid_of_site[: self.n_interior]
        kind = self._grid_kind
        el = self.edge_lookup
        ids, signs = [], []
        for a, b in itertools.combinations(range(self.d), 2):
            x = inner
            xa, xb = x + strides[a], x + strides[b]
            xab = xa + strides[b]
            ok = (kind[xa] == 0) & (kind[xb] == 0) & (kind[xab] == 0)
            x, xa, xb = x[ok], xa[ok], xb[ok]
            ids.append(np.stack([el[a, x], el[b, xa], el[a, xb], el[b, x]], axis=1))
            signs.append(np.tile([1, 1, -1, -1], (len(x), 1)))
        return np.concatenate(ids), np.concatenate(signs)

    def __repr__(self):
        return f"LatticeBox(d={self.d}, N={self.N}, offset={self.offset})"


def build_box(d: int, N: int, offset=None) -> LatticeBox:
    return LatticeBox(d, N, None if offset is None else tuple(offset))


def _site_tuple(box, i):
    return tuple(int(v) for v in box.sites[i])


def enumerate_bonds(box: LatticeBox):
    """Directed bonds of the box: (Lambda*, dLambda*) as two lists of :class:`Bond`.

    Lambda* contains both orientations of every bond with two interior
    endpoints; dLambda* contains the bonds pointing from the outer boundary
    into the box.
    """
    e, s = box.directed_bonds
    tail, head, _ = box.edges
    n_inner = 2 * int(box.inner_edge_mask.sum())
    bonds = []
    for k, (ei, si) in enumerate(zip(e, s)):
        t, h = (tail[ei], head[ei]) if si > 0 else (head[ei], tail[ei])
        bonds.append(Bond(_site_tuple(box, t), _site_tuple(box, h)))
    return bonds[:n_inner], bonds[n_inner:]


def plaquettes(box: LatticeBox):
    ids, signs = box.plaquette_edges
    tail, head, _ = box.edges
    out = []
    for row, srow in zip(ids, signs):
        bs = []
        for ei, si in zip(row, srow):
            t, h = (tail[ei], head[ei]) if si > 0 else (head[ei], tail[ei])
            bs.append(Bond(_site_tuple(box, t), _site_tuple(box, h)))
        out.append(Plaquette(tuple(bs)))
    return out


def boundary_by_scan(box: LatticeBox) -> set:
    """Outer boundary from the definition: L1 neighbours of interior sites not in the box."""
    out = set()
    for x in box.interior:
        for a in range(box.d):
            for s in (-1, 1):
                y = x.copy()
                y[a] += s
                if not box.contains(y):
                    out.add(tuple(int(v) for v in y))
    return out


def boundary_by_faces(box: LatticeBox) -> set:
    """Outer boundary as the union of the 2d translated faces of the cube."""
    out = set()
    r = range(-box.N, box.N + 1)
    for a in range(box.d):
        for s in (-1, 1):
            for rest in itertools.product(r, repeat=box.d - 1):
                y = list(rest)
                y.insert(a, s * (box.N + 1))
                out.add(tuple(int(v + o) for v, o in zip(y, box.offset)))
    return out


def dirichlet_lambda1(box: LatticeBox) -> float:
    """Smallest eigenvalue of the graph Laplacian of the box with zero boundary values."""
    return box.d * 2.0 * (1.0 - np.cos(np.pi / (2 * box.N + 2)))


def dirichlet_lambda_max(box: LatticeBox) -> float:
    return box.d * 2.0 * (1.0 - np.cos(np.pi * (2 * box.N + 1) / (2 * box.N + 2)))


@singledispatch
def shift(obj, v):
    """Lattice translation tau_v.

    Sites and bonds move by ``+v``; a field ``f`` on a box becomes the field
    ``y -> f(y - v)`` on the translated box.
    """
    arr = np.asarray(obj)
    if arr.dtype.kind in "iu":
        return arr + np.asarray(v, dtype=arr.dtype)
    raise TypeError(f"cannot shift object of type {type(obj).__name__}")


@shift.register
def _(obj: tuple, v):
    return tuple(int(a + b) for a, b in zip(obj, v))


@shift.register
def _(obj: Bond, v):
    return Bond(shift(obj.tail, v), shift(obj.head, v))


@shift.register
def _(obj: Plaquette, v):
    return Plaquette(tuple(shift(b, v) for b in obj.bonds))


@shift.register
def _(obj: LatticeBox, v):
    return LatticeBox(obj.d, obj.N, tuple(int(a + b) for a, b in zip(obj.offset, v)))


@shift.register
def _(obj: list, v):
    return [shift(o, v) for o in obj]
