"""Gradient potentials and quenched disorder.

Three potential families are provided:

``quadratic(kappa)``
    ``V(s) = kappa s^2 / 2``.
``perturbed(eps)``
    ``V(s) = s^2/2 + eps sqrt(1 + s^2)``, uniformly convex with
    ``1 <= V'' <= 1 + eps``.
``mixture(p, k1, k2)``
    ``exp(-V(s)) = p exp(-k1 s^2) + (1 - p) exp(-k2 s^2)``; not uniformly
    convex, only available with ``exploratory=True``.

Model A disorder is a field of symmetric random variables on sites; model B
disorder is a field of random conductances ``kappa_b`` on undirected bonds,
the bond potential being ``kappa_b * V``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .lattice import LatticeBox, shift
from .rng import coordinate_keys, counter_normal, counter_uniform


@dataclass(frozen=True)
class Potential:
    kind: str
    params: tuple
    C1: float | None
    C2: float

    @property
    def uniformly_convex(self) -> bool:
        return self.kind != "mixture"

    @property
    def is_quadratic(self) -> bool:
        return self.kind == "quadratic"

    def V(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "quadratic":
            return 0.5 * self.params[0] * s * s
        if self.kind == "perturbed":
            return 0.5 * s * s + self.params[0] * np.sqrt(1.0 + s * s)
        p, k1, k2 = self.params
        return -_log_mix(s, p, k1, k2)

    def dV(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "quadratic":
            return self.params[0] * s
        if self.kind == "perturbed":
            return s + self.params[0] * s / np.sqrt(1.0 + s * s)
        w1, w2 = _mix_weights(s, *self.params)
        _, k1, k2 = self.params
        return 2.0 * s * (w1 * k1 + w2 * k2)

    def d2V(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "quadratic":
            return np.full_like(s, self.params[0])
        if self.kind == "perturbed":
            return 1.0 + self.params[0] * (1.0 + s * s) ** -1.5
        w1, w2 = _mix_weights(s, *self.params)
        _, k1, k2 = self.params
        mean = w1 * k1 + w2 * k2
        var = w1 * (k1 - mean) ** 2 + w2 * (k2 - mean) ** 2
        return 2.0 * mean - 4.0 * s * s * var

    def spec(self) -> str:
        return f"{self.kind}:" + ",".join(repr(float(v)) for v in self.params)


def _log_mix(s, p, k1, k2):
    with np.errstate(divide="ignore"):
        a = np.log(p) - k1 * s * s if p > 0 else np.full_like(s, -np.inf)
        b = np.log1p(-p) - k2 * s * s if p < 1 else np.full_like(s, -np.inf)
    return np.logaddexp(a, b)


def _mix_weights(s, p, k1, k2):
    lz = _log_mix(s, p, k1, k2)
    with np.errstate(divide="ignore"):
        w1 = np.exp(np.log(p) - k1 * s * s - lz) if p > 0 else np.zeros_like(s)
    return w1, 1.0 - w1


def make_potential(kind: str, *args, exploratory: bool = False, **kwargs) -> Potential:
    """Build a potential from its family name and parameters.

    >>> make_potential("quadratic", 1.0).dV(2.0)
    array(2.)
    """
    if kind == "quadratic":
        kappa = float(kwargs.get("kappa", args[0] if args else 1.0))
        if not kappa > 0:
            raise ValueError(f"kappa must be positive, got {kappa}")
        return Potential("quadratic", (kappa,), kappa, kappa)
    if kind == "perturbed":
        eps = float(kwargs.get("eps", args[0] if args else 0.0))
        if not eps >= 0:
            raise ValueError(f"eps must be non-negative, got {eps}")
        return Potential("perturbed", (eps,), 1.0, 1.0 + eps)
    if kind == "mixture":
        p, k1, k2 = (float(kwargs.get(n, a)) for n, a in zip(("p", "k1", "k2"), args + (None,) * (3 - len(args))))
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {p}")
        if not (k1 > 0 and k2 > 0):
            raise ValueError("mixture stiffnesses must be positive")
        if not exploratory:
            raise ValueError("the mixture potential is not uniformly convex; pass exploratory=True")
        return Potential("mixture", (p, k1, k2), None, 2.0 * max(k1, k2))
    raise ValueError(f"unknown potential kind {kind!r}")


def parse_potential(text: str, exploratory: bool = False) -> Potential:
    """Parse ``"kind:a,b,c"`` (e.g. ``"perturbed:0.5"``)."""
    m = re.fullmatch(r"\s*(\w+)\s*(?::\s*(.*))?", text)
    if not m:
        raise ValueError(f"bad potential spec {text!r}")
    args = tuple(float(v) for v in m.group(2).split(",")) if m.group(2) else ()
    return make_potential(m.group(1), *args, exploratory=exploratory)


# --------------------------------------------------------------------------
# disorder
# --------------------------------------------------------------------------

MODEL_A_LAWS = ("gaussian", "rademacher", "uniform")
MODEL_B_LAWS = ("conductance",)


@dataclass(frozen=True)
class DisorderLaw:
    """``name`` plus a scale: sigma (gaussian, rademacher), half-width a
    (uniform), or relative spread delta around ``kappa`` (conductance)."""

    name: str
    scale: float = 0.0
    kappa: float = 1.0

    def __post_init__(self):
        if self.name not in MODEL_A_LAWS + MODEL_B_LAWS:
            raise ValueError(f"unknown disorder law {self.name!r}")
        if self.scale < 0:
            raise ValueError("disorder scale must be non-negative")
        if self.name == "conductance":
            if not self.kappa > 0:
                raise ValueError("conductance kappa must be positive")
            if not self.scale < 1:
                raise ValueError("conductance spread delta must be < 1 to keep kappa_b > 0")

    @property
    def model(self) -> str:
        return "B" if self.name in MODEL_B_LAWS else "A"

    @property
    def variance(self) -> float:
        if self.name in ("gaussian", "rademacher"):
            return self.scale**2
        if self.name == "uniform":
            return self.scale**2 / 3.0
        return (self.kappa * self.scale) ** 2 / 3.0

    @property
    def bounds(self) -> tuple:
        """Almost-sure range of the conductances (model B)."""
        return self.kappa * (1 - self.scale), self.kappa * (1 + self.scale)

    def spec(self) -> str:
        return f"{self.name}:{self.scale!r},{self.kappa!r}"


@dataclass(frozen=True)
class DisorderSample:
    """A quenched realisation on a box.

    For model A ``values`` are the fields xi on every site of the box and its
    boundary (site order); for model B they are conductances on the box edges
    (edge order).
    """

    model: str
    box: LatticeBox
    law: DisorderLaw
    seed: int
    values: np.ndarray = field(repr=False)

    @property
    def xi(self) -> np.ndarray:
        if self.model != "A":
            raise AttributeError("model B disorder has no site fields")
        return self.values

    @property
    def conductances(self) -> np.ndarray:
        if self.model != "B":
            raise AttributeError("model A disorder has no conductances")
        return self.values

    def __neg__(self):
        if self.model != "A":
            raise TypeError("sign flip is only meaningful for model A fields")
        return DisorderSample(self.model, self.box, self.law, self.seed, -self.values)


def _site_field(law, box, seed, coords):
    keys = coordinate_keys(coords)
    if law.name == "gaussian":
        return law.scale * counter_normal(seed, 1, keys)
    if law.name == "rademacher":
        return law.scale * np.where(counter_uniform(seed, 1, keys) < 0.5, -1.0, 1.0)
    return law.scale * (2.0 * counter_uniform(seed, 1, keys) - 1.0)


def _bond_field(law, box, seed, tail_coords, axes):
    keys = coordinate_keys(tail_coords, extra=axes)
    u = 2.0 * counter_uniform(seed, 2, keys) - 1.0
    return law.kappa * (1.0 + law.scale * u)


def sample_disorder(model: str, box: LatticeBox, law: DisorderLaw, seed: int) -> DisorderSample:
    """Quenched disorder on ``box``.

    Values are keyed by absolute lattice coordinates, so two boxes that
    overlap see the same environment on the overlap and the result does not
    depend on how the work is scheduled.
    """
    if law.model != model:
        raise ValueError(f"law {law.name!r} does not belong to model {model}")
    if model == "A":
        values = _site_field(law, box, seed, box.sites)
    else:
        tail, _, axis = box.edges
        values = _bond_field(law, box, seed, box.sites[tail], axis)
        lo, hi = law.bounds
        if values.min() <= 0 or values.min() < lo - 1e-12 or values.max() > hi + 1e-12:
            raise ValueError("conductance law violates its support constraint")
    return DisorderSample(model, box, law, int(seed), values)


def zero_disorder(box: LatticeBox) -> DisorderSample:
    return DisorderSample("A", box, DisorderLaw("gaussian", 0.0), 0, np.zeros(box.n_sites))


@shift.register
def _(obj: DisorderSample, v):
    # tau_v xi lives on the translated box with the same values in site/edge order
    return DisorderSample(obj.model, shift(obj.box, v), obj.law, obj.seed, obj.values.copy())
