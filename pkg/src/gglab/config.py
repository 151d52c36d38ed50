"""Experiment configuration: a typed dataclass stored as an INI file.

Every value is written as a JSON literal, so ``load(dump(cfg)) == cfg``::

    [experiment]
    name = "tilt"
    seed = 0

    [lattice]
    d = 3
    N = 6
"""
from __future__ import annotations

import configparser
import dataclasses
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from .potentials import DisorderLaw, parse_potential

SECTIONS = {
    "experiment": ("name", "seed", "out_dir", "threads"),
    "lattice": ("d", "N"),
    "model": ("model", "potential", "law", "scale", "kappa", "exploratory"),
    "boundary": ("tilt", "pinned"),
    "dynamics": ("h", "burn_in", "thin", "n_samples", "chains"),
    "ensemble": ("ensemble",),
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    name: str
    d: int = 2
    N: int = 8
    model: str = "A"
    potential: str = "quadratic:1.0"
    law: str = "gaussian"
    scale: float = 0.0
    kappa: float = 1.0
    exploratory: bool = False
    tilt: list | None = None
    pinned: list = field(default_factory=list)
    h: float | None = None
    burn_in: float | None = None
    thin: int = 10
    n_samples: int = 1000
    chains: int = 1
    ensemble: int = 1
    seed: int = 0
    out_dir: str = "runs"
    threads: int = 1
    params: dict = field(default_factory=dict)

    def validate(self) -> "ExperimentConfig":
        """Check every field against the preconditions of the modules it feeds."""
        from .experiments import REGISTRY

        if self.name not in REGISTRY:
            raise ConfigError(f"unknown experiment {self.name!r}")
        if not (isinstance(self.d, int) and self.d >= 1):
            raise ConfigError("d must be a positive integer")
        if not (isinstance(self.N, int) and self.N >= 1):
            raise ConfigError("N must be a positive integer")
        if self.model not in ("A", "B"):
            raise ConfigError("model must be 'A' or 'B'")
        try:
            parse_potential(self.potential, exploratory=self.exploratory)
            law = DisorderLaw(self.law, self.scale, self.kappa)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if law.model != self.model:
            raise ConfigError(f"law {self.law!r} does not belong to model {self.model}")
        if self.tilt is not None and len(self.tilt) != self.d:
            raise ConfigError("tilt must have d components")
        for p in self.pinned:
            if len(p) != self.d or max(abs(int(v)) for v in p) > self.N:
                raise ConfigError(f"pinned site {p} lies outside the box")
        if self.h is not None and not self.h > 0:
            raise ConfigError("h must be positive")
        if self.burn_in is not None and self.burn_in < 0:
            raise ConfigError("burn_in must be non-negative")
        for k in ("thin", "n_samples", "chains", "ensemble", "threads"):
            if not (isinstance(getattr(self, k), int) and getattr(self, k) >= 1):
                raise ConfigError(f"{k} must be a positive integer")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def dumps(cfg: ExperimentConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    data = cfg.to_dict()
    for sec, keys in SECTIONS.items():
        cp[sec] = {k: json.dumps(data[k]) for k in keys}
    cp["params"] = {k: json.dumps(v) for k, v in sorted(cfg.params.items())}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def loads(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    known = {k for keys in SECTIONS.values() for k in keys}
    kwargs, params = {}, {}
    for sec in cp.sections():
        for k, raw in cp[sec].items():
            try:
                val = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"[{sec}] {k}: value must be a JSON literal, got {raw!r}") from exc
            if sec == "params":
                params[k] = val
            elif sec in SECTIONS and k in known:
                kwargs[k] = val
            else:
                raise ConfigError(f"unknown key [{sec}] {k}")
    if "name" not in kwargs:
        raise ConfigError("config needs [experiment] name")
    return ExperimentConfig(params=params, **kwargs)


def load(path) -> ExperimentConfig:
    return loads(Path(path).read_text())


def dump(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(dumps(cfg))
