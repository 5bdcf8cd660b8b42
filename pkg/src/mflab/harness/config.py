"""Experiment configuration: flat ``[section] key = value`` files."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError

KINDS = ("meanfield_gap", "hbar_uniformity", "dyson_truncation", "wigner_vlasov", "classical_meanfield")
POTENTIALS = ("cosine", "gaussian", "constant")
OBSERVABLES = ("position_window", "momentum_projector", "coherent_projector", "cosine_multiplier", "pair_window")


def _floats(s: str) -> list[float]:
    return [float(v) for v in s.replace(",", " ").split()]


def _ints(s: str) -> list[int]:
    return [int(v) for v in s.replace(",", " ").split()]


# section -> key -> (attribute, parser)
SCHEMA = {
    "experiment": {
        "kind": ("kind", str),
        "seed": ("seed", int),
        "output": ("output", str),
    },
    "lattice": {
        "M": ("M", int),
        "L": ("L", float),
        "kinetic": ("kinetic", str),
    },
    "dynamics": {
        "hbar": ("hbar", _floats),
        "N": ("N", _ints),
        "t": ("t", float),
        "dt": ("dt", float),
        "epsilon": ("epsilon", _floats),
        "method": ("method", str),
    },
    "potential": {
        "family": ("potential", str),
        "amplitude": ("amplitude", float),
        "width": ("potential_width", float),
    },
    "state": {
        "center": ("center", float),
        "width": ("state_width", float),
        "k0": ("k0", float),
    },
    "observable": {
        "family": ("observables", lambda s: [v.strip() for v in s.split(",") if v.strip()]),
    },
    "classical": {
        "grid_hbar": ("grid_hbar", float),
        "momentum_width": ("momentum_width", float),
        "vlasov_dt": ("vlasov_dt", float),
        "seeds": ("seeds", int),
        "smoothing": ("smoothing", float),
    },
}


@dataclass
class ExperimentConfig:
    kind: str = "meanfield_gap"
    seed: int = 0
    output: str = "results"
    M: int = 12
    L: float = 6.283185307179586
    kinetic: str = "spectral"
    hbar: list = field(default_factory=lambda: [1.0])
    N: list = field(default_factory=lambda: [2, 3, 4])
    t: float = 0.5
    dt: float = 1e-3
    epsilon: list = field(default_factory=lambda: [0.05, 0.1, 0.2])
    method: str = "auto"
    potential: str = "cosine"
    amplitude: float = 1.0
    potential_width: float = 0.5
    center: float = 3.141592653589793
    state_width: float = 0.5
    k0: float = 0.0
    observables: list = field(default_factory=lambda: list(OBSERVABLES[:3]) + ["pair_window"])
    grid_hbar: float = 0.15
    momentum_width: float = 0.5
    vlasov_dt: float = 0.01
    seeds: int = 8
    smoothing: float = 0.0
    raw: dict = field(default_factory=dict, repr=False)

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.potential not in POTENTIALS:
            raise ConfigError(f"unknown potential family {self.potential!r}")
        bad = [o for o in self.observables if o not in OBSERVABLES]
        if bad:
            raise ConfigError(f"unknown observable families: {', '.join(bad)}")
        if self.M < 4 or self.M % 2:
            raise ConfigError("lattice M must be an even integer >= 4")
        if not self.L > 0 or not self.t >= 0 or not self.dt > 0:
            raise ConfigError("need L > 0, t >= 0 and dt > 0")
        if any(h <= 0 for h in self.hbar) or any(n < 1 for n in self.N):
            raise ConfigError("hbar values must be positive and N values >= 1")
        if any(e <= 0 for e in self.epsilon):
            raise ConfigError("epsilon values must be positive")

    def echo(self) -> dict:
        """Section/key/value mapping that reproduces this config."""
        out = {}
        for section, keys in SCHEMA.items():
            for key, (attr, _) in keys.items():
                val = getattr(self, attr)
                text = ", ".join(str(v) for v in val) if isinstance(val, list) else str(val)
                out.setdefault(section, {})[key] = text
        return out


def config_from_mapping(data: dict) -> ExperimentConfig:
    """Build a config from ``{section: {key: text}}``; unknown names are errors."""
    cfg = ExperimentConfig()
    unknown = []
    for section, items in data.items():
        if section == "DEFAULT":
            continue
        keys = SCHEMA.get(section)
        if keys is None:
            unknown.append(f"[{section}]")
            continue
        for key, text in items.items():
            if key not in keys:
                unknown.append(f"{section}.{key}")
                continue
            attr, parse = keys[key]
            try:
                setattr(cfg, attr, parse(str(text)))
            except ValueError as exc:
                raise ConfigError(f"bad value for {section}.{key}: {text!r} ({exc})") from None
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    cfg.raw = {s: dict(v) for s, v in data.items() if s != "DEFAULT"}
    cfg.validate()
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return config_from_mapping({s: dict(parser[s]) for s in parser.sections()})


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)
