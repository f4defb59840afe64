"""Flat key-value experiment configuration files.

One ``key = value`` (or ``key value``) pair per line; ``#`` starts a
comment. List-valued keys take whitespace- or comma-separated values.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .exceptions import ConfigError

EXPERIMENTS = ("covariance_error", "laplacian_error", "msd_comparison", "steady_state")


@dataclass
class ExperimentConfig:
    experiment: str = "covariance_error"
    K: int = 10
    M_list: list = field(default_factory=lambda: [1500])
    mu_list: list = field(default_factory=lambda: [2e-2, 1e-2])
    trials_task: int = 20
    trials_noise: int = 20
    seed: int = 0
    # topology: a pinned edge-list file wins over generation
    topology_file: str | None = None
    topology_seed: int = 273
    max_degree: int = 8
    mixture_p: float = 0.3
    mixture_hi_lo: tuple = (1.0, 20.0)
    mixture_lo_hi: tuple = (0.0, 0.5)
    # per-agent variance ranges (sigma^2), drawn once per experiment
    sigma_u_range: tuple = (0.8, 1.2)
    sigma_v_range: tuple = (0.05, 0.2)
    profile_seed: int | None = None
    # multitask with estimated Laplacians (msd_comparison)
    estimation_mu_list: list = field(default_factory=list)
    time_constants: float = 20.0
    record_every: int = 100
    steady_fraction: float = 0.2
    engine: str = "reduced"
    workers: int = 1
    include_benchmark: bool = True
    plot: bool = False
    out_dir: str = "results"
    name: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}",
                              key="experiment")
        for key in ("K", "trials_task", "trials_noise", "record_every", "workers"):
            if getattr(self, key) < 1:
                raise ConfigError("must be a positive integer", key=key)
        if not self.M_list or any(m < 1 for m in self.M_list):
            raise ConfigError("needs a nonempty list of positive integers", key="M_list")
        if any(m <= 0 for m in self.mu_list):
            raise ConfigError("stepsizes must be positive", key="mu_list")
        if not self.mu_list and not (self.include_benchmark and self.experiment in ("covariance_error", "laplacian_error")):
            raise ConfigError("needs a nonempty list of stepsizes", key="mu_list")
        if any(m <= 0 for m in self.estimation_mu_list):
            raise ConfigError("stepsizes must be positive", key="estimation_mu_list")
        for key in ("mixture_hi_lo", "mixture_lo_hi", "sigma_u_range", "sigma_v_range"):
            lo, hi = getattr(self, key)
            if lo < 0 or hi < lo:
                raise ConfigError(f"invalid range ({lo}, {hi})", key=key)
        if self.sigma_u_range[0] <= 0:
            raise ConfigError("regressor variances must be positive", key="sigma_u_range")
        if not 0 <= self.mixture_p <= 1:
            raise ConfigError("must lie in [0, 1]", key="mixture_p")
        if self.engine not in ("reduced", "literal"):
            raise ConfigError("must be 'reduced' or 'literal'", key="engine")
        if not 0 < self.steady_fraction <= 1:
            raise ConfigError("must lie in (0, 1]", key="steady_fraction")
        if self.time_constants <= 0:
            raise ConfigError("must be positive", key="time_constants")

    @property
    def label(self):
        return self.name or self.experiment

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _bool(text):
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _items(text):
    return [t for t in text.replace(",", " ").split() if t]


def _parser_for(f):
    t = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    name = f.name
    if name in ("M_list",):
        return lambda s: [int(float(x)) if float(x).is_integer() else _bad_int(x) for x in _items(s)]
    if name in ("mu_list", "estimation_mu_list"):
        return lambda s: [] if s.lower() == "none" else [float(x) for x in _items(s)]
    if t.startswith("tuple"):
        def pair(s):
            vals = [float(x) for x in _items(s)]
            if len(vals) == 1:
                vals = vals * 2
            if len(vals) != 2:
                raise ValueError(f"expected 1 or 2 numbers, got {len(vals)}")
            return tuple(vals)
        return pair
    if t.startswith("bool"):
        return _bool
    if t.startswith("int"):
        return lambda s: None if s.lower() == "none" else int(s)
    if t.startswith("float"):
        return float
    return lambda s: None if s.lower() == "none" else s


def _bad_int(x):
    raise ValueError(f"not an integer: {x!r}")


def parse_config(text: str, base_dir=None) -> ExperimentConfig:
    """Parse config text; errors carry the offending line number and key."""
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, val = line.partition("=")
        else:
            key, _, val = line.partition(" ")
        key, val = key.strip(), val.strip()
        if key not in fields:
            raise ConfigError(f"unknown key {key!r}", line=lineno, key=key)
        if not val:
            raise ConfigError("missing value", line=lineno, key=key)
        if key in values:
            raise ConfigError("duplicate key", line=lineno, key=key)
        try:
            values[key] = _parser_for(fields[key])(val)
        except ValueError as exc:
            raise ConfigError(str(exc), line=lineno, key=key) from None
        lines[key] = lineno
    if base_dir is not None and values.get("topology_file"):
        p = Path(values["topology_file"])
        if not p.is_absolute():
            values["topology_file"] = str(Path(base_dir) / p)
    try:
        return ExperimentConfig(**values)
    except ConfigError as exc:
        if exc.key in lines and exc.line is None:
            raise ConfigError(str(exc).split("] ", 1)[-1], line=lines[exc.key], key=exc.key) from None
        raise


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    cfg = parse_config(path.read_text(), base_dir=path.parent)
    if cfg.name is None:
        cfg.name = path.stem
    return cfg


def format_config(cfg: ExperimentConfig) -> str:
    out = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if v is None:
            continue
        if isinstance(v, (list, tuple)):
            v = " ".join(repr(x) for x in v)
        out.append(f"{f.name} = {v}")
    return "\n".join(out) + "\n"
