"""Experiment configuration: a flat INI file with a ``[noise]`` section.

Example::

    [experiment]
    scenario = heat_alpha_stable
    d_H = 16
    d_U = 16
    n_steps = 64
    T = 1.0
    epsilon_list = 0.1, 0.01
    n_paths = 200
    seed_base = 0
    output_dir = out
    workers = 1

    [noise]
    kind = alpha_stable
    alpha = 1.5
    scale = 1.0

:func:`dump_config` is the one canonical serializer; ``parse_config(dump_config(c)) == c``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .noise import NoiseModel, alpha_stable, brownian, compound_poisson

NOISE_KINDS = ("brownian", "alpha_stable", "compound_poisson")


class ConfigError(ValueError):
    """The configuration text cannot be parsed or fails validation."""


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "brownian"
    alpha: float = 1.5
    scale: float = 1.0
    rate: float = 1.0
    jump_mean: float = 0.0
    jump_scale: float = 1.0

    def build(self, d_U: int) -> NoiseModel:
        if self.kind == "brownian":
            return brownian(d_U, cov=self.scale**2 * np.eye(d_U))
        if self.kind == "alpha_stable":
            return alpha_stable(d_U, self.alpha, self.scale)
        if self.kind == "compound_poisson":
            return compound_poisson(d_U, self.rate, self.jump_mean, self.jump_scale)
        raise ConfigError(f"unknown noise kind {self.kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    d_H: int = 8
    d_U: int = 8
    n_steps: int = 64
    T: float = 1.0
    epsilon_list: tuple = (0.05,)
    n_paths: int = 100
    seed_base: int = 0
    output_dir: str = "out"
    workers: int = 1
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        if self.d_H < 1 or self.d_U < 1 or self.n_steps < 1:
            raise ConfigError("dimensions and n_steps must be at least 1")
        if not self.T > 0:
            raise ConfigError("T must be positive")
        if not self.epsilon_list or any(not e > 0 for e in self.epsilon_list):
            raise ConfigError("every epsilon must be positive")
        if self.n_paths < 1 or self.workers < 1:
            raise ConfigError("n_paths and workers must be at least 1")
        if self.noise.kind not in NOISE_KINDS:
            raise ConfigError(f"unknown noise kind {self.noise.kind!r}")

    @property
    def epsilon(self) -> float:
        return self.epsilon_list[0]

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


_INT = {"d_H", "d_U", "n_steps", "n_paths", "seed_base", "workers"}
_FLOAT = {"T"}


def _format(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: ExperimentConfig) -> str:
    lines = ["[experiment]"]
    for f in fields(cfg):
        if f.name != "noise":
            lines.append(f"{f.name} = {_format(getattr(cfg, f.name))}")
    lines += ["", "[noise]"]
    for f in fields(cfg.noise):
        lines.append(f"{f.name} = {_format(getattr(cfg.noise, f.name))}")
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep d_H / T case
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc.message.splitlines()[0]}") from None
    if "experiment" not in cp:
        raise ConfigError("missing [experiment] section")
    known = {f.name for f in fields(ExperimentConfig)} - {"noise"}
    kw = {}
    try:
        for key, raw in cp["experiment"].items():
            if key not in known:
                raise ConfigError(f"unknown key {key!r}")
            if key in _INT:
                kw[key] = int(raw)
            elif key in _FLOAT:
                kw[key] = float(raw)
            elif key == "epsilon_list":
                kw[key] = tuple(float(x) for x in raw.split(",") if x.strip())
            elif key in ("scenario", "output_dir"):
                kw[key] = raw.strip()
        if "epsilon" in cp["experiment"]:
            raise ConfigError("use epsilon_list (a single value is fine)")
        if "noise" in cp:
            nk = {}
            noise_known = {f.name for f in fields(NoiseSpec)}
            for key, raw in cp["noise"].items():
                if key not in noise_known:
                    raise ConfigError(f"unknown noise key {key!r}")
                nk[key] = raw.strip() if key == "kind" else float(raw)
            kw["noise"] = NoiseSpec(**nk)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad value: {exc}") from None
    if "scenario" not in kw:
        raise ConfigError("missing scenario")
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}") from None
    return parse_config(text)
