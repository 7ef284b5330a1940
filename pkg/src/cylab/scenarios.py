"""Named SDE scenarios on diagonal (spectral Galerkin) semigroups.

Every coefficient map is a small picklable class evaluated on whole batches
of states, so problems can be shipped to worker processes unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import ExperimentConfig, NoiseSpec
from .hilbert import ContractionSemigroup, DomainError
from .solver import SdeProblem


class UnknownScenario(KeyError):
    pass


class DimensionMismatch(DomainError):
    pass


class ZeroDrift:
    batched = True

    def __call__(self, X):
        return np.zeros_like(X)


class LinearDrift:
    """``F(x) = -c x``."""

    batched = True

    def __init__(self, c):
        self.c = float(c)

    def __call__(self, X):
        return -self.c * X


class SineDrift:
    """``F(x)_k = c sin(x_k)``; Lipschitz with constant ``c``."""

    batched = True

    def __init__(self, c):
        self.c = float(c)

    def __call__(self, X):
        return self.c * np.sin(X)


class ConstantDiffusion:
    batched = True

    def __init__(self, B):
        self.B = np.asarray(B, dtype=np.float64)

    def __call__(self, X):
        return np.broadcast_to(self.B, (X.shape[0],) + self.B.shape).copy()


class DiagonalSineDiffusion:
    """``G(x) = diag(g0_k + c sin(x_k))``; Hilbert-Schmidt Lipschitz with constant ``c``."""

    batched = True

    def __init__(self, g0, c):
        self.g0 = np.asarray(g0, dtype=np.float64)
        self.c = float(c)

    def __call__(self, X):
        diag = self.g0 + self.c * np.sin(X)
        out = np.zeros(X.shape + (X.shape[1],))
        idx = np.arange(X.shape[1])
        out[:, idx, idx] = diag
        return out


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    build: Callable[[ExperimentConfig], SdeProblem]
    defaults: ExperimentConfig

    def problem(self, cfg: ExperimentConfig | None = None) -> SdeProblem:
        return self.build(cfg or self.defaults)


def _require_square(cfg):
    if cfg.d_H != cfg.d_U:
        raise DimensionMismatch(f"scenario {cfg.scenario!r} needs d_H == d_U, got {cfg.d_H} and {cfg.d_U}")


def _k(d):
    return np.arange(1.0, d + 1)


def _heat_alpha_stable(cfg):
    _require_square(cfg)
    k = _k(cfg.d_H)
    return SdeProblem(ContractionSemigroup(k**2), SineDrift(0.5), 0.5,
                      DiagonalSineDiffusion(1.0 / k, 0.5), 0.5, 1.0 / k,
                      cfg.noise.build(cfg.d_U), cfg.T)


def _heat_brownian_additive(cfg):
    _require_square(cfg)
    return SdeProblem(ContractionSemigroup(_k(cfg.d_H)), ZeroDrift(), 0.0,
                      ConstantDiffusion(np.eye(cfg.d_H)), 0.0, np.zeros(cfg.d_H),
                      cfg.noise.build(cfg.d_U), cfg.T)


PURE_DRIFT_RATE = 0.5


def _pure_drift(cfg):
    return SdeProblem(ContractionSemigroup(_k(cfg.d_H)), LinearDrift(PURE_DRIFT_RATE),
                      PURE_DRIFT_RATE, ConstantDiffusion(np.zeros((cfg.d_H, cfg.d_U))), 0.0,
                      np.ones(cfg.d_H), cfg.noise.build(cfg.d_U), cfg.T)


def _contractive_brownian(cfg):
    _require_square(cfg)
    k = _k(cfg.d_H)
    return SdeProblem(ContractionSemigroup(k), SineDrift(0.5), 0.5,
                      DiagonalSineDiffusion(1.0 / k, 0.5), 0.5, 1.0 / k,
                      cfg.noise.build(cfg.d_U), cfg.T)


SCENARIOS: dict[str, Scenario] = {
    s.name: s
    for s in [
        Scenario("heat_alpha_stable",
                 "heat equation, lambda_k = k^2, multiplicative symmetric 1.5-stable noise",
                 _heat_alpha_stable,
                 ExperimentConfig("heat_alpha_stable", d_H=16, d_U=16, n_steps=64,
                                  epsilon_list=(0.05,), n_paths=200,
                                  noise=NoiseSpec("alpha_stable", alpha=1.5))),
        Scenario("heat_brownian_additive",
                 "Ornstein-Uhlenbeck modes, lambda_k = k, G = Id, closed-form variance",
                 _heat_brownian_additive,
                 ExperimentConfig("heat_brownian_additive", d_H=8, d_U=8, n_steps=256,
                                  n_paths=10_000, noise=NoiseSpec("brownian"))),
        Scenario("pure_drift",
                 "no noise, F(x) = -x/2, solution exp(-(k + 1/2) t) x0",
                 _pure_drift,
                 ExperimentConfig("pure_drift", d_H=8, d_U=8, n_steps=256, n_paths=2,
                                  noise=NoiseSpec("brownian"))),
        Scenario("contractive_brownian",
                 "lambda_k = k, sine drift and diagonal diffusion with Lipschitz 1/2, Brownian",
                 _contractive_brownian,
                 ExperimentConfig("contractive_brownian", d_H=8, d_U=8, n_steps=64,
                                  epsilon_list=(0.2, 0.1, 0.05, 0.02), n_paths=200,
                                  noise=NoiseSpec("brownian"))),
    ]
}


def list_scenarios() -> list[tuple[str, str]]:
    return [(s.name, s.description) for s in SCENARIOS.values()]


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise UnknownScenario(name) from None


def build_problem(cfg: ExperimentConfig) -> SdeProblem:
    return get_scenario(cfg.scenario).build(cfg)
