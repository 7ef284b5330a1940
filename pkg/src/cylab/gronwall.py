"""Pathwise checks of the log-supremum inequality and ucp decay of feedback families.

For a strictly positive scalar path ``X`` with running maximum ``X*`` the
inequality reads

    ln(X*(T) / X(0))  <=  max_j | sum_{i<=j} (X_i - X_{i-1}) / X*_{i-1} |

and :func:`log_supremum_margins` returns ``RHS - LHS`` for a whole batch of
paths at once.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .hilbert import ContractionSemigroup, DomainError
from .metrics import MetricEstimate, ducp_from_differences
from .noise import NoiseModel, brownian, sample_bundle, uniform_grid
from .paths import GridPath


VIOLATION_TOL = 1e-10


def log_supremum_margins(paths) -> np.ndarray:
    """``RHS - LHS`` for each row of ``paths`` (shape ``(P, n+1)``)."""
    X = np.atleast_2d(np.asarray(paths, dtype=np.float64))
    if not np.all(np.isfinite(X)):
        raise DomainError("path values must be finite")
    if np.any(X <= 0):
        raise DomainError("paths must be strictly positive")
    run_max = np.maximum.accumulate(X, axis=1)
    lhs = np.log(run_max[:, -1] / X[:, 0])
    integrand = np.diff(X, axis=1) / run_max[:, :-1]
    partial = np.cumsum(integrand, axis=1)
    rhs = np.max(np.abs(partial), axis=1, initial=0.0)
    return rhs - lhs


def check_log_supremum_inequality(X) -> float:
    """Margin ``RHS - LHS`` for one scalar path (a GridPath or a 1-d array)."""
    values = X.values[:, 0] if isinstance(X, GridPath) else np.asarray(X, dtype=np.float64)
    if values.ndim != 1:
        raise DomainError("expected a scalar path")
    return float(log_supremum_margins(values[None, :])[0])


@dataclass
class GronwallReport:
    n_paths: int
    violations: int
    worst_margin: float
    family: str = ""
    violating_indices: list = field(default_factory=list)

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("violating_indices")
        return d


def report_margins(margins, family: str = "") -> GronwallReport:
    margins = np.asarray(margins)
    bad = np.flatnonzero(margins < -VIOLATION_TOL)
    return GronwallReport(int(margins.size), int(bad.size), float(margins.min()), family,
                          bad.tolist())


def dump_violations(path, paths, report: GronwallReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_index", "step", "value"])
        for p in report.violating_indices:
            for j, v in enumerate(paths[p]):
                w.writerow([p, j, repr(float(v))])


# ------------------------------------------------------------- path families


def gaussian_family(n_paths: int, n_steps: int, seed: int = 0, vol: float = 1.0) -> np.ndarray:
    """Exponentials of Brownian random walks started at 1."""
    gen = np.random.default_rng(seed)
    steps = vol * gen.standard_normal((n_paths, n_steps)) / np.sqrt(n_steps)
    return np.exp(np.concatenate([np.zeros((n_paths, 1)), np.cumsum(steps, axis=1)], axis=1))


def stable_family(n_paths: int, n_steps: int, seed: int = 0, alpha: float = 1.2) -> np.ndarray:
    """Exponentials of symmetric stable walks; heavy tails give large jumps both ways."""
    from scipy.stats import levy_stable

    steps = levy_stable.rvs(alpha, 0.0, scale=n_steps ** (-1 / alpha), size=(n_paths, n_steps),
                            random_state=np.random.default_rng(seed))
    walk = np.concatenate([np.zeros((n_paths, 1)), np.cumsum(0.5 * steps, axis=1)], axis=1)
    return np.exp(np.clip(walk, -200.0, 200.0))


def jump_family(n_paths: int, n_steps: int, seed: int = 0) -> np.ndarray:
    """Hand-built adversarial shapes: sawtooths, crashes, spikes and random multiplicative jumps."""
    gen = np.random.default_rng(seed)
    out = np.empty((n_paths, n_steps + 1))
    j = np.arange(n_steps + 1)
    for p in range(n_paths):
        kind = p % 5
        if kind == 0:
            log_factors = np.log(gen.uniform(0.01, 100.0, n_steps))
            out[p] = _exp_walk(log_factors)
        elif kind == 1:
            hi = gen.uniform(1.0, 50.0)
            out[p] = np.where(j % 2 == 0, 1.0, hi)
        elif kind == 2:
            out[p] = 1.0 + gen.uniform(0, 10) * (j == gen.integers(1, n_steps + 1))
        elif kind == 3:
            out[p] = np.exp(-gen.uniform(0, 20) * (j >= gen.integers(1, n_steps + 1)))
        else:
            mask = gen.random(n_steps) < 0.1
            out[p] = gen.uniform(0.1, 10.0) * _exp_walk(np.where(mask, 3 * gen.standard_normal(n_steps), 0.0))
    return out


def _exp_walk(log_steps):
    """``exp`` of a walk started at 0, clipped so every value stays finite and positive."""
    return np.exp(np.clip(np.concatenate([[0.0], np.cumsum(log_steps)]), -600.0, 600.0))


FAMILIES: dict[str, Callable[..., np.ndarray]] = {
    "gaussian": gaussian_family,
    "alpha_stable": stable_family,
    "adversarial_jumps": jump_family,
}


def run_families(n_paths: int = 10_000, n_steps: int = 64, seed: int = 0) -> list[GronwallReport]:
    return [report_margins(log_supremum_margins(make(n_paths, n_steps, seed=seed)), name)
            for name, make in FAMILIES.items()]


# --------------------------------------------------- ucp convergence families


class FeedbackBoundViolation(DomainError):
    def __init__(self, n, t, path):
        super().__init__(f"feedback bound violated for n={n} at t={t} on path {path}")
        self.n, self.t, self.path = n, t, path


def _identity_feedback(y):
    return y


def _single_column(y, d_U):
    g = np.zeros((y.size, d_U))
    g[:, 0] = y
    return g


def bounded_perturbation(grid: np.ndarray, dim: int) -> np.ndarray:
    """A smooth deterministic path with sup-norm at most 1."""
    k = np.arange(1, dim + 1)
    return np.sin(np.pi * np.outer(grid, k)) / np.sqrt(dim)


@dataclass
class FeedbackFamily:
    """Ingredients of ``Y_n = S(t)(int F_n ds + int G_n dL) + C_n``.

    ``drift``/``diffusion`` map the current value to vectors/operators with
    norm at most the current norm; they are scaled by ``K1``/``K2``.
    ``perturbation(n, grid)`` gives the deterministic ``C_n`` on the grid.
    """

    K1: float
    K2: float
    semigroup: ContractionSemigroup
    noise: NoiseModel
    perturbation: Callable[[int, np.ndarray], np.ndarray]
    drift: Callable | None = None
    diffusion: Callable | None = None
    T: float = 1.0
    n_steps: int = 64

    @property
    def dim(self) -> int:
        return self.semigroup.dim


def default_family(K1: float = 0.5, K2: float = 0.5, dim: int = 4, n_steps: int = 64,
                   scale: float = 1.0) -> FeedbackFamily:
    grid = uniform_grid(1.0, n_steps)
    base = bounded_perturbation(grid, dim)
    return FeedbackFamily(
        K1=K1, K2=K2,
        semigroup=ContractionSemigroup(np.arange(1.0, dim + 1)),
        noise=brownian(dim),
        perturbation=lambda n, g: scale * base / n,
        n_steps=n_steps,
    )


def simulate_feedback(family: FeedbackFamily, n: int, seed: int) -> GridPath:
    """One path of ``Y_n``; the coefficients on piece ``i`` only see ``Y`` up to ``t_i``."""
    grid = uniform_grid(family.T, family.n_steps)
    bundle = sample_bundle(family.noise, grid, seed)
    C = np.asarray(family.perturbation(n, grid), dtype=np.float64)
    d = family.dim
    if C.shape != (grid.size, d):
        raise DomainError(f"perturbation has shape {C.shape}, expected {(grid.size, d)}")
    f = family.drift or _identity_feedback
    g = family.diffusion or (lambda y: _single_column(y, bundle.d_U))
    dt = np.diff(grid)
    Y = np.empty((grid.size, d))
    Y[0] = C[0]
    integral = np.zeros(d)
    run_max = np.linalg.norm(Y[0])
    slack = 1 + 1e-12
    for i in range(grid.size - 1):
        Fi = family.K1 * np.asarray(f(Y[i]), dtype=np.float64)
        Gi = family.K2 * np.asarray(g(Y[i]), dtype=np.float64)
        if (np.linalg.norm(Fi) > family.K1 * run_max * slack
                or np.linalg.norm(Gi, 2) > family.K2 * run_max * slack):
            raise FeedbackBoundViolation(n, float(grid[i]), seed)
        integral = integral + Fi * dt[i] + Gi @ bundle.increments[i]
        Y[i + 1] = family.semigroup.apply(grid[i + 1], integral) + C[i + 1]
        run_max = max(run_max, np.linalg.norm(Y[i + 1]))
    return GridPath(grid, Y)


def gronwall_convergence_experiment(family: FeedbackFamily, ns=(1, 4, 16, 64), n_paths: int = 200,
                                    seed_base: int = 0, threshold: float | None = None) -> dict:
    """Estimate ``ducp(Y_n, 0)`` for each ``n`` using the same seeds for every ``n``.

    If ``threshold`` is given, the estimate at the largest ``n`` must fall
    below it; the outcome is recorded under ``"passed"``.
    """
    rows = []
    for n in ns:
        paths = [simulate_feedback(family, n, seed_base + p) for p in range(n_paths)]
        est: MetricEstimate = ducp_from_differences(paths, family.T, seed_base=seed_base)
        rows.append({"n": int(n), "ducp": est.value, "std_error": est.std_error})
    out = {"K1": family.K1, "K2": family.K2, "n_paths": n_paths, "seed_base": seed_base,
           "rows": rows, "threshold": threshold}
    if threshold is not None:
        out["passed"] = bool(rows[-1]["ducp"] < threshold)
    return out
