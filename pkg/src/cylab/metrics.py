"""Monte Carlo estimators of ucp and Émery-type distances.

The Émery-type distances take a supremum over predictable step processes of
operators with norm at most one.  That supremum is not computable, so every
estimator here evaluates a finite family of such processes and reports the
best one; the result is a lower bound and is tagged with the family used
(``identity`` < ``random_gamma`` < ``greedy_gamma``, each family containing
the previous one).  Scalar problems with at most 12 steps can instead be
solved by enumerating every sign-valued deterministic process.

Samplers are callables ``seed -> GridPath``; ``X_sampler(s)`` and
``Y_sampler(s)`` must be built on the same noise for the same seed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .hilbert import DomainError
from .paths import GridPath

STRATEGIES = ("identity", "random_gamma", "greedy_gamma")
MAX_ENUMERATION_STEPS = 12


@dataclass(frozen=True)
class MetricEstimate:
    metric: str
    value: float
    std_error: float
    n_paths: int
    strategy: str
    seed_base: int = 0

    def to_json(self) -> dict:
        return asdict(self)


def _horizon_index(grid: np.ndarray, T: float) -> int:
    """Last grid index with ``t <= T``."""
    return int(np.searchsorted(grid, T + 1e-12 * max(1.0, abs(T)), side="right") - 1)


def _mean_se(samples) -> tuple[float, float]:
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 2:
        raise DomainError("need at least two paths")
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def _differences(X_sampler, Y_sampler, n_paths, seed_base) -> list[GridPath]:
    if n_paths < 2:
        raise DomainError("n_paths must be at least 2")
    return [X_sampler(seed_base + p) - Y_sampler(seed_base + p) for p in range(n_paths)]


def ducp_from_differences(diffs: Sequence[GridPath], T: float, strategy: str = "identity",
                          seed_base: int = 0) -> MetricEstimate:
    samples = []
    for Z in diffs:
        m = _horizon_index(Z.grid, T)
        samples.append(min(float(np.max(np.linalg.norm(Z.values[: m + 1], axis=1))), 1.0))
    mean, se = _mean_se(samples)
    return MetricEstimate("ducp", mean, se, len(samples), strategy, seed_base)


def estimate_ducp(X_sampler: Callable, Y_sampler: Callable, T: float, n_paths: int,
                  seed_base: int = 0) -> MetricEstimate:
    """``E[sup_{t <= T} |X(t) - Y(t)| ∧ 1]`` with its standard error."""
    return ducp_from_differences(_differences(X_sampler, Y_sampler, n_paths, seed_base), T,
                                 seed_base=seed_base)


# ------------------------------------------------------------------ Γ families


def _stack(diffs: Sequence[GridPath], T: float) -> np.ndarray:
    """Values of all difference paths up to the horizon, shape ``(P, m+1, d)``."""
    m = _horizon_index(diffs[0].grid, T)
    for Z in diffs:
        if Z.grid.shape != diffs[0].grid.shape or not np.array_equal(Z.grid, diffs[0].grid):
            raise DomainError("all sampled paths must share one grid")
    return np.stack([Z.values[: m + 1] for Z in diffs])


def _objective(Z: np.ndarray, gamma0: np.ndarray, pieces: np.ndarray, include_atom: bool,
               endpoint: bool) -> np.ndarray:
    """Per-path ``sup_t |Gamma(0) Z(0) + int Gamma dZ| ∧ 1`` (or the value at ``T`` only).

    ``pieces`` has shape ``(m, d, d)`` (deterministic) or ``(P, m, d, d)``.
    """
    dZ = np.diff(Z, axis=1)
    if pieces.ndim == 3:
        contrib = np.einsum("mab,pmb->pma", pieces, dZ)
    else:
        contrib = np.einsum("pmab,pmb->pma", pieces, dZ)
    path = np.concatenate([np.zeros_like(Z[:, :1]), np.cumsum(contrib, axis=1)], axis=1)
    if include_atom:
        path = path + np.einsum("ab,pb->pa", gamma0, Z[:, 0])[:, None, :]
    norms = np.linalg.norm(path, axis=2)
    value = norms[:, -1] if endpoint else norms.max(axis=1)
    return np.minimum(value, 1.0)


def _random_gammas(m: int, d: int, n_gamma: int, seed: int):
    gen = np.random.default_rng([seed, 0x5EED])
    for _ in range(n_gamma):
        A = gen.standard_normal((m, d, d))
        s = np.linalg.norm(A, ord=2, axis=(1, 2))
        yield A / s[:, None, None]


def _householder_align(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Orthogonal maps sending direction ``a[p]`` to direction ``b[p]`` (identity if either is 0)."""
    P, d = a.shape
    na = np.linalg.norm(a, axis=1, keepdims=True)
    nb = np.linalg.norm(b, axis=1, keepdims=True)
    ok = (na[:, 0] > 0) & (nb[:, 0] > 0)
    ua = np.where(na > 0, a / np.where(na > 0, na, 1.0), 0.0)
    ub = np.where(nb > 0, b / np.where(nb > 0, nb, 1.0), 0.0)
    w = ua - ub
    nw2 = np.sum(w * w, axis=1)
    use = ok & (nw2 > 1e-30)
    H = np.broadcast_to(np.eye(d), (P, d, d)).copy()
    ww = np.einsum("pa,pb->pab", w, w) / np.where(use, nw2, 1.0)[:, None, None]
    H[use] -= 2.0 * ww[use]
    return H


def _greedy_objective(Z: np.ndarray, drift: np.ndarray, include_atom: bool, endpoint: bool) -> np.ndarray:
    """Adapted adversary: on piece ``i`` reflect the predicted increment onto the running integral.

    ``drift[i]`` is a deterministic forecast of the increment on piece ``i``
    (estimated on pilot paths), and the running integral is known at ``t_i``,
    so the resulting step process is predictable.
    """
    P, m1, d = Z.shape
    dZ = np.diff(Z, axis=1)
    running = Z[:, 0].copy() if include_atom else np.zeros((P, d))
    best = np.linalg.norm(running, axis=1)
    for i in range(m1 - 1):
        G = _householder_align(np.broadcast_to(drift[i], (P, d)), running)
        running = running + np.einsum("pab,pb->pa", G, dZ[:, i])
        best = np.maximum(best, np.linalg.norm(running, axis=1))
    value = np.linalg.norm(running, axis=1) if endpoint else best
    return np.minimum(value, 1.0)


def _estimate_em(metric: str, X_sampler, Y_sampler, T, n_paths, n_gamma, strategy,
                 include_atom, seed_base, endpoint, n_pilot) -> MetricEstimate:
    if strategy not in STRATEGIES:
        raise DomainError(f"unknown strategy {strategy!r}")
    diffs = _differences(X_sampler, Y_sampler, n_paths, seed_base)
    Z = _stack(diffs, T)
    P, m1, d = Z.shape
    eye = np.eye(d)
    candidates = [_objective(Z, eye, np.broadcast_to(eye, (m1 - 1, d, d)), include_atom, endpoint)]
    if strategy in ("random_gamma", "greedy_gamma"):
        for pieces in _random_gammas(m1 - 1, d, n_gamma, seed_base):
            candidates.append(_objective(Z, eye, pieces, include_atom, endpoint))
    if strategy == "greedy_gamma":
        pilot_seeds = range(seed_base + n_paths, seed_base + n_paths + (n_pilot or n_paths))
        pilot = _stack([X_sampler(s) - Y_sampler(s) for s in pilot_seeds], T)
        drift = np.diff(pilot, axis=1).mean(axis=0)
        candidates.append(_greedy_objective(Z, drift, include_atom, endpoint))
    stats = [_mean_se(c) for c in candidates]
    k = int(np.argmax([s[0] for s in stats]))
    return MetricEstimate(metric, stats[k][0], stats[k][1], P, strategy, seed_base)


def estimate_dem(X_sampler: Callable, Y_sampler: Callable, T: float, n_paths: int,
                 n_gamma: int = 8, strategy: str = "greedy_gamma", include_atom: bool = True,
                 seed_base: int = 0, n_pilot: int | None = None) -> MetricEstimate:
    """Lower bound for ``sup_Gamma E[sup_{t<=T} |Gamma(0)Z(0) + int Gamma dZ| ∧ 1]``, ``Z = X - Y``."""
    return _estimate_em("dem", X_sampler, Y_sampler, T, n_paths, n_gamma, strategy,
                        include_atom, seed_base, False, n_pilot)


def estimate_rho_em(X_sampler: Callable, Y_sampler: Callable, T: float, n_paths: int,
                    n_gamma: int = 8, strategy: str = "greedy_gamma", include_atom: bool = True,
                    seed_base: int = 0, n_pilot: int | None = None) -> MetricEstimate:
    """As :func:`estimate_dem` but evaluated at ``T`` only, without the time supremum."""
    return _estimate_em("rho_em", X_sampler, Y_sampler, T, n_paths, n_gamma, strategy,
                        include_atom, seed_base, True, n_pilot)


def enumerate_sign_gammas(diffs: Sequence[GridPath], T: float, include_atom: bool = True,
                          endpoint: bool = False, chunk: int = 256) -> tuple[float, np.ndarray]:
    """Exact maximum over deterministic ``Gamma_0, Gamma_i in {-1, +1}`` for scalar paths.

    Returns the best mean objective and the maximising signs of the pieces.
    Limited to ``MAX_ENUMERATION_STEPS`` intervals; paths are processed in
    chunks of ``chunk`` to bound memory.  The maximum is taken in-sample, so
    with few paths and noisy increments it is biased upwards.
    """
    Z = _stack(diffs, T)
    P, m1, d = Z.shape
    if d != 1:
        raise DomainError("sign enumeration is for scalar paths")
    m = m1 - 1
    if m > MAX_ENUMERATION_STEPS:
        raise DomainError(f"enumeration limited to {MAX_ENUMERATION_STEPS} steps, got {m}")
    signs = np.array(list(itertools.product((1.0, -1.0), repeat=m)))  # (2^m, m)
    totals = {1.0: np.zeros(len(signs)), -1.0: np.zeros(len(signs))}
    for lo in range(0, P, chunk):
        Zc = Z[lo:lo + chunk, :, 0]
        partial = np.cumsum(signs[:, None, :] * np.diff(Zc, axis=1)[None], axis=2)
        for g0 in (1.0, -1.0):
            base = g0 * Zc[:, 0] if include_atom else np.zeros(Zc.shape[0])
            path = base[None, :, None] + partial
            val = np.abs(path[..., -1]) if endpoint else np.maximum(np.abs(path).max(axis=2),
                                                                     np.abs(base)[None, :])
            totals[g0] += np.minimum(val, 1.0).sum(axis=1)
    best = np.maximum(totals[1.0], totals[-1.0]) / P
    k = int(np.argmax(best))
    return float(best[k]), signs[k]


def weighted_series(estimator: Callable[[float], MetricEstimate], T: float) -> MetricEstimate:
    """``sum_{k=1}^{ceil T} 2^-k d_k`` with the tail bound ``2^-ceil(T)`` added to the error."""
    K = max(1, math.ceil(T))
    value, err = 0.0, 0.0
    est = None
    for k in range(1, K + 1):
        est = estimator(float(k))
        value += est.value / 2**k
        err += est.std_error / 2**k
    return MetricEstimate(est.metric + "_series", value, err + 2.0**-K, est.n_paths,
                          est.strategy, est.seed_base)
