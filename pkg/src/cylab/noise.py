"""Cylindrical Lévy noise: models, path sampling and integrability functionals.

A cylindrical process on ``U`` is only ever evaluated on the first ``d_U``
basis directions, ``l_k(t) = L(t) e_k``, and pushed into ``H`` through
Hilbert-Schmidt operators.  Three jump families are shipped on top of an
optional Gaussian part: none, symmetric alpha-stable (independent
coordinates) and compound Poisson with Gaussian jump vectors.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import stats

from . import rng
from .hilbert import DomainError, as_operator, as_vector, hs_norm


@dataclass(frozen=True)
class NoJumps:
    pass


@dataclass(frozen=True)
class AlphaStable:
    """Symmetric stable coordinates with symbol ``-scale**alpha * |u_k|**alpha``."""

    alpha: float
    scale: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise DomainError(f"alpha must lie in (0, 2), got {self.alpha}")
        if not self.scale > 0.0:
            raise DomainError(f"scale must be positive, got {self.scale}")

    @property
    def levy_density_constant(self) -> float:
        """``c`` such that the coordinate Lévy measure is ``c scale^alpha |x|^(-1-alpha) dx``."""
        a = self.alpha
        return math.gamma(1.0 + a) * math.sin(math.pi * a / 2.0) / math.pi


@dataclass(frozen=True)
class CompoundPoisson:
    """Jumps at rate ``rate``; each jump is a vector with independent
    ``N(jump_mean_k, jump_scale_k**2)`` coordinates."""

    rate: float
    jump_mean: float | tuple = 0.0
    jump_scale: float | tuple = 1.0

    def __post_init__(self):
        if not self.rate > 0.0:
            raise DomainError(f"rate must be positive, got {self.rate}")
        if np.any(np.asarray(self.jump_scale) < 0):
            raise DomainError("jump_scale must be non-negative")

    def mean(self, d: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.jump_mean, dtype=np.float64), (d,)).copy()

    def scale(self, d: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.jump_scale, dtype=np.float64), (d,)).copy()

    @property
    def symmetric(self) -> bool:
        return bool(np.all(np.asarray(self.jump_mean) == 0.0))


JumpSpec = Union[NoJumps, AlphaStable, CompoundPoisson]


@dataclass(frozen=True)
class LevyCharacteristics:
    """Gaussian covariance ``Q`` (or ``None``) and a jump specification.

    The drift symbol of every shipped model is implied by the family: zero for
    the Gaussian and stable parts, and the canonical truncated mean for pure
    compound Poisson jumps (see :meth:`NoiseModel.drift_symbol`).
    """

    gaussian_cov: np.ndarray | None = None
    jumps: JumpSpec = field(default_factory=NoJumps)


@dataclass(frozen=True)
class NoiseModel:
    characteristics: LevyCharacteristics
    d_U: int

    def __post_init__(self):
        if self.d_U < 1:
            raise DomainError("d_U must be at least 1")
        Q = self.characteristics.gaussian_cov
        if Q is not None:
            Q = np.asarray(Q, dtype=np.float64)
            if Q.shape != (self.d_U, self.d_U):
                raise DomainError(f"Q must be {self.d_U}x{self.d_U}, got {Q.shape}")
            if not np.allclose(Q, Q.T, atol=1e-12):
                raise DomainError("Q must be symmetric")
            if np.linalg.eigvalsh(Q).min() < -1e-12:
                raise DomainError("Q must be positive semidefinite")

    @property
    def Q(self) -> np.ndarray | None:
        Q = self.characteristics.gaussian_cov
        return None if Q is None else np.asarray(Q, dtype=np.float64)

    @property
    def jumps(self) -> JumpSpec:
        return self.characteristics.jumps

    @property
    def symmetric(self) -> bool:
        j = self.jumps
        return not isinstance(j, CompoundPoisson) or j.symmetric

    def symbol(self, u) -> complex:
        """Lévy exponent: ``E exp(i<u, L(t)>) = exp(t * symbol(u))``."""
        u = as_vector(u, self.d_U)
        s = 0.0 + 0.0j
        if self.Q is not None:
            s -= 0.5 * float(u @ self.Q @ u)
        j = self.jumps
        if isinstance(j, AlphaStable):
            s -= j.scale**j.alpha * float(np.sum(np.abs(u) ** j.alpha))
        elif isinstance(j, CompoundPoisson):
            mu, sd = j.mean(self.d_U), j.scale(self.d_U)
            phi_jump = np.exp(1j * float(u @ mu) - 0.5 * float(np.sum((sd * u) ** 2)))
            s += j.rate * (phi_jump - 1.0)
        return complex(s)

    def drift_symbol(self, u, n_mc: int = 200_000, seed: int = 0) -> float:
        """``a(u)`` under the truncation ``1_{|x| <= 1}``.

        Zero for symmetric models.  For pure compound Poisson jumps the
        exponent has no extra drift, so ``a(u) = rate * E[<u,J> 1{|<u,J>| <= 1}]``,
        estimated by Monte Carlo.
        """
        u = as_vector(u, self.d_U)
        if self.symmetric:
            return 0.0
        j = self.jumps
        J = _jump_sample(j, self.d_U, n_mc, seed)
        x = J @ u
        return float(j.rate * np.mean(np.where(np.abs(x) <= 1.0, x, 0.0)))


def brownian(d_U: int, cov=None) -> NoiseModel:
    Q = np.eye(d_U) if cov is None else np.asarray(cov, dtype=np.float64)
    if Q.ndim == 1:
        Q = np.diag(Q)
    return NoiseModel(LevyCharacteristics(gaussian_cov=Q), d_U)


def alpha_stable(d_U: int, alpha: float, scale: float = 1.0) -> NoiseModel:
    return NoiseModel(LevyCharacteristics(jumps=AlphaStable(alpha, scale)), d_U)


def compound_poisson(d_U: int, rate: float, jump_mean=0.0, jump_scale=1.0) -> NoiseModel:
    mean = jump_mean if np.isscalar(jump_mean) else tuple(float(x) for x in jump_mean)
    scale = jump_scale if np.isscalar(jump_scale) else tuple(float(x) for x in jump_scale)
    return NoiseModel(LevyCharacteristics(jumps=CompoundPoisson(rate, mean, scale)), d_U)


def characteristic_function(model: NoiseModel, u, t: float) -> complex:
    if t < 0:
        raise DomainError("t must be non-negative")
    return complex(np.exp(t * model.symbol(u)))


# ---------------------------------------------------------------- sampling


def check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.shape[0] < 2:
        raise DomainError("grid must be a 1-d array with at least two times")
    if grid[0] != 0.0:
        raise DomainError("grid must start at 0")
    if not np.all(np.diff(grid) > 0):
        raise DomainError("grid must be strictly increasing")
    return grid


def uniform_grid(T: float, n: int) -> np.ndarray:
    if n < 1 or not T > 0:
        raise DomainError("need n >= 1 and T > 0")
    return np.linspace(0.0, T, n + 1)


@dataclass(frozen=True)
class NoisePathBundle:
    """One realisation of the coordinate increments on a grid.

    ``increments[i, k] = l_k(t_{i+1}) - l_k(t_i)``.  ``jump_counts`` holds the
    number of compound-Poisson jumps per interval (``None`` for other models).
    """

    grid: np.ndarray
    increments: np.ndarray
    seed: int
    jump_counts: np.ndarray | None = None

    def __post_init__(self):
        for name in ("grid", "increments", "jump_counts"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.increments.shape[0]

    @property
    def d_U(self) -> int:
        return self.increments.shape[1]

    def cumulative(self) -> np.ndarray:
        """``l_k(t_j)`` for ``j = 0..n`` (shape ``(n+1, d_U)``)."""
        out = np.zeros((self.n + 1, self.d_U))
        np.cumsum(self.increments, axis=0, out=out[1:])
        return out

    def truncated_after(self, j: int) -> "NoisePathBundle":
        """Copy with every increment of index ``>= j`` set to zero."""
        inc = np.array(self.increments)
        inc[j:] = 0.0
        return NoisePathBundle(self.grid, inc, self.seed, self.jump_counts)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["interval_index", "coordinate", "increment"])
            for i in range(self.n):
                for k in range(self.d_U):
                    w.writerow([i, k, repr(float(self.increments[i, k]))])


def read_bundle_csv(path, grid, seed: int = 0) -> NoisePathBundle:
    """Inverse of :meth:`NoisePathBundle.to_csv` for replaying exported noise."""
    grid = check_grid(grid)
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append((int(row["interval_index"]), int(row["coordinate"]), float(row["increment"])))
    n = grid.shape[0] - 1
    d = 1 + max(r[1] for r in rows)
    inc = np.zeros((n, d))
    for i, k, x in rows:
        inc[i, k] = x
    return NoisePathBundle(grid, inc, seed)


def _cms_standard(u_v, u_w, alpha):
    """Chambers-Mallows-Stuck: symmetric stable with characteristic function exp(-|u|^alpha)."""
    V = np.pi * (u_v - 0.5)
    W = -np.log(u_w)
    if alpha == 1.0:
        return np.tan(V)
    return (np.sin(alpha * V) / np.cos(V) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * V) / W) ** ((1.0 - alpha) / alpha))


def _jump_sample(j: CompoundPoisson, d: int, n: int, seed: int) -> np.ndarray:
    """``n`` i.i.d. jump vectors, addressed on the AUX stream."""
    idx = np.arange(n)[:, None]
    k = np.arange(d)[None, :]
    z = rng.normals(seed, idx, k, 0, rng.AUX)
    return j.mean(d) + j.scale(d) * z


def _sqrt_psd(Q: np.ndarray) -> np.ndarray:
    if np.count_nonzero(Q - np.diag(np.diag(Q))) == 0:
        return np.diag(np.sqrt(np.clip(np.diag(Q), 0.0, None)))
    w, V = np.linalg.eigh(Q)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def sample_bundle(model: NoiseModel, grid, seed: int) -> NoisePathBundle:
    """Sample the coordinate increments of ``model`` over ``grid``.

    Draw ``(i, k)`` is keyed on ``(seed, i, k)`` only, so adding coordinates
    never changes existing ones (for diagonal ``Q``).
    """
    grid = check_grid(grid)
    dt = np.diff(grid)
    n, d = dt.shape[0], model.d_U
    i_idx = np.arange(n)[:, None]
    k_idx = np.arange(d)[None, :]
    inc = np.zeros((n, d))
    counts = None

    Q = model.Q
    if Q is not None:
        z = rng.normals(seed, i_idx, k_idx, 0, rng.GAUSS)
        inc += np.sqrt(dt)[:, None] * (z @ _sqrt_psd(Q).T)

    j = model.jumps
    if isinstance(j, AlphaStable):
        u = rng.uniforms(seed, i_idx, k_idx, 0, rng.STABLE)
        x = _cms_standard(u[..., 0], u[..., 1], j.alpha)
        inc += j.scale * dt[:, None] ** (1.0 / j.alpha) * x
    elif isinstance(j, CompoundPoisson):
        u = rng.uniforms(seed, np.arange(n), 0, 0, rng.POISSON)[:, 0]
        counts = stats.poisson.ppf(u, j.rate * dt).astype(np.int64)
        total = int(counts.sum())
        if total:
            owner = np.repeat(np.arange(n), counts)
            slot = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
            z = rng.normals(seed, owner[:, None], k_idx, slot[:, None] + 1, rng.JUMP)
            jumps = j.mean(d) + j.scale(d) * z
            np.add.at(inc, owner, jumps)
    return NoisePathBundle(grid, inc, int(seed), counts)


def coarsen(bundle: NoisePathBundle, factor: int) -> NoisePathBundle:
    """Aggregate ``factor`` consecutive intervals into one.

    Lévy increments add, so the coarse bundle is the same realisation seen on
    a coarser grid; this is how coupled grid-refinement studies are built.
    """
    if factor < 1 or bundle.n % factor:
        raise DomainError(f"factor {factor} must divide n = {bundle.n}")
    inc = bundle.increments.reshape(bundle.n // factor, factor, bundle.d_U).sum(axis=1)
    counts = None
    if bundle.jump_counts is not None:
        counts = bundle.jump_counts.reshape(-1, factor).sum(axis=1)
    return NoisePathBundle(bundle.grid[::factor], inc, bundle.seed, counts)


def apply_operator_to_increment(F, bundle: NoisePathBundle, i: int) -> np.ndarray:
    """The ``H``-valued random variable ``F (L(t_{i+1}) - L(t_i))``."""
    if not 0 <= i < bundle.n:
        raise IndexError(f"interval index {i} out of range [0, {bundle.n})")
    F = as_operator(F)
    if F.shape[1] != bundle.d_U:
        raise DomainError(f"operator has {F.shape[1]} columns, bundle has d_U = {bundle.d_U}")
    return F @ bundle.increments[i]


# ---------------------------------------------------------------- functionals


def _theta(x: np.ndarray) -> np.ndarray:
    """Truncation ``h -> h`` inside the unit ball, ``h/|h|`` outside (row-wise)."""
    nrm = np.linalg.norm(x, axis=-1, keepdims=True)
    return np.where(nrm <= 1.0, x, x / np.where(nrm == 0.0, 1.0, nrm))


def stable_zeta_constant(alpha: float, scale: float) -> float:
    """``zeta`` of a unit column: ``int (x^2 ∧ 1) c scale^alpha |x|^(-1-alpha) dx``."""
    c = AlphaStable(alpha, scale).levy_density_constant
    return c * scale**alpha * 4.0 / (alpha * (2.0 - alpha))


def zeta_L(model: NoiseModel, F, n_mc: int = 100_000, seed: int = 0,
           return_stderr: bool = False):
    """``int (|h|^2 ∧ 1) lambda_F(dh) + Tr(F Q F^T)``.

    Exact for the Gaussian and stable parts.  The compound Poisson part is a
    Monte Carlo mean over ``n_mc`` jumps; its standard error is returned when
    ``return_stderr`` is set (zero otherwise).
    """
    F = as_operator(F)
    if F.shape[1] != model.d_U:
        raise DomainError(f"operator has {F.shape[1]} columns, model has d_U = {model.d_U}")
    value, se = 0.0, 0.0
    Q = model.Q
    if Q is not None:
        value += float(np.trace(F @ Q @ F.T))
    j = model.jumps
    if isinstance(j, AlphaStable):
        col = np.linalg.norm(F, axis=0)
        value += stable_zeta_constant(j.alpha, j.scale) * float(np.sum(col**j.alpha))
    elif isinstance(j, CompoundPoisson) and np.any(F):
        FJ = _jump_sample(j, model.d_U, n_mc, seed) @ F.T
        y = np.minimum(np.sum(FJ * FJ, axis=1), 1.0)
        value += j.rate * float(y.mean())
        se = j.rate * float(y.std(ddof=1) / math.sqrt(n_mc))
    return (value, se) if return_stderr else value


def random_contraction(d: int, rng_: np.random.Generator) -> np.ndarray:
    """Random operator on R^d with operator norm exactly 1 (or 0 for d = 0)."""
    A = rng_.standard_normal((d, d))
    s = np.linalg.norm(A, 2)
    return A / s if s > 0 else A


def eta_L(model: NoiseModel, F, n_probe: int = 32, n_mc: int = 50_000, seed: int = 0) -> float:
    """``sup_{|O| <= 1} |a_{OF}|``.

    Exactly zero for symmetric models.  Otherwise a sampled lower bound over
    ``O = Id`` and ``n_probe`` random contractions, with ``a_{OF}`` the drift
    of the genuine Lévy process ``OFL``; for pure compound Poisson jumps this
    is ``rate * E[theta(O F J)]``.
    """
    F = as_operator(F)
    if model.symmetric or not np.any(F):
        return 0.0
    j = model.jumps
    FJ = _jump_sample(j, model.d_U, n_mc, seed) @ F.T
    gen = np.random.default_rng(seed)
    d = F.shape[0]
    best = np.linalg.norm(j.rate * _theta(FJ).mean(axis=0))
    for _ in range(n_probe):
        O = random_contraction(d, gen)
        best = max(best, np.linalg.norm(j.rate * _theta(FJ @ O.T).mean(axis=0)))
    return float(best)


def m_L(model: NoiseModel, psi, **kwargs) -> float:
    """Left-point Riemann sum of ``zeta_L + eta_L + (|psi|_HS^2 ∧ 1)`` over the grid.

    ``psi`` is any object with ``grid`` and ``pieces`` (a
    :class:`cylab.paths.SimpleHsProcess`).
    """
    dt = np.diff(psi.grid)
    total = 0.0
    cache: dict[bytes, float] = {}
    for i, piece in enumerate(psi.pieces):
        key = piece.tobytes()
        if key not in cache:
            h2 = hs_norm(piece) ** 2
            cache[key] = zeta_L(model, piece, **kwargs) + eta_L(model, piece) + min(h2, 1.0)
        total += cache[key] * dt[i]
    return float(total)


__all__ = [
    "AlphaStable", "CompoundPoisson", "LevyCharacteristics", "NoJumps", "NoiseModel",
    "NoisePathBundle", "alpha_stable", "apply_operator_to_increment", "brownian",
    "characteristic_function", "check_grid", "coarsen", "compound_poisson", "eta_L",
    "m_L", "read_bundle_csv", "sample_bundle", "stable_zeta_constant", "uniform_grid",
    "zeta_L",
]
