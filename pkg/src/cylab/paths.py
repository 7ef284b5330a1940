"""Piecewise-constant càdlàg paths on a time grid and their integrals.

Conventions
-----------
A :class:`GridPath` is constant on ``[t_j, t_{j+1})``; its left limit at any
``s`` in ``(t_j, t_{j+1}]`` is ``values[j]``.  Step integrands hold
``pieces[i]`` on ``(t_i, t_{i+1}]``, so an integrand built from ``X(s-)`` uses
``values[i]`` on piece ``i`` and is predictable by construction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .hilbert import ContractionSemigroup, DomainError
from .noise import NoisePathBundle, check_grid

_OPNORM_SLACK = 1e-12


class GridMismatch(DomainError):
    pass


def _frozen(arr, dtype=np.float64) -> np.ndarray:
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


def _same_grid(a, b) -> None:
    if a.shape != b.shape or not np.array_equal(a, b):
        raise GridMismatch("objects live on different grids")


@dataclass(frozen=True)
class GridPath:
    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = check_grid(self.grid)
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2 or vals.shape[0] != grid.shape[0]:
            raise DomainError(f"values shape {vals.shape} does not fit a grid of {grid.shape[0]} times")
        if not np.all(np.isfinite(vals)):
            raise DomainError("path has non-finite values")
        object.__setattr__(self, "grid", _frozen(grid))
        object.__setattr__(self, "values", _frozen(vals))

    @classmethod
    def zeros(cls, grid, dim: int) -> "GridPath":
        return cls(grid, np.zeros((len(grid), dim)))

    @classmethod
    def constant(cls, grid, v) -> "GridPath":
        v = np.atleast_1d(np.asarray(v, dtype=np.float64))
        return cls(grid, np.broadcast_to(v, (len(grid), v.shape[0])))

    @property
    def n(self) -> int:
        return self.grid.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    def _index(self, s: float) -> int:
        if s < 0 or s > self.grid[-1]:
            raise DomainError(f"time {s} outside [0, {self.grid[-1]}]")
        return int(np.searchsorted(self.grid, s, side="right") - 1)

    def value_at(self, s: float) -> np.ndarray:
        return self.values[self._index(s)]

    def left_value(self, s: float) -> np.ndarray:
        """``X(s-)``; equals ``values[j]`` for ``s`` in ``(t_j, t_{j+1}]``."""
        if s <= 0:
            raise DomainError("left limits exist only for s > 0")
        j = int(np.searchsorted(self.grid, s, side="left") - 1)
        return self.values[j]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=1)

    def sup_norm(self) -> float:
        return float(self.norms().max())

    def running_sup(self) -> np.ndarray:
        """``X*(t_j) = max_{i <= j} |X(t_i)|``."""
        return np.maximum.accumulate(self.norms())

    def __add__(self, other: "GridPath") -> "GridPath":
        _same_grid(self.grid, other.grid)
        return GridPath(self.grid, self.values + other.values)

    def __sub__(self, other: "GridPath") -> "GridPath":
        _same_grid(self.grid, other.grid)
        return GridPath(self.grid, self.values - other.values)

    def __neg__(self) -> "GridPath":
        return GridPath(self.grid, -self.values)

    def scale(self, c: float) -> "GridPath":
        return GridPath(self.grid, c * self.values)

    def apply(self, B) -> "GridPath":
        """Apply a fixed matrix ``B`` to every value."""
        return GridPath(self.grid, self.values @ np.asarray(B, dtype=np.float64).T)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time"] + [f"coord_{k}" for k in range(self.dim)])
            for t, row in zip(self.grid, self.values):
                w.writerow([repr(float(t))] + [repr(float(x)) for x in row])


@dataclass(frozen=True)
class SimpleHsProcess:
    """Predictable step process with ``pieces[i]`` (a ``d_H x d_U`` matrix) on ``(t_i, t_{i+1}]``."""

    grid: np.ndarray
    pieces: np.ndarray

    def __post_init__(self):
        grid = check_grid(self.grid)
        pieces = np.array(self.pieces, dtype=np.float64)
        if pieces.ndim != 3 or pieces.shape[0] != grid.shape[0] - 1:
            raise DomainError(f"pieces shape {pieces.shape} does not fit {grid.shape[0] - 1} intervals")
        object.__setattr__(self, "grid", _frozen(grid))
        object.__setattr__(self, "pieces", _frozen(pieces))

    @classmethod
    def constant(cls, grid, F) -> "SimpleHsProcess":
        F = np.asarray(F, dtype=np.float64)
        return cls(grid, np.broadcast_to(F, (len(grid) - 1,) + F.shape))

    @property
    def n(self) -> int:
        return self.pieces.shape[0]

    def left_multiply(self, B) -> "SimpleHsProcess":
        """``B Psi`` for a fixed matrix ``B``."""
        return SimpleHsProcess(self.grid, np.einsum("vh,ihu->ivu", np.asarray(B, dtype=np.float64), self.pieces))

    def mask(self, keep) -> "SimpleHsProcess":
        """Zero every piece where ``keep[i]`` is false."""
        keep = np.asarray(keep, dtype=bool)
        return SimpleHsProcess(self.grid, self.pieces * keep[:, None, None])

    def scale_pieces(self, z) -> "SimpleHsProcess":
        """Multiply piece ``i`` by the scalar ``z[i]``."""
        return SimpleHsProcess(self.grid, self.pieces * np.asarray(z, dtype=np.float64)[:, None, None])


@dataclass(frozen=True)
class SimpleOperatorProcess:
    """Step process of operators on ``H`` with operator norm at most one.

    ``gamma0`` acts on the atom at time zero; ``pieces[i]`` acts on ``(t_i, t_{i+1}]``.
    """

    grid: np.ndarray
    gamma0: np.ndarray
    pieces: np.ndarray

    def __post_init__(self):
        grid = check_grid(self.grid)
        g0 = np.array(self.gamma0, dtype=np.float64)
        pieces = np.array(self.pieces, dtype=np.float64)
        if pieces.ndim != 3 or pieces.shape[0] != grid.shape[0] - 1:
            raise DomainError(f"pieces shape {pieces.shape} does not fit {grid.shape[0] - 1} intervals")
        if g0.shape != pieces.shape[1:]:
            raise DomainError("gamma0 and pieces must have the same operator shape")
        norms = np.linalg.norm(pieces, ord=2, axis=(1, 2)) if pieces.size else np.zeros(0)
        worst = max(float(norms.max(initial=0.0)), float(np.linalg.norm(g0, 2)) if g0.size else 0.0)
        if worst > 1.0 + _OPNORM_SLACK:
            raise DomainError(f"operator norm {worst} exceeds 1")
        object.__setattr__(self, "grid", _frozen(grid))
        object.__setattr__(self, "gamma0", _frozen(g0))
        object.__setattr__(self, "pieces", _frozen(pieces))

    @classmethod
    def identity(cls, grid, dim: int) -> "SimpleOperatorProcess":
        eye = np.eye(dim)
        return cls(grid, eye, np.broadcast_to(eye, (len(grid) - 1, dim, dim)))


@dataclass(frozen=True)
class GridStoppingTime:
    """Grid index of a stopping time; ``index=None`` stands for ``+inf``."""

    index: int | None = None

    def __post_init__(self):
        if self.index is not None and self.index < 0:
            raise DomainError("stopping index must be non-negative")

    @property
    def infinite(self) -> bool:
        return self.index is None

    def clip(self, n: int) -> int:
        return n if self.index is None else min(self.index, n)

    @classmethod
    def first_hit(cls, condition) -> "GridStoppingTime":
        """First index where the boolean sequence ``condition`` is true."""
        hits = np.flatnonzero(np.asarray(condition, dtype=bool))
        return cls(int(hits[0]) if hits.size else None)


# ------------------------------------------------------------------ integrals


def _cumulate(contrib: np.ndarray) -> np.ndarray:
    out = np.zeros((contrib.shape[0] + 1,) + contrib.shape[1:])
    np.cumsum(contrib, axis=0, out=out[1:])
    return out


def stochastic_integral(psi: SimpleHsProcess, bundle: NoisePathBundle) -> GridPath:
    """``I(psi)(t_j) = sum_{i<j} pieces[i] (L(t_{i+1}) - L(t_i))``."""
    _same_grid(psi.grid, bundle.grid)
    if psi.pieces.shape[2] != bundle.d_U:
        raise DomainError("integrand and noise disagree on d_U")
    contrib = np.einsum("ihu,iu->ih", psi.pieces, bundle.increments)
    return GridPath(psi.grid, _cumulate(contrib))


def path_integral(pieces, X: GridPath) -> GridPath:
    """``sum_{i<j} pieces[i] (X(t_{i+1}) - X(t_i))`` for arbitrary step operators ``pieces``."""
    pieces = np.asarray(pieces, dtype=np.float64)
    if pieces.shape[0] != X.n or pieces.shape[2] != X.dim:
        raise DomainError(f"pieces shape {pieces.shape} does not fit path ({X.n}, {X.dim})")
    contrib = np.einsum("imd,id->im", pieces, X.increments)
    return GridPath(X.grid, _cumulate(contrib))


def functional_integral(phi, X: GridPath) -> GridPath:
    """Scalar path ``sum_{i<j} <phi[i], X(t_{i+1}) - X(t_i)>``."""
    return path_integral(np.asarray(phi, dtype=np.float64)[:, None, :], X)


def integrate_against_path(gamma: SimpleOperatorProcess, X: GridPath, include_atom: bool = True) -> GridPath:
    """``Gamma(0) X(0) + int_(0,t] Gamma dX`` on the grid (atom behind a flag)."""
    _same_grid(gamma.grid, X.grid)
    out = path_integral(gamma.pieces, X)
    if include_atom:
        out = GridPath(X.grid, out.values + gamma.gamma0 @ X.values[0])
    return out


def semigroup_convolution(grid, terms, semigroup: ContractionSemigroup | None = None,
                          method: str = "recursive") -> np.ndarray:
    """``out[j] = sum_{i<j} S(t_j - t_i) terms[i]`` with ``out[0] = 0``.

    ``method="direct"`` forms all ``S(t_j - t_i)`` explicitly (``O(n^2 d)``);
    ``method="recursive"`` uses ``S(t_{j+1} - t_i) = S(t_{j+1} - t_j) S(t_j - t_i)``
    in one forward sweep.
    """
    grid = np.asarray(grid, dtype=np.float64)
    terms = np.asarray(terms, dtype=np.float64)
    n = grid.shape[0] - 1
    if terms.shape[0] != n:
        raise DomainError("need one term per interval")
    if semigroup is None:
        return _cumulate(terms)
    if method == "direct":
        lag = grid[:, None] - grid[None, :-1]
        mask = lag > 0
        K = semigroup.factors(np.where(mask, lag, 0.0)) * mask[..., None]
        return np.einsum("jid,id->jd", K, terms)
    if method != "recursive":
        raise ValueError(f"unknown method {method!r}")
    step = semigroup.factors(np.diff(grid))
    out = np.zeros((n + 1, terms.shape[1]))
    acc = np.zeros(terms.shape[1])
    for i in range(n):
        acc = step[i] * (acc + terms[i])
        out[i + 1] = acc
    return out


def lebesgue_integral(f: GridPath, semigroup: ContractionSemigroup | None = None) -> GridPath:
    """Left-point rule ``out(t_j) = sum_{i<j} S(t_j - t_i) f(t_i) (t_{i+1} - t_i)``."""
    terms = f.values[:-1] * np.diff(f.grid)[:, None]
    return GridPath(f.grid, semigroup_convolution(f.grid, terms, semigroup))


def stieltjes_integral(weights, A: GridPath) -> GridPath:
    """``sum_{i<j} weights[i] (A(t_{i+1}) - A(t_i))``, weights scalar per piece."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (A.n,):
        raise DomainError("need one weight per interval")
    return GridPath(A.grid, _cumulate(w[:, None] * A.increments))


# --------------------------------------------------------- quadratic variation


def quadratic_variation(X: GridPath) -> GridPath:
    """``[X](t_j) = sum_{1 <= i <= j} |X(t_i) - X(t_{i-1})|^2`` as a scalar path."""
    inc = X.increments
    return GridPath(X.grid, _cumulate(np.sum(inc * inc, axis=1)))


def covariation(X: GridPath, Y: GridPath) -> GridPath:
    """Polarisation ``([X+Y] - [X-Y]) / 4``."""
    _same_grid(X.grid, Y.grid)
    plus = quadratic_variation(X + Y).values
    minus = quadratic_variation(X - Y).values
    return GridPath(X.grid, (plus - minus) / 4.0)


def ito_remainder(X: GridPath) -> GridPath:
    """``|X(t)|^2 - |X(0)|^2 - 2 int <X(s-), .> dX(s)``; equals ``[X]`` on grids."""
    sq = np.sum(X.values**2, axis=1)
    integral = functional_integral(X.values[:-1], X).values[:, 0]
    return GridPath(X.grid, sq - sq[0] - 2.0 * integral)


def stop_path(X: GridPath, tau: GridStoppingTime) -> GridPath:
    """``X^tau(t_j) = X(t_{min(j, tau)})``."""
    idx = np.minimum(np.arange(X.n + 1), tau.clip(X.n))
    return GridPath(X.grid, X.values[idx])


def indicator_up_to(tau: GridStoppingTime, n: int) -> np.ndarray:
    """Pieces of ``1_{(0, tau]}``: piece ``i`` lives on ``(t_i, t_{i+1}]``, kept iff ``i < tau``."""
    return np.arange(n) < tau.clip(n)
