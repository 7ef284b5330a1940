"""Spectral truncations of the state and noise Hilbert spaces.

Vectors of the truncated state space are plain 1-d float arrays of length
``d_H``; Hilbert-Schmidt operators ``U -> H`` are 2-d arrays of shape
``(d_H, d_U)``.  The generator of the semigroup is never formed: a diagonal
contraction semigroup is stored through its decay rates only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """Raised when an operation is called outside its mathematical domain."""


def as_vector(v, dim: int | None = None) -> np.ndarray:
    """Return ``v`` as a finite float64 vector, optionally checking its length."""
    out = np.asarray(v, dtype=np.float64)
    if out.ndim != 1:
        raise DomainError(f"expected a 1-d vector, got shape {out.shape}")
    if dim is not None and out.shape[0] != dim:
        raise DomainError(f"expected a vector of length {dim}, got {out.shape[0]}")
    if not np.all(np.isfinite(out)):
        raise DomainError("vector has non-finite entries")
    return out


def as_operator(F) -> np.ndarray:
    out = np.asarray(F, dtype=np.float64)
    if out.ndim != 2:
        raise DomainError(f"expected a 2-d operator matrix, got shape {out.shape}")
    return out


def _scaled_l2(a: np.ndarray) -> float:
    # rescale first so tiny or huge entries neither underflow nor overflow when squared
    m = float(np.max(np.abs(a), initial=0.0))
    if m == 0.0 or not np.isfinite(m):
        return m
    b = a / m
    return m * float(np.sqrt(np.sum(b * b)))


def norm(v) -> float:
    return _scaled_l2(np.asarray(v, dtype=np.float64))


def hs_norm(F) -> float:
    """Hilbert-Schmidt norm, i.e. the Frobenius norm of the truncation."""
    return _scaled_l2(as_operator(F))


def adjoint(F) -> np.ndarray:
    """Adjoint ``H -> U`` of an operator ``U -> H`` (a transpose in real coordinates)."""
    return as_operator(F).T.copy()


def operator_norm(F) -> float:
    """Spectral norm (largest singular value)."""
    F = as_operator(F)
    if F.size == 0:
        return 0.0
    return float(np.linalg.norm(F, 2))


def power_iteration_norm(F, n_iter: int = 200, seed: int = 0) -> float:
    """Estimate the operator norm by power iteration on ``F^T F``.

    Used as an implementation-independent check of :func:`operator_norm`; the
    estimate approaches the true norm from below.
    """
    F = as_operator(F)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(F.shape[1])
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(n_iter):
        y = F.T @ (F @ x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        est = float(np.linalg.norm(F @ x))
    return est


@dataclass(frozen=True)
class ContractionSemigroup:
    """Diagonal semigroup ``S(t) = diag(exp(-lambda_k t))`` with ``lambda_k >= 0``."""

    spectrum: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.spectrum, dtype=np.float64)
        if lam.ndim != 1:
            raise DomainError("spectrum must be a 1-d array")
        if not np.all(np.isfinite(lam)) or np.any(lam < 0):
            raise DomainError("decay rates must be finite and non-negative")
        lam = lam.copy()
        lam.setflags(write=False)
        object.__setattr__(self, "spectrum", lam)

    @property
    def dim(self) -> int:
        return self.spectrum.shape[0]

    def factors(self, t) -> np.ndarray:
        """Diagonal of ``S(t)``; ``t`` may be an array, giving shape ``t.shape + (d,)``."""
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < 0):
            raise DomainError("semigroup time must be non-negative")
        return np.exp(-np.multiply.outer(t, self.spectrum))

    def apply(self, t: float, v) -> np.ndarray:
        return self.factors(t) * np.asarray(v, dtype=np.float64)


def apply_semigroup(sg: ContractionSemigroup, t: float, v) -> np.ndarray:
    if t < 0:
        raise DomainError(f"negative time {t}")
    return sg.apply(t, as_vector(v, sg.dim))
