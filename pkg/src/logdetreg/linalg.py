"""Small dense symmetric-matrix kernel.

Everything the cost and inference layers need from linear algebra:
Cholesky-backed SPD matrices, log-determinants, inverses and
trace-of-product contractions. Matrices here are tiny (the output
dimension of the regression, typically 2), so everything is dense.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from .errors import AsymmetricInput, DimensionMismatch, NotPositiveDefinite

ASYMMETRY_RTOL = 1e-8


class RidgePolicy(enum.Enum):
    REJECT = "reject"
    JITTER = "jitter"


@dataclass(frozen=True)
class SpdMatrix:
    """Symmetric positive-definite matrix with a cached Cholesky factor.

    Immutable; construct through :func:`spd_from_symmetric`.  ``regularized``
    is True when the Jitter policy had to add a ridge before the
    factorization succeeded.
    """

    entries: np.ndarray
    chol: np.ndarray
    regularized: bool = field(default=False)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve ``self @ x = b`` using the cached factor."""
        return cho_solve((self.chol, True), b)


def spd_from_symmetric(m: np.ndarray, policy: RidgePolicy = RidgePolicy.REJECT) -> SpdMatrix:
    """Build an :class:`SpdMatrix` from a (near-)symmetric matrix.

    The input is symmetrized as ``(m + m.T) / 2`` before factorization;
    asymmetry beyond ``1e-8 * (1 + |entry|)`` raises :class:`AsymmetricInput`.
    Under ``RidgePolicy.JITTER`` a ridge ``lam * I`` with
    ``lam = 1e-8 * trace(m) / d`` is added and escalated by a factor of 100
    at most 3 times; the result is then flagged as regularized.  Under
    ``RidgePolicy.REJECT`` any Cholesky failure raises
    :class:`NotPositiveDefinite` (a meaningful signal: degenerate residuals).
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    asym = np.abs(m - m.T)
    if np.any(asym > ASYMMETRY_RTOL * (1.0 + np.abs(m))):
        raise AsymmetricInput("matrix asymmetry exceeds tolerance")
    sym = 0.5 * (m + m.T)

    try:
        return SpdMatrix(entries=sym, chol=np.linalg.cholesky(sym))
    except np.linalg.LinAlgError:
        if policy is RidgePolicy.REJECT:
            raise NotPositiveDefinite("Cholesky failed under Reject policy") from None

    d = sym.shape[0]
    lam = 1e-8 * np.trace(sym) / d
    if lam <= 0.0:
        lam = 1e-8
    for _ in range(3):
        try:
            ridged = sym + lam * np.eye(d)
            return SpdMatrix(entries=ridged, chol=np.linalg.cholesky(ridged), regularized=True)
        except np.linalg.LinAlgError:
            lam *= 100.0
    raise NotPositiveDefinite("Cholesky failed after jitter escalation")


def logdet(g: SpdMatrix) -> float:
    """log det of an SPD matrix, via the cached Cholesky diagonal."""
    return 2.0 * float(np.sum(np.log(np.diag(g.chol))))


def spd_inverse(g: SpdMatrix) -> SpdMatrix:
    """Inverse of an SPD matrix, returned as a valid :class:`SpdMatrix`."""
    inv = cho_solve((g.chol, True), np.eye(g.dim))
    return spd_from_symmetric(0.5 * (inv + inv.T))


def trace_product(g_inv: SpdMatrix, a: np.ndarray) -> float:
    """``tr(g_inv @ a)`` without materializing the product."""
    a = np.asarray(a, dtype=float)
    if a.shape != g_inv.entries.shape:
        raise DimensionMismatch(f"trace_product: {g_inv.entries.shape} vs {a.shape}")
    return float(np.sum(g_inv.entries * a.T))
