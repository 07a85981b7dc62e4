"""Cost functions over residual sets.

Three costs: the mean squared error, generalized least squares with a
fixed weighting matrix, and the log-determinant of the empirical residual
covariance, together with the analytic gradient and Hessian of the latter.

With residuals ``r_t = y_t - F_w(z_t)`` and per-row Jacobians ``J_t``
(d x K), the building blocks are

* ``Gamma_n = (1/n) sum_t r_t r_t^T``,
* ``A_k = -(1/n) sum_t J_t[:, k] r_t^T``  so  ``dGamma/dw_k = A_k + A_k^T``,
* ``B_kl = (1/n) sum_t J_t[:, k] J_t[:, l]^T``,
* ``C_kl = -(1/n) sum_t r_t S_t[k, l]^T``  with ``S_t`` the second
  parameter derivatives.

Gradient: ``2 tr(G A_k)`` with ``G = Gamma_n^{-1}``, which collapses to
``-(2/n) sum_t J_t^T G r_t``.  Hessian: the derivative of the gradient,

``H[k, l] = -2 tr(G (A_l + A_l^T) G A_k) + 2 tr(G B_kl) + 2 tr(G C_kl)``,

symmetrized as ``(H + H^T) / 2``.  Both forms are validated against finite
differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import model as mdl
from .data import Dataset
from .errors import DimensionMismatch, NotPositiveDefinite
from .linalg import SpdMatrix, logdet, spd_from_symmetric

_SECOND_DERIV_CHUNK = 256


@dataclass
class ResidualSet:
    """Residuals of a model on a dataset, with lazily computed Jacobians."""

    residuals: np.ndarray
    spec: mdl.ModelSpec | None = None
    w: mdl.ParamVector | None = None
    inputs: np.ndarray | None = None
    _jacobians: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.residuals = np.asarray(self.residuals, dtype=float)
        if self.residuals.ndim != 2 or self.residuals.shape[0] < 1:
            raise DimensionMismatch("residuals must be a non-empty (n, d) matrix")
        if not np.all(np.isfinite(self.residuals)):
            raise DimensionMismatch("residuals must be finite")

    @classmethod
    def from_model(cls, spec: mdl.ModelSpec, w: mdl.ParamVector, data: Dataset) -> "ResidualSet":
        pred = mdl.eval_batch(spec, w, data.inputs)
        return cls(residuals=data.outputs - pred, spec=spec, w=w, inputs=data.inputs)

    @property
    def n(self) -> int:
        return self.residuals.shape[0]

    @property
    def d(self) -> int:
        return self.residuals.shape[1]

    @property
    def jacobians(self) -> np.ndarray:
        if self._jacobians is None:
            if self.spec is None:
                raise DimensionMismatch("residual set was built without a model")
            self._jacobians = mdl.jacobian_batch(self.spec, self.w, self.inputs)
        return self._jacobians


@dataclass(frozen=True)
class CostReport:
    value: float
    gradient: np.ndarray | None = None
    hessian: np.ndarray | None = None
    gamma_n: SpdMatrix | None = None


def empirical_covariance(rs: ResidualSet) -> SpdMatrix:
    """Gamma_n(w) = (1/n) sum_t r_t r_t^T, Reject policy.

    Raises NotPositiveDefinite for n < d or residuals confined to a proper
    subspace (an interpolating or otherwise degenerate model).
    """
    r = rs.residuals
    if rs.n < rs.d:
        raise NotPositiveDefinite(f"n={rs.n} < d={rs.d}: covariance cannot be PD")
    return spd_from_symmetric(r.T @ r / rs.n)


def mse_cost(rs: ResidualSet) -> float:
    return float(np.sum(rs.residuals**2) / rs.n)


def gls_cost(rs: ResidualSet, weight: SpdMatrix) -> float:
    """(1/n) sum_t r_t^T weight^{-1} r_t."""
    r = rs.residuals
    if weight.dim != rs.d:
        raise DimensionMismatch(f"weight dim {weight.dim} != residual dim {rs.d}")
    return float(np.sum(r * weight.solve(r.T).T) / rs.n)


def logdet_cost(rs: ResidualSet) -> CostReport:
    gamma = empirical_covariance(rs)
    return CostReport(value=logdet(gamma), gamma_n=gamma)


def _a_tensor(rs: ResidualSet) -> np.ndarray:
    """A_k for all k, shape (K, d, d)."""
    return -np.einsum("tik,tj->kij", rs.jacobians, rs.residuals) / rs.n


def logdet_gradient(rs: ResidualSet) -> CostReport:
    gamma = empirical_covariance(rs)
    gr = gamma.solve(rs.residuals.T).T  # G r_t, (n, d)
    grad = -2.0 / rs.n * np.einsum("tik,ti->k", rs.jacobians, gr)
    return CostReport(value=logdet(gamma), gradient=grad, gamma_n=gamma)


def logdet_gradient_entrywise(rs: ResidualSet) -> np.ndarray:
    """Per-entry route: grad_k = vec(G)^T vec(dGamma/dw_k).

    Redundant with :func:`logdet_gradient`; kept as an independent
    cross-check of the trace form.
    """
    gamma = empirical_covariance(rs)
    g = gamma.solve(np.eye(gamma.dim))
    a = _a_tensor(rs)
    dgamma = a + a.transpose(0, 2, 1)
    return np.einsum("ij,kij->k", g, dgamma)


def logdet_hessian(rs: ResidualSet) -> CostReport:
    gamma = empirical_covariance(rs)
    g = gamma.solve(np.eye(gamma.dim))
    jac = rs.jacobians
    n = rs.n

    a = _a_tensor(rs)
    asym = a + a.transpose(0, 2, 1)
    # term 1: derivative of G, -2 tr(G (A_l + A_l^T) G A_k)
    gag = np.einsum("ij,ljm,mn->lin", g, asym, g)  # G (A_l + A_l^T) G
    term1 = -2.0 * np.einsum("lij,kji->kl", gag, a)
    # term 2: 2 tr(G B_kl) = (2/n) sum_t J_t^T G J_t
    gj = np.einsum("ij,tjk->tik", g, jac)
    term2 = 2.0 / n * np.einsum("tik,til->kl", jac, gj)
    # term 3: 2 tr(G C_kl) = -(2/n) sum_t S_t[k,l] . (G r_t)
    term3 = 0.0
    if rs.spec is not None and rs.spec.kind is mdl.ModelKind.MLP:
        gr = rs.residuals @ g
        k = jac.shape[2]
        term3 = np.zeros((k, k))
        for lo in range(0, n, _SECOND_DERIV_CHUNK):
            hi = min(lo + _SECOND_DERIV_CHUNK, n)
            sec = mdl.second_derivs_batch(rs.spec, rs.w, rs.inputs[lo:hi])
            term3 += np.einsum("tkld,td->kl", sec, gr[lo:hi])
        term3 *= -2.0 / n

    hess = term1 + term2 + term3
    hess = 0.5 * (hess + hess.T)
    gr = gamma.solve(rs.residuals.T).T
    grad = -2.0 / n * np.einsum("tik,ti->k", jac, gr)
    return CostReport(value=logdet(gamma), gradient=grad, hessian=hess, gamma_n=gamma)
