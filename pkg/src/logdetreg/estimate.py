"""Estimator suite.

OLS (minimize the MSE), GLS with a supplied weighting matrix, the iterated
feasible-GLS sequence, the direct log-determinant estimator, and the
plug-in information matrix with its asymptotic covariance.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import cost as cst
from . import model as mdl
from .data import Dataset
from .errors import (
    NonFiniteAtStart,
    NonIdentifiable,
    NotPositiveDefinite,
    SingularDesign,
    UnderDetermined,
)
from .linalg import RidgePolicy, SpdMatrix, logdet, spd_from_symmetric
from .optimize import OptimOptions, OptimOutcome, StartRecord, bfgs_minimize, multi_start


class CostKind(str, enum.Enum):
    MSE = "mse"
    GLS = "gls"
    LOGDET = "logdet"


@dataclass(frozen=True)
class FitResult:
    w_hat: mdl.ParamVector
    cost_kind: CostKind
    cost_value: float
    gamma_hat: SpdMatrix
    n: int
    optim: OptimOutcome
    info_hat: SpdMatrix | None = None
    asymptotic_cov: np.ndarray | None = None
    identifiable: bool = True
    rounds: tuple[float, ...] | None = None

    @property
    def spec(self) -> mdl.ModelSpec:
        return self.w_hat.spec


def _check_size(spec: mdl.ModelSpec, data: Dataset) -> None:
    if data.n < data.output_dim or data.n * data.output_dim <= spec.param_count:
        raise UnderDetermined(
            f"n={data.n}, d={data.output_dim} too small for K={spec.param_count}"
        )
    if data.input_dim != spec.input_dim or data.output_dim != spec.output_dim:
        raise UnderDetermined(
            f"data dims ({data.input_dim},{data.output_dim}) do not match model "
            f"({spec.input_dim},{spec.output_dim})"
        )


def _residuals_at(spec, data, x, jac=None) -> cst.ResidualSet | None:
    """Residuals at x, or None when the prediction overflowed (treated as
    an infinite-cost trial point by the objectives)."""
    pred = mdl.eval_batch(spec, mdl.ParamVector(x, spec), data.inputs)
    if not np.all(np.isfinite(pred)):
        return None
    return cst.ResidualSet(
        residuals=data.outputs - pred,
        spec=spec,
        w=mdl.ParamVector(x, spec),
        inputs=data.inputs,
        _jacobians=jac,
    )


def _constant_jacobian(spec, data):
    """Linear-family Jacobians do not depend on w; compute them once."""
    if spec.kind is mdl.ModelKind.MLP:
        return None
    zero = mdl.ParamVector(np.zeros(spec.param_count), spec)
    return mdl.jacobian_batch(spec, zero, data.inputs)


def _mse_objective(spec, data):
    jac = _constant_jacobian(spec, data)

    def objective(x):
        rs = _residuals_at(spec, data, x, jac)
        if rs is None:
            return np.inf, None
        grad = -2.0 / rs.n * np.einsum("tik,ti->k", rs.jacobians, rs.residuals)
        return cst.mse_cost(rs), grad

    return objective


def _gls_objective(spec, data, weight: SpdMatrix):
    jac = _constant_jacobian(spec, data)

    def objective(x):
        rs = _residuals_at(spec, data, x, jac)
        if rs is None:
            return np.inf, None
        wr = weight.solve(rs.residuals.T).T
        grad = -2.0 / rs.n * np.einsum("tik,ti->k", rs.jacobians, wr)
        return float(np.sum(rs.residuals * wr) / rs.n), grad

    return objective


def _logdet_objective(spec, data):
    jac = _constant_jacobian(spec, data)

    def objective(x):
        rs = _residuals_at(spec, data, x, jac)
        if rs is None:
            return np.inf, None
        try:
            report = cst.logdet_gradient(rs)
        except NotPositiveDefinite:
            # degenerate trial point; the line search backtracks away
            return np.inf, None
        return report.value, report.gradient

    return objective


def _closed_form_outcome(x: np.ndarray, value: float, spec: mdl.ModelSpec) -> OptimOutcome:
    record = StartRecord(start_index=0, final_cost=value, iterations=0, termination="closed_form")
    return OptimOutcome(
        w_best=mdl.ParamVector(x, spec), cost_best=value, per_start=(record,), converged=True
    )


def _gamma_for_quadratic_fit(rs: cst.ResidualSet) -> SpdMatrix:
    """Residual covariance for MSE/GLS fits.

    Unlike the log-det estimator, these costs stay defined when the model
    interpolates the data; fall back to the jitter policy (flagging the
    result as regularized) instead of failing the whole fit.
    """
    try:
        return cst.empirical_covariance(rs)
    except NotPositiveDefinite:
        return spd_from_symmetric(rs.residuals.T @ rs.residuals / rs.n, RidgePolicy.JITTER)


def _ols_closed_form(spec: mdl.ModelSpec, data: Dataset) -> np.ndarray:
    z, y = data.inputs, data.outputs
    gram = z.T @ z
    if np.linalg.matrix_rank(gram) < spec.input_dim:
        raise SingularDesign("rank-deficient regressor matrix")
    wmat = np.linalg.solve(gram, z.T @ y).T  # (d, d')
    return wmat.reshape(-1)


def fit_ols(spec: mdl.ModelSpec, data: Dataset, opts: OptimOptions) -> FitResult:
    """Minimize V_n.  Unconstrained linear models use the normal equations
    directly; everything else goes through the multi-start optimizer."""
    _check_size(spec, data)
    if spec.kind is mdl.ModelKind.LINEAR and spec.mask is None:
        x = _ols_closed_form(spec, data)
        rs = _residuals_at(spec, data, x)
        outcome = _closed_form_outcome(x, cst.mse_cost(rs), spec)
    else:
        outcome = multi_start(_mse_objective(spec, data), spec, opts)
        rs = _residuals_at(spec, data, outcome.w_best.values)
    return FitResult(
        w_hat=outcome.w_best,
        cost_kind=CostKind.MSE,
        cost_value=cst.mse_cost(rs),
        gamma_hat=_gamma_for_quadratic_fit(rs),
        n=data.n,
        optim=outcome,
    )


def fit_gls(spec: mdl.ModelSpec, data: Dataset, weight: SpdMatrix, opts: OptimOptions) -> FitResult:
    """Minimize the GLS cost with a fixed weighting matrix."""
    _check_size(spec, data)
    outcome = multi_start(_gls_objective(spec, data, weight), spec, opts)
    rs = _residuals_at(spec, data, outcome.w_best.values)
    return FitResult(
        w_hat=outcome.w_best,
        cost_kind=CostKind.GLS,
        cost_value=outcome.cost_best,
        gamma_hat=_gamma_for_quadratic_fit(rs),
        n=data.n,
        optim=outcome,
    )


def fit_fgls(
    spec: mdl.ModelSpec,
    data: Dataset,
    opts: OptimOptions,
    max_rounds: int = 10,
    round_tol: float = 1e-8,
) -> FitResult:
    """Iterated feasible GLS: OLS, then GLS rounds with the previous round's
    residual covariance, until the log-det value stabilizes.

    Rounds after the first warm-start from the previous estimate (single
    start).  The returned cost is the final log-det value; ``rounds``
    records the value per round.
    """
    fit = fit_ols(spec, data, opts)
    x = fit.w_hat.values
    gamma = fit.gamma_hat
    rounds = [logdet(gamma)]
    outcome = fit.optim
    for round_index in range(max_rounds):
        objective = _gls_objective(spec, data, gamma)
        if round_index == 0:
            # first GLS round explores the same multi-start set as the
            # direct log-det estimator (shared seed), so both pipelines
            # select the same basin; later rounds warm-start from it
            ms = multi_start(objective, spec, opts)
            x_new = ms.w_best.values
            reason = "grad_tol" if ms.converged else "max_iters"
            iters = sum(r.iterations for r in ms.per_start)
        else:
            x_new, _, reason, iters = bfgs_minimize(objective, x, opts)
        rs = _residuals_at(spec, data, x_new)
        gamma = cst.empirical_covariance(rs)
        u = logdet(gamma)
        x = x_new
        converged = reason in ("grad_tol", "stalled")
        record = StartRecord(0, u, iters, reason)
        outcome = OptimOutcome(mdl.ParamVector(x, spec), u, (record,), converged)
        if abs(u - rounds[-1]) < round_tol:
            rounds.append(u)
            break
        rounds.append(u)
    return FitResult(
        w_hat=mdl.ParamVector(x, spec),
        cost_kind=CostKind.LOGDET,
        cost_value=rounds[-1],
        gamma_hat=gamma,
        n=data.n,
        optim=outcome,
        rounds=tuple(rounds),
    )


def fisher_info(
    spec: mdl.ModelSpec, w: mdl.ParamVector, data: Dataset
) -> tuple[SpdMatrix, np.ndarray]:
    """Plug-in information matrix and asymptotic covariance.

    ``I[k, l] = tr(Gamma_n(w)^{-1} B_n(k, l))``, computed as
    ``(1/n) sum_t J_t^T Gamma_n^{-1} J_t``; the asymptotic covariance of
    the estimate is ``I^{-1} / n``.  Raises NonIdentifiable when the
    information matrix is singular.
    """
    rs = cst.ResidualSet.from_model(spec, w, data)
    gamma = cst.empirical_covariance(rs)
    g = gamma.solve(np.eye(gamma.dim))
    jac = rs.jacobians
    gj = np.einsum("ij,tjk->tik", g, jac)
    info = np.einsum("tik,til->kl", jac, gj) / rs.n
    try:
        info_spd = spd_from_symmetric(0.5 * (info + info.T))
    except NotPositiveDefinite:
        raise NonIdentifiable("information matrix is singular") from None
    # an exactly duplicated parameter direction can leave a last-ulp
    # positive pivot; treat numerically singular information as singular
    pivots = np.diag(info_spd.chol)
    if np.min(pivots) ** 2 <= 1e-12 * np.max(pivots) ** 2:
        raise NonIdentifiable("information matrix is numerically singular")
    cov = info_spd.solve(np.eye(info_spd.dim)) / data.n
    return info_spd, cov


def fit_logdet(spec: mdl.ModelSpec, data: Dataset, opts: OptimOptions) -> FitResult:
    """Minimize U_n = log det Gamma_n(w) directly, with analytic gradients.

    Populates the plug-in information matrix and asymptotic covariance; a
    singular information matrix flags the fit as non-identifiable instead
    of failing.
    """
    _check_size(spec, data)
    outcome = multi_start(_logdet_objective(spec, data), spec, opts)
    rs = _residuals_at(spec, data, outcome.w_best.values)
    gamma = cst.empirical_covariance(rs)
    info_hat, cov, identifiable = None, None, True
    try:
        info_hat, cov = fisher_info(spec, outcome.w_best, data)
    except NonIdentifiable:
        identifiable = False
    return FitResult(
        w_hat=outcome.w_best,
        cost_kind=CostKind.LOGDET,
        cost_value=outcome.cost_best,
        gamma_hat=gamma,
        n=data.n,
        optim=outcome,
        info_hat=info_hat,
        asymptotic_cov=cov,
        identifiable=identifiable,
    )
