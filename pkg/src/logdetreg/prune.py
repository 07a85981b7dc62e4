"""Stepwise weight elimination against a BIC-like penalized criterion.

At each step every currently free parameter is tentatively frozen at zero,
the model is refit (warm-started from the current estimate), and the best
candidate is accepted when it lowers ``U_n + q ln(n) / n`` with ``q`` the
number of free parameters.  Optionally each elimination is also gated by
the nested log-det test: the removal must not be rejected at the given
level.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import cost as cst
from . import model as mdl
from .data import Dataset
from .errors import InitialFitFailed, LogDetRegError
from .estimate import CostKind, FitResult, fisher_info, fit_logdet
from .inference import tn_test
from .optimize import OptimOptions, OptimOutcome, StartRecord, bfgs_minimize
from .errors import NonIdentifiable, NotPositiveDefinite

log = logging.getLogger(__name__)


def bic_penalty(q: int, n: int) -> float:
    return q * np.log(n) / n


@dataclass(frozen=True)
class PruneStep:
    frozen_grid_index: int
    criterion_before: float
    criterion_after: float
    p_value: float | None


@dataclass(frozen=True)
class PruneTrace:
    steps: tuple[PruneStep, ...]
    final_spec: mdl.ModelSpec
    final_fit: FitResult


def _refit_frozen(
    spec: mdl.ModelSpec, data: Dataset, w: mdl.ParamVector, grid_index: int, opts: OptimOptions
) -> FitResult:
    """Single warm-started log-det refit with one more entry frozen."""
    from .estimate import _logdet_objective, _residuals_at  # local: internal helpers

    sub = spec.with_frozen(grid_index)
    grid = w.full_grid()
    x0 = grid[sub.effective_mask]
    x, value, reason, iters = bfgs_minimize(_logdet_objective(sub, data), x0, opts)
    rs = _residuals_at(sub, data, x)
    record = StartRecord(0, value, iters, reason)
    outcome = OptimOutcome(
        mdl.ParamVector(x, sub), value, (record,), reason in ("grad_tol", "stalled")
    )
    info_hat, cov, identifiable = None, None, True
    try:
        info_hat, cov = fisher_info(sub, outcome.w_best, data)
    except NonIdentifiable:
        identifiable = False
    return FitResult(
        w_hat=outcome.w_best,
        cost_kind=CostKind.LOGDET,
        cost_value=value,
        gamma_hat=cst.empirical_covariance(rs),
        n=data.n,
        optim=outcome,
        info_hat=info_hat,
        asymptotic_cov=cov,
        identifiable=identifiable,
    )


def ssm_prune(
    spec: mdl.ModelSpec,
    data: Dataset,
    opts: OptimOptions,
    gate: float | None = None,
) -> PruneTrace:
    """Greedy one-at-a-time weight elimination.

    The recorded criterion sequence is strictly decreasing; frozen
    parameters stay frozen.  Candidate refits that fail are skipped with a
    warning.  Ties break toward the lowest grid index.
    """
    try:
        current = fit_logdet(spec, data, opts)
    except LogDetRegError as exc:
        raise InitialFitFailed(f"baseline fit failed: {exc}") from exc

    steps: list[PruneStep] = []
    while True:
        cspec = current.spec
        q = cspec.param_count
        criterion = current.cost_value + bic_penalty(q, data.n)
        active = np.flatnonzero(cspec.effective_mask)
        best = None  # (criterion_after, grid_index, fit)
        for grid_index in active:
            try:
                fit = _refit_frozen(cspec, data, current.w_hat, int(grid_index), opts)
            except (LogDetRegError, NotPositiveDefinite) as exc:
                log.warning("candidate freeze of grid entry %d failed: %s", grid_index, exc)
                continue
            cand = fit.cost_value + bic_penalty(q - 1, data.n)
            if best is None or cand < best[0] - 1e-12:
                best = (cand, int(grid_index), fit)
        if best is None or best[0] >= criterion:
            break
        p_value = None
        if gate is not None:
            report = tn_test(best[2], current, gate)
            p_value = report.p_value
            if report.reject:
                break
        steps.append(
            PruneStep(
                frozen_grid_index=best[1],
                criterion_before=criterion,
                criterion_after=best[0],
                p_value=p_value,
            )
        )
        current = best[2]
        if current.spec.param_count == 1:
            break
    return PruneTrace(steps=tuple(steps), final_spec=current.spec, final_fit=current)
