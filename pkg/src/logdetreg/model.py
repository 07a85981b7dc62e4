"""Parametric regression families with analytic parameter derivatives.

Three members: an unconstrained linear map, a masked (constrained) linear
map, and a one-hidden-layer tanh MLP.  Parameters live on a fixed "full
grid"; a boolean mask selects the free entries, and masked-out entries are
structurally zero.

Flattening order (stable contract for JSON round trips and pruning masks):

* linear / masked_linear: ``vec(W)`` row-major, ``W`` being the ``d x d'``
  coefficient matrix (``y = W z``).
* mlp: ``[a_1..a_H | c_1..c_H | b_1..b_H | output bias]`` with the ``a``
  block shaped ``(H, d')`` row-major, ``c`` shaped ``(H,)``, the ``b``
  block shaped ``(H, d)`` row-major, and the bias shaped ``(d,)``, for
  ``F_w(z) = sum_h b_h tanh(a_h . z + c_h) + bias``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch


class ModelKind(str, enum.Enum):
    LINEAR = "linear"
    MASKED_LINEAR = "masked_linear"
    MLP = "mlp"


@dataclass(frozen=True)
class ModelSpec:
    """Architecture description: family, dimensions and free-parameter mask."""

    kind: ModelKind
    input_dim: int
    output_dim: int
    hidden_units: int | None = None
    mask: np.ndarray | None = None

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise DimensionMismatch("dimensions must be positive")
        if self.kind is ModelKind.MLP and (self.hidden_units is None or self.hidden_units < 1):
            raise DimensionMismatch("mlp requires hidden_units >= 1")
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != (self.full_param_count,):
                raise DimensionMismatch(
                    f"mask length {mask.shape} != full grid {self.full_param_count}"
                )
            object.__setattr__(self, "mask", mask)

    @property
    def full_param_count(self) -> int:
        if self.kind is ModelKind.MLP:
            h = self.hidden_units
            return h * self.input_dim + h + h * self.output_dim + self.output_dim
        return self.output_dim * self.input_dim

    @property
    def param_count(self) -> int:
        """Number of free parameters K."""
        if self.mask is None:
            return self.full_param_count
        return int(self.mask.sum())

    @property
    def effective_mask(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.full_param_count, dtype=bool)
        return self.mask

    def with_frozen(self, grid_index: int) -> "ModelSpec":
        """Copy of this spec with one more grid entry frozen at zero."""
        mask = self.effective_mask.copy()
        if not mask[grid_index]:
            raise DimensionMismatch(f"grid entry {grid_index} already frozen")
        mask[grid_index] = False
        kind = self.kind
        if kind is ModelKind.LINEAR:
            kind = ModelKind.MASKED_LINEAR
        return replace(self, kind=kind, mask=mask)


@dataclass(frozen=True)
class ParamVector:
    """Flat vector of the free parameters, tied to its owning spec."""

    values: np.ndarray
    spec: ModelSpec

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.spec.param_count,):
            raise DimensionMismatch(
                f"expected {self.spec.param_count} parameters, got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise DimensionMismatch("parameters must be finite")
        object.__setattr__(self, "values", values)

    def full_grid(self) -> np.ndarray:
        """Expand to the full grid, masked entries set to zero."""
        grid = np.zeros(self.spec.full_param_count)
        grid[self.spec.effective_mask] = self.values
        return grid


def _mlp_blocks(spec: ModelSpec, grid: np.ndarray):
    h, din, dout = spec.hidden_units, spec.input_dim, spec.output_dim
    i = 0
    a = grid[i : i + h * din].reshape(h, din)
    i += h * din
    c = grid[i : i + h]
    i += h
    b = grid[i : i + h * dout].reshape(h, dout)
    i += h * dout
    bias = grid[i : i + dout]
    return a, c, b, bias


def _check_inputs(spec: ModelSpec, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != spec.input_dim:
        raise DimensionMismatch(f"input dim {z.shape[-1]} != {spec.input_dim}")
    return z


def eval_batch(spec: ModelSpec, w: ParamVector, inputs: np.ndarray) -> np.ndarray:
    """Evaluate the model on an (n, d') input batch; returns (n, d)."""
    z = _check_inputs(spec, inputs)
    grid = w.full_grid()
    if spec.kind is ModelKind.MLP:
        a, c, b, bias = _mlp_blocks(spec, grid)
        t = np.tanh(z @ a.T + c)
        return t @ b + bias
    wmat = grid.reshape(spec.output_dim, spec.input_dim)
    return z @ wmat.T


def evaluate(spec: ModelSpec, w: ParamVector, z: np.ndarray) -> np.ndarray:
    """F_w(z) for a single input vector."""
    return eval_batch(spec, w, np.asarray(z, dtype=float)[None, :])[0]


def jacobian_batch(spec: ModelSpec, w: ParamVector, inputs: np.ndarray) -> np.ndarray:
    """Per-row d x K Jacobians of F_w with respect to the free parameters.

    Returns an (n, d, K) array whose column k is the partial derivative of
    the output with respect to free parameter k.  For the MLP this is the
    single-output back-propagation pattern applied per output component.
    """
    z = _check_inputs(spec, inputs)
    n = z.shape[0]
    d = spec.output_dim
    grid_k = spec.full_param_count

    if spec.kind is ModelKind.MLP:
        a, c, b, bias = _mlp_blocks(spec, w.full_grid())
        h, din = a.shape
        t = np.tanh(z @ a.T + c)  # (n, h)
        dt = 1.0 - t * t
        jac = np.empty((n, d, grid_k))
        # a block: dF_i/da_{hj} = b[h,i] * dt[t,h] * z[t,j]
        ja = np.einsum("hi,th,tj->tihj", b, dt, z)
        jac[:, :, : h * din] = ja.reshape(n, d, h * din)
        # c block: dF_i/dc_h = b[h,i] * dt[t,h]
        jac[:, :, h * din : h * din + h] = np.einsum("hi,th->tih", b, dt)
        # b block: dF_i/db_{hi'} = delta_{ii'} * t[t,h]
        jb = np.zeros((n, d, h, d))
        idx = np.arange(d)
        jb[:, idx, :, idx] = t[:, None, :].transpose(1, 0, 2)
        jac[:, :, h * din + h : h * din + h + h * d] = jb.reshape(n, d, h * d)
        # output bias: identity
        jac[:, :, h * din + h + h * d :] = np.eye(d)
    else:
        din = spec.input_dim
        jac = np.zeros((n, d, d, din))
        idx = np.arange(d)
        jac[:, idx, idx, :] = z[:, None, :]
        jac = jac.reshape(n, d, grid_k)

    return jac[:, :, spec.effective_mask]


def jacobian_params(spec: ModelSpec, w: ParamVector, z: np.ndarray) -> np.ndarray:
    """d x K Jacobian at a single input."""
    return jacobian_batch(spec, w, np.asarray(z, dtype=float)[None, :])[0]


def second_derivs_batch(spec: ModelSpec, w: ParamVector, inputs: np.ndarray) -> np.ndarray:
    """Per-row second parameter derivatives, shape (n, K, K, d).

    Entry (t, k, l) is the d-vector of second partials of F_w(z_t); it is
    symmetric in (k, l).  Linear families return all zeros.
    """
    z = _check_inputs(spec, inputs)
    n = z.shape[0]
    d = spec.output_dim
    grid_k = spec.full_param_count
    mask = spec.effective_mask

    if spec.kind is not ModelKind.MLP:
        k = int(mask.sum())
        return np.zeros((n, k, k, d))

    a, c, b, bias = _mlp_blocks(spec, w.full_grid())
    h, din = a.shape
    t = np.tanh(z @ a.T + c)
    dt = 1.0 - t * t
    ddt = -2.0 * t * dt  # tanh'' reusing the forward value

    sec = np.zeros((n, grid_k, grid_k, d))
    oa = 0
    oc = h * din
    ob = oc + h
    # (a, a) within a unit: b_h * ddt * z_j * z_j'
    saa = np.einsum("th,hi,tj,tk->thjki", ddt, b, z, z)  # (n,h,din,din,d)
    for u in range(h):
        ra = slice(oa + u * din, oa + (u + 1) * din)
        sec[:, ra, ra, :] = saa[:, u]
        # (a, c): b_h * ddt * z_j
        sac = np.einsum("t,i,tj->tji", ddt[:, u], b[u], z)
        sec[:, ra, oc + u, :] = sac
        sec[:, oc + u, ra, :] = sac
        # (c, c): b_h * ddt
        sec[:, oc + u, oc + u, :] = ddt[:, u, None] * b[u]
        # (a, b): dF_i/da_{hj} db_{hi} = delta * dt * z_j
        rb = slice(ob + u * d, ob + (u + 1) * d)
        sab = np.zeros((n, din, d, d))
        idx = np.arange(d)
        sab[:, :, idx, idx] = (dt[:, u, None] * z)[:, :, None]
        sec[:, ra, rb, :] = sab
        sec[:, rb, ra, :] = sab.transpose(0, 2, 1, 3)
        # (c, b): delta * dt
        scb = np.zeros((n, d, d))
        scb[:, idx, idx] = dt[:, u, None]
        sec[:, oc + u, rb, :] = scb
        sec[:, rb, oc + u, :] = scb
    # blocks involving the output bias, (b, b) and cross-unit blocks are zero

    # exact Schwarz symmetry: (k, l) and (l, k) must be bitwise equal even
    # where the contraction order above differs in the last ulp
    sec = 0.5 * (sec + sec.transpose(0, 2, 1, 3))
    return sec[:, mask][:, :, mask]


def second_derivs_params(spec: ModelSpec, w: ParamVector, z: np.ndarray) -> np.ndarray:
    """(K, K, d) array of second partials at a single input."""
    return second_derivs_batch(spec, w, np.asarray(z, dtype=float)[None, :])[0]


# --- model file round trip -------------------------------------------------

def spec_to_dict(spec: ModelSpec, params: ParamVector | None = None) -> dict:
    doc = {
        "kind": spec.kind.value,
        "input_dim": spec.input_dim,
        "output_dim": spec.output_dim,
    }
    if spec.hidden_units is not None:
        doc["hidden_units"] = spec.hidden_units
    if spec.mask is not None:
        doc["mask"] = [bool(x) for x in spec.mask]
    if params is not None:
        doc["params"] = [float(x) for x in params.values]
    return doc


def spec_from_dict(doc: dict) -> tuple[ModelSpec, ParamVector | None]:
    spec = ModelSpec(
        kind=ModelKind(doc["kind"]),
        input_dim=int(doc["input_dim"]),
        output_dim=int(doc["output_dim"]),
        hidden_units=int(doc["hidden_units"]) if "hidden_units" in doc else None,
        mask=np.asarray(doc["mask"], dtype=bool) if "mask" in doc else None,
    )
    params = None
    if "params" in doc:
        params = ParamVector(np.asarray(doc["params"], dtype=float), spec)
    return spec, params


def save_model(path, spec: ModelSpec, params: ParamVector | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec_to_dict(spec, params), fh, indent=2)
        fh.write("\n")


def load_model(path) -> tuple[ModelSpec, ParamVector | None]:
    with open(path, encoding="utf-8") as fh:
        return spec_from_dict(json.load(fh))
