"""Shared fixtures and oracle helpers for the test suite."""

import numpy as np
import pytest

from logdetreg import Dataset, ModelKind, ModelSpec, ParamVector, spd_from_symmetric
from logdetreg.cost import ResidualSet


def fd_gradient(func, x, h_scale=1e-6):
    """Central-difference gradient with step h = h_scale * (1 + |x_k|)."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for k in range(x.size):
        h = h_scale * (1.0 + abs(x[k]))
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        grad[k] = (func(xp) - func(xm)) / (2.0 * h)
    return grad


def fd_jacobian(func, x, h_scale=1e-6):
    """Central-difference Jacobian of a vector- or matrix-valued func."""
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(x.size):
        h = h_scale * (1.0 + abs(x[k]))
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        cols.append((func(xp) - func(xm)) / (2.0 * h))
    return np.stack(cols, axis=-1)


def make_instance(index, n=200, d=2):
    """Seeded (spec, w, dataset) instance cycling Linear / MaskedLinear / Mlp."""
    rng = np.random.default_rng(1000 + index)
    kind = (ModelKind.LINEAR, ModelKind.MASKED_LINEAR, ModelKind.MLP)[index % 3]
    din = int(rng.integers(1, 4))
    if kind is ModelKind.MLP:
        hidden = int(rng.integers(1, 4))
        spec = ModelSpec(kind, din, d, hidden_units=hidden)
        if rng.random() < 0.5:
            mask = rng.random(spec.full_param_count) < 0.8
            mask[0] = True  # keep at least one free parameter
            spec = ModelSpec(kind, din, d, hidden_units=hidden, mask=mask)
    elif kind is ModelKind.MASKED_LINEAR:
        mask = rng.random(d * din) < 0.7
        mask[0] = True
        spec = ModelSpec(kind, din, d, mask=mask)
    else:
        spec = ModelSpec(kind, din, d)
    w = ParamVector(rng.uniform(-1.5, 1.5, size=spec.param_count), spec)
    z = rng.uniform(-1.0, 1.0, size=(n, din))
    noise = rng.standard_normal((n, d)) @ np.array([[1.0, 0.0], [0.6, 0.8]])[:d, :d].T
    from logdetreg.model import eval_batch

    y = eval_batch(spec, w, z) + noise
    return spec, w, Dataset(z, y)


def residual_set(spec, w, data):
    return ResidualSet.from_model(spec, w, data)


@pytest.fixture
def gamma_strong():
    """The strongly correlated 2x2 noise covariance used across the suite."""
    return spd_from_symmetric(np.array([[1.81, 1.8], [1.8, 1.81]]))
