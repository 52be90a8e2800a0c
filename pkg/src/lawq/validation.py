"""Input checking helpers used by the quantization kernels and estimators."""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInput, ShapeMismatch, ValidationError

# Curvature entries are clamped to this floor on ingestion.  Values produced by
# the optimizer are positive by construction, but file-loaded curvature may not be.
CURVATURE_FLOOR = 1e-8


def check_weights(values, name: str = "weights") -> np.ndarray:
    """Return ``values`` as a finite 1-D float64 array with at least one entry."""
    w = np.asarray(values, dtype=np.float64).ravel()
    if w.size < 1:
        raise ValidationError(f"{name} must contain at least one entry")
    if not np.all(np.isfinite(w)):
        raise ValidationError(f"{name} must be finite (no NaN/Inf)")
    return w


def check_curvature(values, n: int, name: str = "curvature") -> np.ndarray:
    """Validate curvature entries and clamp them to the positivity floor."""
    d = np.asarray(values, dtype=np.float64).ravel()
    if d.size != n:
        raise ShapeMismatch(f"{name} has length {d.size}, expected {n}")
    if not np.all(np.isfinite(d)):
        raise ValidationError(f"{name} must be finite (no NaN/Inf)")
    return np.maximum(d, CURVATURE_FLOOR)


def require_some_nonzero(w: np.ndarray, what: str = "weights") -> None:
    if not np.any(w != 0.0):
        raise DegenerateInput(f"all {what} are zero")


def as_float_matrix(values, name: str = "X") -> np.ndarray:
    """Return a finite 2-D float64 matrix (1-D input becomes a single row)."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2:
        raise ValidationError(f"{name} must be 1-D or 2-D, got ndim={x.ndim}")
    if not np.all(np.isfinite(x)):
        raise ValidationError(f"{name} must be finite (no NaN/Inf)")
    return x
