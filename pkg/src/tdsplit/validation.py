"""Input validation helpers shared across the package.

Small check-and-coerce utilities in the spirit of scikit-learn's
``check_array``: every public constructor funnels its matrix inputs
through these so error messages are uniform and tolerances live in
one place.
"""

from __future__ import annotations

import numpy as np

ROW_SUM_TOL = 1e-12
FILE_ROW_SUM_TOL = 1e-9


def as_float_array(x, name: str, ndim: int | None = None) -> np.ndarray:
    """Coerce to a C-contiguous float64 array, rejecting non-finite entries."""
    arr = np.ascontiguousarray(x, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_stochastic_rows(mat: np.ndarray, name: str, tol: float = ROW_SUM_TOL) -> None:
    """Require nonnegative entries and unit row sums along the last axis."""
    if np.any(mat < 0):
        raise ValueError(f"{name} has negative entries")
    sums = mat.sum(axis=-1)
    worst = float(np.abs(sums - 1.0).max())
    if worst > tol:
        raise ValueError(f"{name} rows must sum to 1 (worst deviation {worst:.3e} > {tol:.0e})")


def check_probability_vector(p: np.ndarray, name: str, tol: float = ROW_SUM_TOL) -> None:
    if np.any(p < 0):
        raise ValueError(f"{name} has negative entries")
    dev = abs(float(p.sum()) - 1.0)
    if dev > tol:
        raise ValueError(f"{name} must sum to 1 (deviation {dev:.3e})")


def check_unit_interval(x: float, name: str, *, open_left: bool = True, open_right: bool = True) -> float:
    x = float(x)
    lo_ok = x > 0 if open_left else x >= 0
    hi_ok = x < 1 if open_right else x <= 1
    if not (lo_ok and hi_ok):
        lo, hi = "(" if open_left else "[", ")" if open_right else "]"
        raise ValueError(f"{name} must lie in {lo}0, 1{hi}, got {x}")
    return x


def check_length(v: np.ndarray, n: int, name: str) -> None:
    if v.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {v.shape}")


def as_state_array(x, n_states: int, name: str) -> np.ndarray:
    """Coerce to an int array of valid state indices."""
    arr = np.asarray(x)
    if not np.issubdtype(arr.dtype, np.number):
        raise ValueError(f"{name} must be numeric state indices")
    idx = arr.astype(np.int64)
    if np.any(idx != arr):
        raise ValueError(f"{name} must contain integer state indices")
    if idx.size and (idx.min() < 0 or idx.max() >= n_states):
        raise ValueError(f"{name} contains indices outside [0, {n_states})")
    return idx
