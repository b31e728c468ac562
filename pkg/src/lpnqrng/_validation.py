"""Small argument and array checks used across the package."""

import math

import numpy as np

from .exceptions import DataError, ParameterError


def check_positive(name, value):
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise ParameterError(f"{name} must be a finite positive number, got {value!r}")
    return value


def check_nonnegative(name, value):
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise ParameterError(f"{name} must be a finite non-negative number, got {value!r}")
    return value


def check_int(name, value, minimum=None):
    if isinstance(value, bool) or int(value) != value:
        raise ParameterError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ParameterError(f"{name} must be >= {minimum}, got {value}")
    return value


def check_signal(x, name="samples", allow_empty=False):
    """Return ``x`` as a finite 1-D float64 array.

    Column vectors of shape ``(n, 1)`` are flattened so scikit-learn style
    ``X`` inputs are accepted.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise DataError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not allow_empty and arr.size == 0:
        raise DataError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return arr


def check_bits(bits, name="bits"):
    """Return ``bits`` as a 1-D uint8 array holding only 0 and 1."""
    arr = np.asarray(bits)
    if arr.ndim != 1:
        raise DataError(f"{name} must be one-dimensional, got shape {arr.shape}")
    arr = arr.astype(np.uint8, copy=False)
    if arr.size and arr.max() > 1:
        raise DataError(f"{name} must contain only 0 and 1")
    return arr
