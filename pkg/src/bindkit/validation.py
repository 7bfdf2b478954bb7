"""Input validation helpers used at the public API boundary."""
from __future__ import annotations

import numpy as np

from .exceptions import DomainError, ShapeError


def check_matrix(w, name="matrix"):
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={w.ndim}")
    if not np.all(np.isfinite(w)):
        raise ShapeError(f"{name} contains non-finite values")
    return w


def check_vector(x, name="vector", length=None):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got ndim={x.ndim}")
    if length is not None and x.shape[0] != length:
        raise ShapeError(f"{name} must have length {length}, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ShapeError(f"{name} contains non-finite values")
    return x


def check_embeddings(x, dim=None, unit=False, name="embeddings", atol=1e-6):
    """Validate a matrix of row embeddings; optionally enforce unit norm."""
    x = check_matrix(x, name=name)
    if dim is not None and x.shape[1] != dim:
        raise ShapeError(f"{name} must have dimension {dim}, got {x.shape[1]}")
    if unit:
        norms = np.linalg.norm(x, axis=1)
        if not np.allclose(norms, 1.0, atol=atol):
            worst = float(np.max(np.abs(norms - 1.0)))
            raise ShapeError(f"{name} rows must be unit-norm (worst |n-1| = {worst:g})")
    return x


def check_latlon(lat, lon):
    """Validate latitude/longitude scalars or arrays (degrees)."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    if lat.shape != lon.shape:
        raise ShapeError(f"lat/lon shapes differ: {lat.shape} vs {lon.shape}")
    if np.any(~np.isfinite(lat)) or np.any(~np.isfinite(lon)):
        raise DomainError("lat/lon contain non-finite values")
    if np.any(lat < -90.0) or np.any(lat > 90.0):
        raise DomainError("latitude outside [-90, 90]")
    if np.any(lon < -180.0) or np.any(lon > 180.0):
        raise DomainError("longitude outside [-180, 180]")
    return lat, lon


def check_in_range(value, lo, hi, name="value"):
    value = float(value)
    if not (lo <= value <= hi):
        raise DomainError(f"{name} must be in [{lo}, {hi}], got {value}")
    return value
