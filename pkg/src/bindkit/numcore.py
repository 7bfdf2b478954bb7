"""Dense numerics, deterministic randomness, and flat parameter handling.

All in-memory values are float64; binary file formats downcast to float32
at the serialization boundary only. Dense matrices are plain 2-D C-ordered
float64 ndarrays (rows x cols, row-major data).
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateVectorError, LayoutError, ShapeError

DEFAULT_NORM_EPS = 1e-12


class SeededRng:
    """Counter-based random stream (Philox) owned explicitly by the caller.

    Identical seeds produce identical draw sequences across runs and
    platforms. ``split(key)`` derives an independent child stream from
    (seed, key) without consuming draws from the parent.
    """

    def __init__(self, seed, _path=()):
        self.seed = int(seed)
        self._path = tuple(int(k) for k in _path)
        ss = np.random.SeedSequence(
            entropy=self.seed & 0xFFFFFFFFFFFFFFFF, spawn_key=self._path
        )
        self.generator = np.random.Generator(np.random.Philox(ss))

    def split(self, key):
        """Child stream keyed by an int or string; order-independent."""
        if isinstance(key, str):
            key = int.from_bytes(hashlib.sha256(key.encode()).digest()[:4], "little")
        return SeededRng(self.seed, self._path + (int(key) & 0xFFFFFFFF,))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def permutation(self, n):
        return self.generator.permutation(n)

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, path={self._path})"


@dataclass(frozen=True)
class Segment:
    """One named, contiguous slice of a flat parameter vector."""

    name: str
    offset: int
    length: int
    shape: tuple

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if int(np.prod(self.shape, dtype=np.int64)) != self.length:
            raise LayoutError(
                f"segment {self.name!r}: shape {self.shape} incompatible with "
                f"length {self.length}"
            )


class ParamVector:
    """Flat float64 view of all trainable parameters of one encoder.

    The layout maps each named segment back to its layer shape; segments are
    contiguous, non-overlapping, and ordered by offset.
    """

    def __init__(self, values, layout):
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ShapeError("ParamVector values must be one-dimensional")
        self.layout = tuple(layout)
        expected = 0
        for seg in self.layout:
            if seg.offset != expected:
                raise LayoutError(
                    f"segment {seg.name!r} at offset {seg.offset}, expected {expected}"
                )
            expected += seg.length
        if expected != self.values.size:
            raise LayoutError(
                f"layout covers {expected} values, vector has {self.values.size}"
            )

    @property
    def size(self):
        return int(self.values.size)

    def copy(self):
        return ParamVector(self.values.copy(), self.layout)

    def same_layout(self, other):
        return self.layout == other.layout

    def segment(self, name):
        """Writable view of one segment, reshaped to its layer shape."""
        for seg in self.layout:
            if seg.name == name:
                return self.values[seg.offset : seg.offset + seg.length].reshape(seg.shape)
        raise LayoutError(f"no segment named {name!r}")

    def segment_names(self):
        return [seg.name for seg in self.layout]

    def content_hash(self):
        """Hex digest over the exact bytes and the layout descriptor."""
        h = hashlib.sha256(self.values.tobytes())
        for seg in self.layout:
            h.update(f"{seg.name}:{seg.offset}:{seg.length}:{seg.shape}".encode())
        return h.hexdigest()

    def __repr__(self):
        return f"ParamVector(size={self.size}, segments={len(self.layout)})"


def flatten_params(named):
    """Pack an ordered mapping of name -> array into a ParamVector.

    Iteration order of ``named`` defines the layout, so two encoders built
    from the same spec always flatten to identical layouts.
    """
    layout = []
    chunks = []
    offset = 0
    for name, arr in named.items():
        arr = np.asarray(arr, dtype=np.float64)
        seg = Segment(name=name, offset=offset, length=int(arr.size), shape=arr.shape)
        layout.append(seg)
        chunks.append(arr.reshape(-1))
        offset += seg.length
    values = np.concatenate(chunks) if chunks else np.zeros(0)
    return ParamVector(values, layout)


def unflatten_params(params):
    """Inverse of :func:`flatten_params`; returns name -> array copies."""
    out = {}
    for seg in params.layout:
        out[seg.name] = (
            params.values[seg.offset : seg.offset + seg.length].reshape(seg.shape).copy()
        )
    return out


def param_views(params):
    """Like :func:`unflatten_params` but returns writable views (no copies)."""
    return {seg.name: params.segment(seg.name) for seg in params.layout}


def snap_float32(params):
    """Round values to the nearest float32 (kept as float64 in memory).

    Applied at training completion so checkpoint save/load round-trips are
    bit-exact despite the 32-bit file format.
    """
    return ParamVector(
        params.values.astype(np.float32).astype(np.float64), params.layout
    )


def affine_forward(w, b, x):
    """Return ``w @ x + b`` for a single input vector."""
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if w.ndim != 2:
        raise ShapeError(f"weight must be a matrix, got ndim={w.ndim}")
    if b.ndim != 1 or x.ndim != 1:
        raise ShapeError("bias and input must be vectors")
    if w.shape[1] != x.shape[0] or w.shape[0] != b.shape[0]:
        raise ShapeError(
            f"incompatible shapes: w {w.shape}, b {b.shape}, x {x.shape}"
        )
    return w @ x + b


def l2_normalize(x, eps=DEFAULT_NORM_EPS):
    """Return ``x / ||x||_2``; raises if the norm is at or below ``eps``."""
    x = np.asarray(x, dtype=np.float64)
    norm = float(np.linalg.norm(x))
    if norm <= eps:
        raise DegenerateVectorError(f"vector norm {norm:g} <= eps {eps:g}")
    return x / norm


def l2_normalize_rows(x, eps=DEFAULT_NORM_EPS):
    """Row-wise :func:`l2_normalize` for a 2-D array."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError("expected a 2-D array of row vectors")
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms <= eps):
        bad = int(np.argmin(norms))
        raise DegenerateVectorError(
            f"row {bad} has norm {norms[bad]:g} <= eps {eps:g}"
        )
    return x / norms[:, None]


def cosine_similarity(a, b):
    """Dot product of two equal-length vectors (cosine when both unit-norm)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"incompatible shapes: {a.shape} vs {b.shape}")
    return float(a @ b)
