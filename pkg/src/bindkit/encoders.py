"""Modality-specific encoders mapping raw records to unit-norm embeddings.

Pipelines per modality:
  location            Equal Earth projection -> random Fourier features -> MLP
  env                 residual MLP
  image / satellite / audio   plain MLP over a feature vector
  text                per-class prototype lookup

Every pipeline ends with L2 normalization, so all modalities live on the
same d-dimensional unit sphere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, LayoutError, ModalityError, ShapeError
from .numcore import (
    ParamVector,
    SeededRng,
    flatten_params,
    l2_normalize,
    l2_normalize_rows,
    param_views,
)
from .validation import check_latlon, check_matrix

MODALITIES = ("image", "location", "satellite", "env", "audio")

# Equal Earth pseudocylindrical projection polynomial coefficients.
EEP_A1 = 1.340264
EEP_A2 = -0.081106
EEP_A3 = 0.000893
EEP_A4 = 0.003796
_EEP_M = math.sqrt(3.0) / 2.0


def _eep_poly(theta):
    t2 = theta * theta
    return theta * (EEP_A1 + t2 * (EEP_A2 + t2 * t2 * (EEP_A3 + t2 * EEP_A4)))


def _eep_poly_deriv(theta):
    t2 = theta * theta
    return EEP_A1 + t2 * (3.0 * EEP_A2 + t2 * t2 * (7.0 * EEP_A3 + 9.0 * EEP_A4 * t2))


def eep_project(lat, lon):
    """Equal Earth projection of degrees (lat, lon) to planar (x, y).

    Accepts scalars or same-shape arrays; raises DomainError outside
    [-90, 90] x [-180, 180].
    """
    lat, lon = check_latlon(lat, lon)
    phi = np.deg2rad(lat)
    lam = np.deg2rad(lon)
    theta = np.arcsin(_EEP_M * np.sin(phi))
    y = _eep_poly(theta)
    x = (2.0 * math.sqrt(3.0) / 3.0) * lam * np.cos(theta) / _eep_poly_deriv(theta)
    if np.ndim(lat) == 0:
        return float(x), float(y)
    return x, y


# Projection extremes, used to rescale planar coordinates to [-1, 1].
EEP_X_MAX = (2.0 * math.sqrt(3.0) / 3.0) * math.pi / EEP_A1
EEP_Y_MAX = _eep_poly(math.asin(_EEP_M))


def rff_transform(xy, freqs):
    """Random Fourier features of planar points.

    ``xy`` is (..., 2); ``freqs`` is (R, 2). Output is (..., 2R) with the
    per-row pairs (cos(f_r . xy), sin(f_r . xy)) concatenated over rows.
    """
    xy = np.asarray(xy, dtype=np.float64)
    freqs = check_matrix(freqs, name="freqs")
    if xy.shape[-1] != 2 or freqs.shape[1] != 2:
        raise ShapeError("xy and freqs must have trailing dimension 2")
    phase = xy @ freqs.T
    out = np.empty(xy.shape[:-1] + (2 * freqs.shape[0],), dtype=np.float64)
    out[..., 0::2] = np.cos(phase)
    out[..., 1::2] = np.sin(phase)
    return out


def gelu(x):
    """Smooth GELU nonlinearity (tanh form)."""
    c = math.sqrt(2.0 / math.pi)
    return 0.5 * x * (1.0 + np.tanh(c * (x + 0.044715 * x**3)))


def gelu_grad(x):
    c = math.sqrt(2.0 / math.pi)
    u = c * (x + 0.044715 * x**3)
    t = np.tanh(u)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3 * 0.044715 * x**2)


def identity(x):
    return x


def identity_grad(x):
    return np.ones_like(x)


ACTIVATIONS = {
    "gelu": (gelu, gelu_grad),
    "identity": (identity, identity_grad),
    "tanh": (np.tanh, lambda x: 1.0 - np.tanh(x) ** 2),
}


@dataclass(frozen=True)
class MlpSpec:
    """Multilayer perceptron shape.

    With ``residual=True`` every hidden layer after the first adds a skip
    connection (h <- h + act(W h + b)), so all hidden widths must match.
    ``hidden_dims=()`` yields a single linear map.
    """

    input_dim: int
    hidden_dims: tuple
    output_dim: int
    activation: str = "gelu"
    residual: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = (self.input_dim,) + self.hidden_dims + (self.output_dim,)
        if any(d < 1 for d in dims):
            raise ShapeError(f"all dims must be >= 1, got {dims}")
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"unknown activation {self.activation!r}")
        if self.residual and len(set(self.hidden_dims)) > 1:
            raise ShapeError("residual MLP requires equal hidden widths")

    def layer_dims(self):
        """List of (fan_in, fan_out) per affine layer, output layer last."""
        dims = (self.input_dim,) + self.hidden_dims + (self.output_dim,)
        return [(dims[i], dims[i + 1]) for i in range(len(dims) - 1)]


@dataclass(frozen=True)
class LocationEncoderSpec:
    """Location pipeline: Equal Earth projection + fixed random Fourier
    frequencies + MLP head.

    The frequency matrix is drawn once from N(0, rff_scale^2), keyed by
    ``rff_seed``, and never trained. ``rescale_planar`` maps projected x, y
    to [-1, 1] by the projection extremes before featurization.
    """

    rff_count: int
    rff_scale: float
    mlp: MlpSpec
    rff_seed: int = 0
    rescale_planar: bool = True

    def __post_init__(self):
        if self.rff_count < 1:
            raise ShapeError("rff_count must be >= 1")
        if not self.rff_scale > 0:
            raise ShapeError("rff_scale must be > 0")
        if self.mlp.input_dim != 2 * self.rff_count:
            raise ShapeError(
                f"mlp.input_dim must be 2*rff_count = {2 * self.rff_count}, "
                f"got {self.mlp.input_dim}"
            )

    def frequencies(self):
        rng = SeededRng(self.rff_seed).split("rff")
        return rng.normal(0.0, self.rff_scale, size=(self.rff_count, 2))


def mlp_spec_of(spec):
    """The MLP part of either spec flavor."""
    return spec.mlp if isinstance(spec, LocationEncoderSpec) else spec


def _layer_names(mlp):
    pairs = mlp.layer_dims()
    return [
        ("out" if i == len(pairs) - 1 else f"layer{i}", fan_in, fan_out)
        for i, (fan_in, fan_out) in enumerate(pairs)
    ]


def spec_layout(spec):
    """The flat parameter layout an encoder of this spec always uses."""
    from .numcore import Segment

    layout = []
    offset = 0
    for name, fan_in, fan_out in _layer_names(mlp_spec_of(spec)):
        for suffix, shape in ((".w", (fan_out, fan_in)), (".b", (fan_out,))):
            length = int(np.prod(shape))
            layout.append(Segment(name + suffix, offset, length, shape))
            offset += length
    return tuple(layout)


def init_params(spec, rng):
    """Glorot-uniform weights, zero biases; one segment pair per layer."""
    named = {}
    for name, fan_in, fan_out in _layer_names(mlp_spec_of(spec)):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        named[f"{name}.w"] = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        named[f"{name}.b"] = np.zeros(fan_out)
    return flatten_params(named)


def mlp_forward(spec, params, x, want_cache=False):
    """Forward pass over a batch ``x`` (B, input_dim) -> (B, output_dim).

    Returns (out, cache); cache holds per-layer inputs and preactivations
    for :func:`mlp_backward` when ``want_cache``.
    """
    mlp = mlp_spec_of(spec)
    act, _ = ACTIVATIONS[mlp.activation]
    views = param_views(params)
    h = np.asarray(x, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != mlp.input_dim:
        raise ShapeError(f"expected (B, {mlp.input_dim}) input, got {h.shape}")
    cache = {"inputs": [], "pres": []} if want_cache else None
    n_hidden = len(mlp.hidden_dims)
    for i in range(n_hidden):
        w = views[f"layer{i}.w"]
        b = views[f"layer{i}.b"]
        pre = h @ w.T + b
        if want_cache:
            cache["inputs"].append(h)
            cache["pres"].append(pre)
        a = act(pre)
        h = h + a if (mlp.residual and i > 0) else a
    w = views["out.w"]
    b = views["out.b"]
    if want_cache:
        cache["inputs"].append(h)
    out = h @ w.T + b
    return out, cache


def mlp_backward(spec, params, cache, grad_out):
    """Backward pass matching :func:`mlp_forward`.

    Returns (grad ParamVector with the same layout, grad wrt the input batch).
    """
    mlp = mlp_spec_of(spec)
    _, act_grad = ACTIVATIONS[mlp.activation]
    views = param_views(params)
    grads = {}
    g = np.asarray(grad_out, dtype=np.float64)

    h_last = cache["inputs"][-1]
    grads["out.w"] = g.T @ h_last
    grads["out.b"] = g.sum(axis=0)
    g = g @ views["out.w"]

    for i in reversed(range(len(mlp.hidden_dims))):
        pre = cache["pres"][i]
        h_in = cache["inputs"][i]
        dpre = act_grad(pre) * g
        grads[f"layer{i}.w"] = dpre.T @ h_in
        grads[f"layer{i}.b"] = dpre.sum(axis=0)
        g_branch = dpre @ views[f"layer{i}.w"]
        g = g + g_branch if (mlp.residual and i > 0) else g_branch

    flat = np.empty(params.size)
    for seg in params.layout:
        flat[seg.offset : seg.offset + seg.length] = grads[seg.name].reshape(-1)
    return ParamVector(flat, params.layout), g


def normalize_rows_forward(raw, eps=1e-12):
    """Row normalization with cached norms for the backward pass."""
    raw = np.asarray(raw, dtype=np.float64)
    out = l2_normalize_rows(raw, eps=eps)
    norms = np.linalg.norm(raw, axis=1)
    return out, norms


def normalize_rows_backward(normalized, norms, grad_out):
    """Jacobian-transpose of row normalization: (g - e (e.g)) / ||raw||."""
    inner = np.sum(grad_out * normalized, axis=1, keepdims=True)
    return (grad_out - normalized * inner) / norms[:, None]


class PrototypeTable:
    """Per-class embedding rows standing in for a frozen text tower.

    Rows are stored raw (trainable); lookups normalize, so every served
    prototype is unit-norm.
    """

    def __init__(self, rows):
        self.rows = np.ascontiguousarray(rows, dtype=np.float64)
        if self.rows.ndim != 2:
            raise ShapeError("prototype rows must be 2-D (classes x dim)")

    @staticmethod
    def init(class_count, dim, rng):
        if class_count < 1 or dim < 1:
            raise ShapeError("class_count and dim must be >= 1")
        return PrototypeTable(rng.normal(0.0, 1.0 / math.sqrt(dim), size=(class_count, dim)))

    @property
    def class_count(self):
        return int(self.rows.shape[0])

    @property
    def dim(self):
        return int(self.rows.shape[1])

    def normalized(self):
        return l2_normalize_rows(self.rows)

    def embedding(self, class_id):
        class_id = int(class_id)
        if not 0 <= class_id < self.class_count:
            raise DomainError(f"class id {class_id} outside [0, {self.class_count})")
        return l2_normalize(self.rows[class_id])

    def transform(self, class_ids):
        ids = np.asarray(class_ids, dtype=np.int64)
        if np.any(ids < 0) or np.any(ids >= self.class_count):
            raise DomainError("class id outside prototype table")
        return l2_normalize_rows(self.rows[ids])

    def copy(self):
        return PrototypeTable(self.rows.copy())

    def content_hash(self):
        import hashlib

        return hashlib.sha256(self.rows.tobytes()).hexdigest()


class EncoderHandle:
    """One modality encoder: tag, architecture spec, flat parameters."""

    def __init__(self, modality, spec, params):
        if modality not in MODALITIES:
            raise ModalityError(f"unknown modality {modality!r}")
        if isinstance(spec, LocationEncoderSpec) != (modality == "location"):
            raise ModalityError("location modality requires a LocationEncoderSpec")
        self.modality = modality
        self.spec = spec
        self.params = params
        self._freqs = None
        if params.layout != spec_layout(spec):
            raise LayoutError("params layout does not match the encoder spec")

    @property
    def embed_dim(self):
        return mlp_spec_of(self.spec).output_dim

    def rff_freqs(self):
        if self._freqs is None:
            self._freqs = self.spec.frequencies()
        return self._freqs

    def replace_params(self, params):
        new = EncoderHandle(self.modality, self.spec, params)
        new._freqs = self._freqs
        return new

    def params_hash(self):
        return self.params.content_hash()

    def features(self, records):
        """Raw records -> MLP input features (B, mlp.input_dim)."""
        records = np.asarray(records, dtype=np.float64)
        mlp = mlp_spec_of(self.spec)
        if self.modality == "location":
            if records.ndim != 2 or records.shape[1] != 2:
                raise ModalityError("location records must be (B, 2) lat/lon degrees")
            x, y = eep_project(records[:, 0], records[:, 1])
            xy = np.column_stack([x, y])
            if self.spec.rescale_planar:
                xy = xy / np.array([EEP_X_MAX, EEP_Y_MAX])
            return rff_transform(xy, self.rff_freqs())
        if records.ndim != 2 or records.shape[1] != mlp.input_dim:
            raise ModalityError(
                f"{self.modality} records must be (B, {mlp.input_dim}), "
                f"got {records.shape}"
            )
        return records

    def transform(self, records):
        """Batch of records -> unit-norm embeddings (B, d)."""
        raw, _ = mlp_forward(self.spec, self.params, self.features(records))
        return l2_normalize_rows(raw)

    def transform_with_cache(self, records):
        feats = self.features(records)
        raw, cache = mlp_forward(self.spec, self.params, feats, want_cache=True)
        emb, norms = normalize_rows_forward(raw)
        return emb, (cache, emb, norms)

    def backward(self, cache_bundle, grad_emb):
        """Embedding gradients -> parameter gradients (input grads dropped)."""
        cache, emb, norms = cache_bundle
        grad_raw = normalize_rows_backward(emb, norms, grad_emb)
        grad_params, _ = mlp_backward(self.spec, self.params, cache, grad_raw)
        return grad_params


def encode(handle, record):
    """Encode a single record with an EncoderHandle or a PrototypeTable.

    Text records are class ids looked up in the prototype table; all other
    modalities run their pipeline and normalize.
    """
    if isinstance(handle, PrototypeTable):
        if not np.issubdtype(np.asarray(record).dtype, np.integer):
            raise ModalityError("text records must be integer class ids")
        return handle.embedding(int(record))
    record = np.asarray(record, dtype=np.float64)
    if record.ndim != 1:
        raise ModalityError("encode takes a single 1-D record; use transform for batches")
    return handle.transform(record[None, :])[0]


def default_mlp_spec(input_dim, output_dim, hidden_dim=64):
    return MlpSpec(input_dim, (hidden_dim,), output_dim)


def default_env_spec(input_dim, output_dim, width=64, blocks=4):
    """Residual MLP: input projection followed by ``blocks`` skip layers."""
    return MlpSpec(input_dim, (width,) * (blocks + 1), output_dim, residual=True)


def default_location_spec(output_dim, rff_count=64, rff_scale=4.0, rff_seed=0,
                          hidden_dim=64):
    return LocationEncoderSpec(
        rff_count=rff_count,
        rff_scale=rff_scale,
        mlp=MlpSpec(2 * rff_count, (hidden_dim,), output_dim),
        rff_seed=rff_seed,
    )
