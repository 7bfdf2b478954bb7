"""Symmetric label-aware contrastive loss with analytic gradients.

The loss pairs a binding-modality batch z with another modality's batch y.
Each anchor i attracts every same-species partner j (the positive set
always contains the paired index i itself) and repels the rest of the
batch through a temperature-scaled softmax over dot products:

    L_fwd = sum_i -1/|P(i)| sum_{j in P(i)} log softmax_j(z_i . y_n / tau)
    L_bwd = the same with the roles of z and y swapped
    L     = (L_fwd + L_bwd) / 2

Optional pseudo-negative embeddings enter only the denominators of the
forward (z -> y) direction and never act as anchors; they are treated as
constants, so no gradient is reported for them.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import ConfigError, ShapeError
from .validation import check_embeddings


@dataclass(frozen=True)
class LossConfig:
    """Temperature and pseudo-negative budget for one training stage."""

    temperature: float = 0.07
    pseudo_negative_count: int = 0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if self.pseudo_negative_count < 0:
            raise ConfigError("pseudo_negative_count must be >= 0")


@dataclass
class ContrastiveBatch:
    """Paired unit-norm embeddings with species labels.

    ``pseudo_negatives`` holds optional extra y-side embeddings used as
    denominator-only negatives.
    """

    z: np.ndarray
    y: np.ndarray
    labels: np.ndarray
    pseudo_negatives: np.ndarray | None = None

    def __post_init__(self):
        # Loose unit-norm gate: tolerates finite-difference probes.
        self.z = check_embeddings(self.z, unit=True, atol=1e-3, name="z")
        self.y = check_embeddings(
            self.y, dim=self.z.shape[1], unit=True, atol=1e-3, name="y"
        )
        if self.y.shape[0] != self.z.shape[0]:
            raise ShapeError("z and y must have the same batch size")
        if self.z.shape[0] < 1:
            raise ShapeError("batch must contain at least one pair")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.z.shape[0],):
            raise ShapeError("labels must be one id per pair")
        if self.pseudo_negatives is not None:
            self.pseudo_negatives = check_embeddings(
                self.pseudo_negatives,
                dim=self.z.shape[1],
                unit=True,
                atol=1e-3,
                name="pseudo_negatives",
            )

    @property
    def size(self):
        return int(self.z.shape[0])


def _logsumexp_rows(s):
    m = s.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(s - m).sum(axis=1, keepdims=True)))[:, 0]


def _directional(anchors, targets, pos_mask, pos_size, tau, extra=None):
    """One direction of the loss: anchors over targets (+ optional extras).

    Returns (loss, grad_anchors, grad_targets).
    """
    n = anchors.shape[0]
    s = anchors @ targets.T / tau
    s_all = s if extra is None else np.hstack([s, anchors @ extra.T / tau])
    log_den = _logsumexp_rows(s_all)
    loss = float(np.sum(log_den - (pos_mask * s).sum(axis=1) / pos_size))

    p_full = np.exp(s_all - log_den[:, None])
    a = p_full[:, :n] - pos_mask / pos_size[:, None]
    grad_anchors = a @ targets / tau
    if extra is not None:
        grad_anchors += p_full[:, n:] @ extra / tau
    grad_targets = a.T @ anchors / tau
    return loss, grad_anchors, grad_targets


def supcon_clip_loss(batch, cfg):
    """Loss value and analytic gradients wrt the raw embedding coordinates.

    Returns (loss, grad_z, grad_y); gradients treat every coordinate of z
    and y as a free variable (no unit-sphere projection).
    """
    if not isinstance(cfg, LossConfig):
        cfg = LossConfig(*cfg)
    tau = float(cfg.temperature)
    if not tau > 0:
        raise ConfigError(f"temperature must be > 0, got {tau}")

    z, y, labels = batch.z, batch.y, batch.labels
    pos_mask = (labels[:, None] == labels[None, :]).astype(np.float64)
    pos_size = pos_mask.sum(axis=1)

    q = batch.pseudo_negatives
    if q is not None and q.shape[0] == 0:
        q = None
    loss_fwd, gz_fwd, gy_fwd = _directional(z, y, pos_mask, pos_size, tau, extra=q)
    loss_bwd, gy_bwd, gz_bwd = _directional(y, z, pos_mask, pos_size, tau)

    loss = 0.5 * (loss_fwd + loss_bwd)
    grad_z = 0.5 * (gz_fwd + gz_bwd)
    grad_y = 0.5 * (gy_fwd + gy_bwd)
    return loss, grad_z, grad_y


def sample_pseudo_negative_locations(count, rng):
    """Uniform-on-the-sphere locations: sin(lat) ~ U[-1, 1], lon ~ U[-180, 180).

    Returns (count, 2) rows of (lat, lon) degrees.
    """
    if count < 0:
        raise ConfigError("count must be >= 0")
    if count == 0:
        return np.zeros((0, 2))
    sin_lat = rng.uniform(-1.0, 1.0, size=count)
    lat = np.rad2deg(np.arcsin(sin_lat))
    lon = rng.uniform(-180.0, 180.0, size=count)
    return np.column_stack([lat, lon])


def with_pseudo_negatives(batch, location_encoder, count, rng):
    """Batch augmented with ``count`` encoded pseudo-negative locations."""
    if count == 0:
        return batch
    locs = sample_pseudo_negative_locations(count, rng)
    q = location_encoder.transform(locs)
    if batch.pseudo_negatives is not None:
        q = np.vstack([batch.pseudo_negatives, q])
    return replace(batch, pseudo_negatives=q)


def loss_gradcheck(batch, cfg, step=1e-5):
    """Max relative error of analytic vs central finite-difference gradients.

    Relative error per coordinate is |analytic - numeric| / (|numeric| + 1e-8).
    """
    if not step > 0:
        raise ConfigError("step must be > 0")
    _, grad_z, grad_y = supcon_clip_loss(batch, cfg)

    def value(z, y):
        probe = ContrastiveBatch(
            z=z, y=y, labels=batch.labels, pseudo_negatives=batch.pseudo_negatives
        )
        return supcon_clip_loss(probe, cfg)[0]

    worst = 0.0
    for which, analytic in (("z", grad_z), ("y", grad_y)):
        base = batch.z.copy() if which == "z" else batch.y.copy()
        other = batch.y if which == "z" else batch.z
        for idx in np.ndindex(base.shape):
            orig = base[idx]
            base[idx] = orig + step
            hi = value(base, other) if which == "z" else value(other, base)
            base[idx] = orig - step
            lo = value(base, other) if which == "z" else value(other, base)
            base[idx] = orig
            numeric = (hi - lo) / (2.0 * step)
            rel = abs(analytic[idx] - numeric) / (abs(numeric) + 1e-8)
            worst = max(worst, rel)
    return worst
