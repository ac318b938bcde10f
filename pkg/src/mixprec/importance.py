"""Per-layer causal importance via zeroing perturbations.

A layer's score on one image is the KL divergence between the unperturbed
model's output distribution and the distribution after zeroing that layer's
activations: a large shift means the layer carries information the output
actually depends on.  Scores are normalized per image (so images are
comparable) and averaged over a calibration set into the importance vector
omega.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import rel_entr

from .network import ModelContext, output_distribution


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) in nats over discrete distributions.

    Inputs must already be smoothed (strictly positive where needed) and
    normalized to within 1e-6.  Zero-probability terms of ``p`` contribute
    zero.  The result is clamped at 0 so floating-point cancellation can
    never return a negative divergence.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("distributions must be nonnegative")
    for name, dist in (("p", p), ("q", q)):
        if abs(float(dist.sum()) - 1.0) > 1e-6:
            raise ValueError(f"{name} is not normalized (sum={dist.sum()!r})")
    val = float(rel_entr(p, q).sum())
    return max(val, 0.0)


def cmi_layer(
    ctx: ModelContext,
    image: np.ndarray,
    layer_id: int,
    baseline: np.ndarray | None = None,
) -> float:
    """Causal importance of one layer on one image.

    Returns KL(full-model distribution || zeroed-layer distribution); the
    full model is the first argument because the divergence is asymmetric.
    ``baseline`` lets callers reuse one unperturbed forward across all the
    layer perturbations for an image.
    """
    if not ctx.spec.layers[layer_id].quantizable:
        raise ValueError(f"layer {layer_id} is not quantizable")
    if baseline is None:
        baseline = output_distribution(ctx.forward(image).logits)
    perturbed = output_distribution(ctx.forward(image, zero_mask={layer_id}).logits)
    return kl_divergence(baseline, perturbed)


def normalize_scores(raw: np.ndarray) -> np.ndarray:
    """Scores divided by their total; an all-zero vector becomes uniform."""
    arr = np.asarray(raw, dtype=np.float64)
    if np.any(arr < 0):
        raise ValueError("raw scores must be nonnegative")
    total = float(arr.sum())
    if total == 0.0:
        return np.full(arr.shape, 1.0 / arr.size)
    return arr / total


@dataclass(frozen=True)
class ImportanceProfile:
    """Normalized per-image scores, their average omega, and the raw
    (unnormalized) scores the synergy metric consumes."""

    layer_ids: tuple[int, ...]
    per_image: np.ndarray  # (T, L) normalized rows
    raw: np.ndarray        # (T, L) unnormalized KL scores
    omega: np.ndarray      # (L,) column means of per_image

    @property
    def T(self) -> int:
        return self.per_image.shape[0]


def importance_profile(ctx: ModelContext, images: Sequence[np.ndarray]) -> ImportanceProfile:
    """Profile every quantizable layer over a calibration set.

    Costs exactly T * (L + 1) forwards: one unperturbed baseline per image,
    reused across the L single-layer perturbations.
    """
    if len(images) < 1:
        raise ValueError("need at least one calibration image")
    layer_ids = ctx.spec.quantizable_ids()
    raw = np.empty((len(images), len(layer_ids)))
    for t, image in enumerate(images):
        baseline = output_distribution(ctx.forward(image).logits)
        for j, lid in enumerate(layer_ids):
            raw[t, j] = cmi_layer(ctx, image, lid, baseline=baseline)
    per_image = np.stack([normalize_scores(row) for row in raw])
    omega = per_image.mean(axis=0)
    return ImportanceProfile(
        layer_ids=tuple(layer_ids), per_image=per_image, raw=raw, omega=omega)
