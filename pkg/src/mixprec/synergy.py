"""Cross-layer synergy for adjacent quantizable layer pairs.

Two neighboring layers whose per-image importance scores track each other
closely are treated as strongly coupled and should receive similar
bit-widths.  The per-image coupling is the inverse absolute score
difference (stabilized by epsilon), averaged over images and passed
through log1p to tame the blow-up when scores are nearly identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_EPSILON = 1e-6


def pair_synergy_per_image(i_l: float, i_m: float, epsilon: float = DEFAULT_EPSILON) -> float:
    """1 / (|I_l - I_m| + epsilon) for one image's raw scores."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if i_l < 0 or i_m < 0:
        raise ValueError("importance scores must be nonnegative")
    return 1.0 / (abs(i_l - i_m) + epsilon)


@dataclass(frozen=True)
class SynergyProfile:
    pairs: tuple[tuple[int, int], ...]  # adjacent quantizable layer ids
    s_hat: np.ndarray                   # (L - 1,) stabilized synergies
    epsilon: float
    T: int


def synergy_profile(raw_cmi: np.ndarray, layer_ids, epsilon: float = DEFAULT_EPSILON) -> SynergyProfile:
    """Stabilized synergy for each consecutive pair of quantizable layers.

    ``raw_cmi`` is the (T, L) matrix of unnormalized per-image importance
    scores in network layer order; adjacency spans block boundaries (the
    last layer of one block pairs with the first of the next).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    raw = np.asarray(raw_cmi, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] < 1:
        raise ValueError("raw_cmi must be a (T, L) matrix with T >= 1")
    ids = tuple(int(i) for i in layer_ids)
    if len(ids) != raw.shape[1]:
        raise ValueError("layer_ids length does not match raw_cmi columns")
    per_image = 1.0 / (np.abs(raw[:, :-1] - raw[:, 1:]) + epsilon)
    s_hat = np.log1p(per_image.mean(axis=0))
    pairs = tuple(zip(ids[:-1], ids[1:]))
    return SynergyProfile(pairs=pairs, s_hat=s_hat, epsilon=epsilon,
                          T=raw.shape[0])
