"""Static per-layer cost statistics: parameter counts, MACs, model size,
and BitOps.

Only quantizable layers enter the optimization vectors; everything kept in
full precision (patch embedding, head, layer norms) is reported separately
as a fixed 32-bit overhead.  One MAC is one multiply plus one accumulate;
bias additions are not counted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import network
from .network import NetworkSpec

FULL_PRECISION_BITS = 32

_LINEAR_KINDS = (network.PATCH_EMBED, network.QKV, network.PROJ,
                 network.FC1, network.FC2, network.HEAD)


@dataclass(frozen=True)
class LayerStats:
    """Parameter and MAC counts for the quantizable layers, in network
    order (the same ordering importance and synergy profiles use)."""

    layer_ids: tuple[int, ...]
    w_count: np.ndarray  # int64, parameters per layer
    macs: np.ndarray     # int64, multiply-accumulates per forward pass

    def __post_init__(self):
        if len(self.layer_ids) != self.w_count.size or self.w_count.size != self.macs.size:
            raise ValueError("stats vectors must share one length")
        if np.any(self.w_count < 0) or np.any(self.macs < 0):
            raise ValueError("counts must be nonnegative")


def _layer_params(layer) -> int:
    if layer.kind in _LINEAR_KINDS:
        return layer.dims["d_in"] * layer.dims["d_out"] + layer.dims["d_out"]
    if layer.kind == network.LAYER_NORM:
        return 2 * layer.dims["d"]
    return 0  # matmul / softmax / residual carry no parameters


def _layer_macs(layer) -> int:
    if layer.kind in _LINEAR_KINDS:
        return layer.dims["n_tokens"] * layer.dims["d_in"] * layer.dims["d_out"]
    if layer.kind in (network.MATMUL1, network.MATMUL2):
        d = layer.dims
        return d["heads"] * d["n_tokens"] * d["n_tokens"] * d["head_dim"]
    return 0  # softmax / layer norm / residual: no MACs counted


def count_params(spec: NetworkSpec) -> np.ndarray:
    """|w_l| for each quantizable layer in network order."""
    return np.array([_layer_params(spec.layers[i]) for i in spec.quantizable_ids()],
                    dtype=np.int64)


def count_macs(spec: NetworkSpec) -> np.ndarray:
    """MAC_l for each quantizable layer in network order."""
    return np.array([_layer_macs(spec.layers[i]) for i in spec.quantizable_ids()],
                    dtype=np.int64)


def layer_stats(spec: NetworkSpec) -> LayerStats:
    return LayerStats(layer_ids=tuple(spec.quantizable_ids()),
                      w_count=count_params(spec), macs=count_macs(spec))


def unquantized_overhead_bits(spec: NetworkSpec) -> int:
    """Bits spent on every parameter outside the optimization vector,
    stored at full precision."""
    total = sum(_layer_params(l) for l in spec.layers if not l.quantizable)
    return total * FULL_PRECISION_BITS


def model_size_bits(stats: LayerStats, bits) -> int:
    """Sum of |w_l| * b_l over the quantizable layers."""
    b = np.asarray(bits, dtype=np.int64)
    if b.size != stats.w_count.size:
        raise ValueError("bits vector length does not match stats")
    return int(np.dot(stats.w_count, b))


def bitops(stats: LayerStats, bits) -> int:
    """Sum of MAC_l * b_l**2 over the quantizable layers."""
    b = np.asarray(bits, dtype=np.int64)
    if b.size != stats.macs.size:
        raise ValueError("bits vector length does not match stats")
    return int(np.dot(stats.macs, b * b))
