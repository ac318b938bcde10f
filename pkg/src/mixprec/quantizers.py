"""Uniform affine and generalized logarithmic quantizers.

Both quantizers are simulated ("fake") quantizers: tensors stay in floating
point, but values are snapped onto the low-bit grid so downstream code sees
exactly the error a b-bit integer kernel would introduce.

Conventions used throughout:

* rounding is round-half-away-from-zero (``_round_half_away``), everywhere,
* integer codes are unsigned, in ``[0, 2**bits - 1]``,
* per-channel parameters live along the output-channel axis of a weight
  matrix (axis 0 for ``(out, in)`` weights).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

PER_TENSOR = "per_tensor"
PER_CHANNEL = "per_channel"

#: Power-of-two bases tried by default when searching a logarithmic base.
DEFAULT_LOG_BASES = (2.0, np.sqrt(2.0), 2.0 ** 0.25)


def _round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer, halves away from zero (not banker's)."""
    x = np.asarray(x, dtype=np.float64)
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def _require_finite(x: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.size == 0:
        raise ValueError(f"{what} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite values")
    return arr


@dataclass(frozen=True)
class AffineParams:
    """Scale/zero-point pair for uniform asymmetric quantization.

    ``scale`` and ``zero_point`` are scalars for per-tensor granularity and
    1-D arrays (one entry per channel) for per-channel granularity along
    ``axis``.
    """

    scale: np.ndarray
    zero_point: np.ndarray
    bits: int
    granularity: str = PER_TENSOR
    axis: int = 0

    def __post_init__(self):
        scale = np.atleast_1d(np.asarray(self.scale, dtype=np.float64))
        zp = np.atleast_1d(np.asarray(self.zero_point, dtype=np.int64))
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "zero_point", zp)
        if not 2 <= self.bits <= 16:
            raise ValueError(f"bits must be in [2, 16], got {self.bits}")
        if self.granularity not in (PER_TENSOR, PER_CHANNEL):
            raise ValueError(f"unknown granularity {self.granularity!r}")
        if self.granularity == PER_TENSOR and scale.size != 1:
            raise ValueError("per-tensor params must be scalar")
        if scale.shape != zp.shape:
            raise ValueError("scale and zero_point shapes differ")
        if not np.all(scale > 0):
            raise ValueError("scale must be positive")
        if np.any(zp < 0) or np.any(zp > self.qmax):
            raise ValueError("zero_point outside code range")

    @property
    def qmax(self) -> int:
        return (1 << self.bits) - 1

    def _broadcast(self, ndim: int) -> tuple[np.ndarray, np.ndarray]:
        """Reshape params so they broadcast against an ndim-rank tensor."""
        if self.granularity == PER_TENSOR or ndim == 0:
            return self.scale.reshape(()), self.zero_point.reshape(())
        shape = [1] * ndim
        shape[self.axis] = self.scale.size
        return self.scale.reshape(shape), self.zero_point.reshape(shape)


@dataclass(frozen=True)
class LogParams:
    """Scale and base for logarithmic quantization of nonnegative tensors.

    The reconstruction grid is ``scale * base**(-k)`` for codes
    ``k = 0 .. 2**bits - 1``; ``base = 2`` is standard log2 quantization.
    """

    scale: float
    base: float
    bits: int

    def __post_init__(self):
        if not 2 <= self.bits <= 16:
            raise ValueError(f"bits must be in [2, 16], got {self.bits}")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError("scale must be positive and finite")
        if not (np.isfinite(self.base) and self.base > 1):
            raise ValueError("base must be > 1")

    @property
    def qmax(self) -> int:
        return (1 << self.bits) - 1

    def codebook(self) -> np.ndarray:
        """All representable values, largest (code 0) to smallest."""
        return dequantize_log(np.arange(self.qmax + 1), self)


UNIFORM = "uniform"
LOGARITHMIC = "logarithmic"


@dataclass(frozen=True)
class QuantScheme:
    """Dispatch wrapper pairing a quantizer kind with its parameters."""

    kind: str
    params: AffineParams | LogParams = field(repr=False)

    def __post_init__(self):
        if self.kind == UNIFORM:
            if not isinstance(self.params, AffineParams):
                raise ValueError("uniform scheme requires AffineParams")
        elif self.kind == LOGARITHMIC:
            if not isinstance(self.params, LogParams):
                raise ValueError("logarithmic scheme requires LogParams")
        else:
            raise ValueError(f"unknown scheme kind {self.kind!r}")

    @property
    def bits(self) -> int:
        return self.params.bits


def calibrate_uniform(
    samples: np.ndarray,
    bits: int,
    granularity: str = PER_TENSOR,
    axis: int = 0,
) -> AffineParams:
    """Min-max calibration of scale and zero-point.

    ``scale = (max - min) / (2**bits - 1)`` and
    ``zero_point = round(-min / scale)`` clamped to the code range, computed
    over the whole tensor (per-tensor) or per slice along ``axis``
    (per-channel).  A degenerate slice with ``max == min`` gets
    ``scale = 1`` and ``zero_point = clip(round(-min), 0, 2**bits - 1)`` so
    the constant value round-trips whenever it is representable.
    """
    arr = _require_finite(samples, "calibration samples")
    if not 2 <= bits <= 16:
        raise ValueError(f"bits must be in [2, 16], got {bits}")
    qmax = (1 << bits) - 1

    if granularity == PER_TENSOR:
        mn = np.array([arr.min()])
        mx = np.array([arr.max()])
    elif granularity == PER_CHANNEL:
        moved = np.moveaxis(arr, axis, 0).reshape(arr.shape[axis], -1)
        mn = moved.min(axis=1)
        mx = moved.max(axis=1)
    else:
        raise ValueError(f"unknown granularity {granularity!r}")

    degenerate = mx == mn
    scale = np.where(degenerate, 1.0, (mx - mn) / qmax)
    zp = np.clip(_round_half_away(-mn / scale), 0, qmax).astype(np.int64)
    return AffineParams(scale=scale, zero_point=zp, bits=bits,
                        granularity=granularity, axis=axis)


def quantize_uniform(x: np.ndarray, p: AffineParams) -> np.ndarray:
    """Map real values to integer codes: clip(round(x/s) + z, 0, 2**b - 1)."""
    arr = _require_finite(x, "input")
    scale, zp = p._broadcast(arr.ndim)
    codes = _round_half_away(arr / scale) + zp
    return np.clip(codes, 0, p.qmax).astype(np.int64)


def dequantize_uniform(q: np.ndarray, p: AffineParams) -> np.ndarray:
    """Reconstruct reals from codes: scale * (q - zero_point)."""
    codes = np.asarray(q)
    if np.any(codes < 0) or np.any(codes > p.qmax):
        raise ValueError(f"codes outside [0, {p.qmax}]")
    scale, zp = p._broadcast(codes.ndim)
    return scale * (codes.astype(np.float64) - zp)


def quantize_log(x: np.ndarray, p: LogParams) -> np.ndarray:
    """Map nonnegative values to log-domain codes.

    ``code = clip(round(-log(x/scale) / log(base)), 0, 2**bits - 1)``; exact
    zeros take the largest code (maximal attenuation), since the logarithm
    is undefined at zero and the smallest codebook entry is nearest.
    """
    arr = _require_finite(x, "input")
    if np.any(arr < 0):
        raise ValueError("logarithmic quantization requires nonnegative input")
    codes = np.full(arr.shape, p.qmax, dtype=np.float64)
    pos = arr > 0
    with np.errstate(divide="ignore"):
        codes[pos] = _round_half_away(-np.log(arr[pos] / p.scale) / np.log(p.base))
    return np.clip(codes, 0, p.qmax).astype(np.int64)


def dequantize_log(q: np.ndarray, p: LogParams) -> np.ndarray:
    """Reconstruct reals from log-domain codes: scale * base**(-q)."""
    codes = np.asarray(q)
    if np.any(codes < 0) or np.any(codes > p.qmax):
        raise ValueError(f"codes outside [0, {p.qmax}]")
    return p.scale * p.base ** (-codes.astype(np.float64))


def search_log_base(
    samples: np.ndarray,
    bits: int,
    candidates: Sequence[float] | None = None,
) -> LogParams:
    """Pick the base minimizing mean squared reconstruction error.

    ``scale`` is pinned to ``max(samples)`` so the largest sample sits on
    code 0.  Candidates default to ``{2, sqrt(2), 2**(1/4)}``; ties go to
    the smaller base.  An all-zero sample set falls back to ``scale = 1``
    (every input then maps to the largest code regardless of base).
    """
    arr = _require_finite(samples, "calibration samples")
    if np.any(arr < 0):
        raise ValueError("logarithmic calibration requires nonnegative samples")
    if candidates is None:
        candidates = DEFAULT_LOG_BASES
    cands = [float(c) for c in candidates]
    if not cands:
        raise ValueError("candidate base list is empty")
    if any(c <= 1 for c in cands):
        raise ValueError("candidate bases must be > 1")

    top = float(arr.max())
    scale = top if top > 0 else 1.0

    best: LogParams | None = None
    best_mse = np.inf
    for base in sorted(cands):
        p = LogParams(scale=scale, base=base, bits=bits)
        err = dequantize_log(quantize_log(arr, p), p) - arr
        mse = float(np.mean(err * err))
        if mse < best_mse:
            best, best_mse = p, mse
    assert best is not None
    return best


def fake_quant(x: np.ndarray, scheme: QuantScheme) -> np.ndarray:
    """Quantize-then-dequantize; output has the input's shape."""
    if scheme.kind == UNIFORM:
        out = dequantize_uniform(quantize_uniform(x, scheme.params), scheme.params)
    else:
        out = dequantize_log(quantize_log(x, scheme.params), scheme.params)
    return out.reshape(np.asarray(x).shape)
