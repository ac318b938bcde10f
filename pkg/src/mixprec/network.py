"""Forward-only inference for a small ViT-style classifier.

The network is described declaratively by :class:`NetworkSpec`: an ordered
list of layers (patch embedding, then per block LN -> attention -> residual
-> LN -> MLP -> residual, then a mean-pool classifier head).  Every layer
has an integer id; the quantizable ones (QKV, MatMul1, MatMul2, Proj, FC1,
FC2 -- patch embedding and head stay in full precision as the first and
last layers) can be

* tapped: their output tensor is recorded in ``ForwardResult.taps``,
* zeroed: their output is replaced by zeros before anything downstream
  consumes it, leaving residual skip paths intact,
* fake-quantized: weights per-channel, activations per-tensor, and the
  post-softmax attention map with a logarithmic quantizer.

``model_forward`` is a pure function of (spec, weights, input, config,
mask); identical inputs give bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.special import ndtr

from .quantizers import AffineParams, QuantScheme, fake_quant

PATCH_EMBED = "patch_embed"
LAYER_NORM = "layer_norm"
QKV = "qkv"
MATMUL1 = "matmul1"
SOFTMAX = "softmax"
MATMUL2 = "matmul2"
PROJ = "proj"
RESIDUAL = "residual"
FC1 = "fc1"
FC2 = "fc2"
HEAD = "head"

#: Kinds that may carry quantization schemes (first/last layers of a
#: network are still forced to full precision when the spec is built).
QUANTIZABLE_KINDS = frozenset(
    {PATCH_EMBED, QKV, MATMUL1, MATMUL2, PROJ, FC1, FC2, HEAD}
)

_PROB_FLOOR = 1e-12  # smoothing floor applied before any KL


@dataclass(frozen=True)
class LayerSpec:
    id: int
    kind: str
    name: str
    dims: dict
    quantizable: bool


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[LayerSpec, ...]
    blocks: int
    tokens: int
    embed: int
    heads: int
    head_dim: int
    mlp_dim: int
    classes: int
    patch_size: int

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size

    @property
    def image_side(self) -> int:
        side = int(round(self.tokens ** 0.5))
        if side * side != self.tokens:
            raise ValueError("token count must be a perfect square")
        return side * self.patch_size

    def quantizable_ids(self) -> list[int]:
        return [l.id for l in self.layers if l.quantizable]

    def layer(self, layer_id: int) -> LayerSpec:
        return self.layers[layer_id]


def toy_network_spec(
    blocks: int = 4,
    tokens: int = 16,
    embed: int = 64,
    heads: int = 4,
    mlp_dim: int = 256,
    classes: int = 10,
    patch_size: int = 4,
) -> NetworkSpec:
    """Build the default desk-scale network (4 blocks, 16 tokens, D=64)."""
    if embed % heads != 0:
        raise ValueError("embed dim must divide evenly across heads")
    head_dim = embed // heads
    patch_dim = patch_size * patch_size

    layers: list[LayerSpec] = []

    def add(kind, name, dims, quantizable):
        layers.append(LayerSpec(len(layers), kind, name, dims, quantizable))

    add(PATCH_EMBED, "patch_embed",
        {"d_in": patch_dim, "d_out": embed, "n_tokens": tokens}, True)
    for b in range(blocks):
        p = f"block{b}."
        add(LAYER_NORM, p + "ln1", {"d": embed}, False)
        add(QKV, p + "qkv",
            {"d_in": embed, "d_out": 3 * embed, "n_tokens": tokens}, True)
        add(MATMUL1, p + "matmul1",
            {"heads": heads, "n_tokens": tokens, "head_dim": head_dim}, True)
        add(SOFTMAX, p + "softmax", {"heads": heads, "n_tokens": tokens}, False)
        add(MATMUL2, p + "matmul2",
            {"heads": heads, "n_tokens": tokens, "head_dim": head_dim}, True)
        add(PROJ, p + "proj",
            {"d_in": embed, "d_out": embed, "n_tokens": tokens}, True)
        add(RESIDUAL, p + "res1", {"d": embed}, False)
        add(LAYER_NORM, p + "ln2", {"d": embed}, False)
        add(FC1, p + "fc1",
            {"d_in": embed, "d_out": mlp_dim, "n_tokens": tokens}, True)
        add(FC2, p + "fc2",
            {"d_in": mlp_dim, "d_out": embed, "n_tokens": tokens}, True)
        add(RESIDUAL, p + "res2", {"d": embed}, False)
    add(HEAD, "head", {"d_in": embed, "d_out": classes, "n_tokens": 1}, True)

    # first and last layers stay unquantized
    first, last = layers[0], layers[-1]
    layers[0] = LayerSpec(first.id, first.kind, first.name, first.dims, False)
    layers[-1] = LayerSpec(last.id, last.kind, last.name, last.dims, False)

    return NetworkSpec(
        layers=tuple(layers), blocks=blocks, tokens=tokens, embed=embed,
        heads=heads, head_dim=head_dim, mlp_dim=mlp_dim, classes=classes,
        patch_size=patch_size,
    )


def param_shapes(spec: NetworkSpec) -> dict[str, tuple[int, ...]]:
    """Parameter name -> shape.  Linear weights are (out, in); a layer's
    per-channel quantization axis is therefore axis 0."""
    shapes: dict[str, tuple[int, ...]] = {}
    for layer in spec.layers:
        if layer.kind in (PATCH_EMBED, QKV, PROJ, FC1, FC2, HEAD):
            shapes[layer.name + ".weight"] = (layer.dims["d_out"], layer.dims["d_in"])
            shapes[layer.name + ".bias"] = (layer.dims["d_out"],)
        elif layer.kind == LAYER_NORM:
            shapes[layer.name + ".gamma"] = (layer.dims["d"],)
            shapes[layer.name + ".beta"] = (layer.dims["d"],)
    return shapes


def init_weights(spec: NetworkSpec, seed: int, block_gain_low: float = 0.35,
                 block_gain_high: float = 2.8, block_gain_jitter: float = 1.2,
                 head_gain: float = 2.0):
    """Seeded random weights for the toy network.

    All weight matrices of a block share one gain on top of Xavier-style
    scaling: the final block gets ``block_gain_high`` and earlier blocks
    ``block_gain_low`` (each with log-uniform jitter), so the network has
    one dominant stage and quieter early stages.  That gives the layer
    importance profile real, spatially coherent structure -- neighboring
    layers inside a block matter together -- instead of every layer
    mattering equally, which would make bit allocation trivial.  The
    classifier head is scaled by ``head_gain`` so output distributions are
    confident enough for zeroing perturbations to register clearly.

    Pass 1.0 for all gains to get a plain homogeneous toy.

    Values are rounded to float32 (the on-disk precision) and returned as
    float64 arrays, so weights initialized from a seed and weights
    reloaded from disk are bit-identical.
    """
    rng = np.random.default_rng(seed)
    block_gain = [
        (block_gain_high if b == spec.blocks - 1 else block_gain_low)
        * block_gain_jitter ** rng.uniform(-1.0, 1.0)
        for b in range(spec.blocks)
    ]
    weights: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(spec).items():
        if name.endswith(".weight"):
            out, inp = shape
            std = (2.0 / (inp + out)) ** 0.5
            gain = 1.0
            if name.startswith("block"):
                gain = block_gain[int(name.split(".", 1)[0][len("block"):])]
            elif name.startswith("head"):
                gain = head_gain
            w = rng.standard_normal(shape) * std * gain
        elif name.endswith(".bias"):
            w = rng.standard_normal(shape) * 0.02
        elif name.endswith(".gamma"):
            w = 1.0 + rng.standard_normal(shape) * 0.1
        else:  # beta
            w = rng.standard_normal(shape) * 0.1
        weights[name] = w.astype(np.float32).astype(np.float64)
    return weights


def flat_init_weights(spec: NetworkSpec, seed: int):
    """Homogeneous variant of `init_weights` (all gains 1)."""
    return init_weights(spec, seed, block_gain_low=1.0, block_gain_high=1.0,
                        block_gain_jitter=1.0, head_gain=1.0)


def unfold_patches(image: np.ndarray, patch_size: int) -> np.ndarray:
    """(side, side) image -> (n_patches, patch_size**2) row-major tokens."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise ValueError(f"expected a square 2-D image, got shape {img.shape}")
    side = img.shape[0]
    if side % patch_size != 0:
        raise ValueError("image side must be a multiple of the patch size")
    g = side // patch_size
    patches = img.reshape(g, patch_size, g, patch_size).transpose(0, 2, 1, 3)
    return patches.reshape(g * g, patch_size * patch_size)


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
               eps: float = 1e-5) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return gamma * (x - mean) / np.sqrt(var + eps) + beta


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact GELU, x * Phi(x) with the standard normal CDF."""
    return x * ndtr(x)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def output_distribution(logits: np.ndarray) -> np.ndarray:
    """Categorical distribution over classes, smoothed away from zero.

    Softmax with max subtraction, then ``(p + eps) / (1 + C * eps)`` with
    ``eps = 1e-12`` so every entry is strictly positive before any KL.
    """
    arr = np.asarray(logits, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError("logits contain non-finite values")
    p = softmax(arr)
    return (p + _PROB_FLOOR) / (1.0 + arr.size * _PROB_FLOOR)


@dataclass(frozen=True)
class LayerQuantConfig:
    """Quantization schemes attached to one layer.

    ``weight`` fake-quantizes the weight matrix (per-channel affine),
    ``output`` the layer's output activation (per-tensor affine), and
    ``input`` -- used by MatMul2 only -- the post-softmax attention map
    (logarithmic).  ``weight_value`` optionally carries the already
    fake-quantized weight tensor so repeated forwards do not re-quantize
    a constant; it must be the quantization of the weights the forward is
    run with.
    """

    weight: AffineParams | None = None
    output: QuantScheme | None = None
    input: QuantScheme | None = None
    weight_value: np.ndarray | None = None


@dataclass
class ForwardResult:
    logits: np.ndarray
    taps: dict[int, np.ndarray] = field(default_factory=dict)
    softmax_taps: dict[int, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class _BlockIds:
    ln1: int
    qkv: int
    matmul1: int
    softmax: int
    matmul2: int
    proj: int
    res1: int
    ln2: int
    fc1: int
    fc2: int
    res2: int


def _block_ids(spec: NetworkSpec, block: int) -> _BlockIds:
    base = 1 + 11 * block
    ids = _BlockIds(*range(base, base + 11))
    expect = [LAYER_NORM, QKV, MATMUL1, SOFTMAX, MATMUL2, PROJ, RESIDUAL,
              LAYER_NORM, FC1, FC2, RESIDUAL]
    kinds = [spec.layers[base + i].kind for i in range(11)]
    if kinds != expect:
        raise ValueError(f"block {block} layer ordering is malformed: {kinds}")
    return ids


class _Hook:
    """Per-layer processing shared by all forward paths.

    Order per layer output: fake-quantize (if configured), tap (if the
    layer is quantizable), zero (if masked).  Taps therefore record the
    value the rest of the network would have consumed had the layer not
    been zeroed.
    """

    def __init__(self, spec, quant_config, zero_mask, result: ForwardResult):
        self.spec = spec
        self.config: Mapping[int, LayerQuantConfig] = quant_config or {}
        self.zero_mask = frozenset(zero_mask)
        self.result = result

    def weight(self, layer_id: int, w: np.ndarray) -> np.ndarray:
        cfg = self.config.get(layer_id)
        if cfg is None or cfg.weight is None:
            return w
        if cfg.weight_value is not None:
            return cfg.weight_value
        return fake_quant(w, QuantScheme("uniform", cfg.weight))

    def out(self, layer_id: int, value: np.ndarray) -> np.ndarray:
        cfg = self.config.get(layer_id)
        if cfg is not None and cfg.output is not None:
            value = fake_quant(value, cfg.output)
        if self.spec.layers[layer_id].quantizable:
            self.result.taps[layer_id] = value
        if layer_id in self.zero_mask:
            value = np.zeros_like(value)
        return value

    def post_softmax(self, softmax_id: int, matmul2_id: int,
                     attn: np.ndarray) -> np.ndarray:
        self.result.softmax_taps[softmax_id] = attn
        cfg = self.config.get(matmul2_id)
        if cfg is not None and cfg.input is not None:
            attn = fake_quant(attn, cfg.input)
        return attn


def _linear(x, weights, name, hook, layer_id, mac_counter=None):
    w = hook.weight(layer_id, weights[name + ".weight"])
    if mac_counter is not None:
        n = 1 if x.ndim == 1 else x.shape[0]
        mac_counter[layer_id] = mac_counter.get(layer_id, 0) + n * w.shape[0] * w.shape[1]
    return x @ w.T + weights[name + ".bias"]


def mhsa_forward(x, weights, spec, ids: _BlockIds, hook: _Hook,
                 mac_counter=None):
    """Multi-head self-attention: softmax(Q K^T / sqrt(D_h)) V, heads
    concatenated and projected."""
    n, d = x.shape
    h, dh = spec.heads, spec.head_dim
    prefix = spec.layers[ids.qkv].name.rsplit(".", 1)[0] + "."

    qkv = _linear(x, weights, prefix + "qkv", hook, ids.qkv, mac_counter)
    qkv = hook.out(ids.qkv, qkv)
    q, k, v = (m.reshape(n, h, dh).transpose(1, 0, 2) for m in np.split(qkv, 3, axis=1))

    scores = q @ k.transpose(0, 2, 1) / np.sqrt(dh)
    if mac_counter is not None:
        mac_counter[ids.matmul1] = mac_counter.get(ids.matmul1, 0) + h * n * dh * n
    scores = hook.out(ids.matmul1, scores)

    attn = softmax(scores, axis=-1)
    attn = hook.post_softmax(ids.softmax, ids.matmul2, attn)

    ctx = attn @ v
    if mac_counter is not None:
        mac_counter[ids.matmul2] = mac_counter.get(ids.matmul2, 0) + h * n * n * dh
    ctx = ctx.transpose(1, 0, 2).reshape(n, d)
    ctx = hook.out(ids.matmul2, ctx)

    out = _linear(ctx, weights, prefix + "proj", hook, ids.proj, mac_counter)
    return hook.out(ids.proj, out)


def mlp_forward(y, weights, prefix, ids: _BlockIds, hook: _Hook,
                mac_counter=None):
    """Two linear layers with an exact GELU between them."""
    h1 = _linear(y, weights, prefix + "fc1", hook, ids.fc1, mac_counter)
    h1 = hook.out(ids.fc1, h1)
    out = _linear(gelu(h1), weights, prefix + "fc2", hook, ids.fc2, mac_counter)
    return hook.out(ids.fc2, out)


def block_forward(x, weights, spec, block: int, hook: _Hook,
                  mac_counter=None):
    """One transformer block: X + MHSA(LN(X)), then Y + MLP(LN(Y))."""
    ids = _block_ids(spec, block)
    prefix = f"block{block}."
    normed = layer_norm(x, weights[prefix + "ln1.gamma"], weights[prefix + "ln1.beta"])
    y = x + mhsa_forward(normed, weights, spec, ids, hook, mac_counter)
    normed = layer_norm(y, weights[prefix + "ln2.gamma"], weights[prefix + "ln2.beta"])
    return y + mlp_forward(normed, weights, prefix, ids, hook, mac_counter)


def model_forward(
    spec: NetworkSpec,
    weights: Mapping[str, np.ndarray],
    image: np.ndarray,
    quant_config: Mapping[int, LayerQuantConfig] | None = None,
    zero_mask=frozenset(),
    mac_counter: dict[int, int] | None = None,
) -> ForwardResult:
    """Run the network on one image.

    ``zero_mask`` is a set of quantizable layer ids whose outputs are
    replaced by zeros before downstream consumption (taps still record the
    unzeroed value).  ``mac_counter``, when given, accumulates the number
    of multiply-accumulates actually performed per layer.
    """
    quantizable = set(spec.quantizable_ids())
    unknown = set(zero_mask) - quantizable
    if unknown:
        raise ValueError(f"zero_mask contains non-quantizable layer ids: {sorted(unknown)}")

    result = ForwardResult(logits=np.empty(0))
    hook = _Hook(spec, quant_config, zero_mask, result)

    tokens = unfold_patches(image, spec.patch_size)
    if tokens.shape[0] != spec.tokens:
        raise ValueError(
            f"image yields {tokens.shape[0]} patches, spec expects {spec.tokens}")

    patch_id = spec.layers[0].id
    x = _linear(tokens, weights, "patch_embed", hook, patch_id, mac_counter)
    x = hook.out(patch_id, x)

    for b in range(spec.blocks):
        x = block_forward(x, weights, spec, b, hook, mac_counter)

    pooled = x.mean(axis=0)
    head_id = spec.layers[-1].id
    logits = _linear(pooled, weights, "head", hook, head_id, mac_counter)
    logits = hook.out(head_id, logits)

    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("forward pass produced non-finite logits")
    result.logits = logits
    return result


@dataclass
class ModelContext:
    """Bundle of (spec, weights, optional quant config) with a forward
    counter, so profiling cost can be audited."""

    spec: NetworkSpec
    weights: Mapping[str, np.ndarray]
    quant_config: Mapping[int, LayerQuantConfig] | None = None
    forward_count: int = 0

    def forward(self, image, zero_mask=frozenset()) -> ForwardResult:
        self.forward_count += 1
        return model_forward(self.spec, self.weights, image,
                             quant_config=self.quant_config,
                             zero_mask=zero_mask)
