"""End-to-end orchestration: profile -> allocate -> evaluate.

Everything is deterministic given (spec, seed).  Randomness comes from
numpy's PCG64 generator; independent streams (weights, calibration images,
evaluation images) are derived from the user seed with
``derive_seed(seed, stream)`` so no stream aliases another.
"""

from __future__ import annotations

import datetime as _dt
from typing import Mapping, Sequence

import numpy as np

from . import allocation as alloc_mod
from . import io as io_mod
from .allocation import (AllocationProblem, BitAllocation, DEFAULT_BIT_SET,
                         DEFAULT_LAMBDA, build_problem, independent_variant,
                         importance_only_variant, solve_bnb, verify_allocation)
from .importance import importance_profile, kl_divergence
from .network import (LayerQuantConfig, ModelContext, NetworkSpec,
                      init_weights, model_forward, output_distribution)
from .profiling import layer_stats, model_size_bits, bitops as bitops_of, \
    unquantized_overhead_bits
from .quantizers import (PER_CHANNEL, PER_TENSOR, QuantScheme, UNIFORM,
                         LOGARITHMIC, calibrate_uniform, fake_quant,
                         search_log_base)
from .synergy import synergy_profile

MODES = ("synergy", "independent", "importance-only")

_WEIGHT_STREAM = 0
_CALIB_STREAM = 1
_EVAL_STREAM = 2

DEFAULT_CALIB_IMAGES = 64   # importance/synergy averaging set
DEFAULT_QUANT_CALIB = 32    # images used to fit activation ranges
DEFAULT_EVAL_IMAGES = 32


def derive_seed(seed: int, stream: int) -> int:
    """Stable per-stream sub-seed (PCG64 seed sequence hashing)."""
    return int(np.random.SeedSequence([int(seed), int(stream)]).generate_state(1, np.uint64)[0])


def generate_synthetic(seed: int, count: int, shape: Sequence[int]) -> np.ndarray:
    """Seeded standard-normal batch of ``count`` tensors of ``shape``.

    float32 payload (the on-disk tensor precision); the same seed gives a
    bit-identical batch on every platform.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    return rng.standard_normal((count, *shape)).astype(np.float32).astype(np.float64)


def _timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


# ---------------------------------------------------------------------------
# calibration


def collect_activation_samples(spec, weights, images):
    """Full-precision forwards over the calibration images, pooling every
    quantizable layer's outputs (and the post-softmax maps) for range
    fitting."""
    act: dict[int, list[np.ndarray]] = {}
    smx: dict[int, list[np.ndarray]] = {}
    for image in images:
        res = model_forward(spec, weights, image)
        for lid, tensor in res.taps.items():
            act.setdefault(lid, []).append(tensor.ravel())
        for lid, tensor in res.softmax_taps.items():
            smx.setdefault(lid, []).append(tensor.ravel())
    return ({k: np.concatenate(v) for k, v in act.items()},
            {k: np.concatenate(v) for k, v in smx.items()})


def build_quant_config(
    spec: NetworkSpec,
    weights: Mapping[str, np.ndarray],
    bits_by_layer: Mapping[int, int],
    act_samples: Mapping[int, np.ndarray],
    softmax_samples: Mapping[int, np.ndarray],
    log_candidates=None,
) -> dict[int, LayerQuantConfig]:
    """Per-layer schemes for a bit assignment.

    Weights get per-channel affine parameters along the output-channel
    axis; activations get per-tensor affine parameters fitted on the
    calibration taps.  The post-softmax attention map feeding MatMul2 gets
    a logarithmic quantizer whose base is searched per block.
    """
    from . import network as net

    config: dict[int, LayerQuantConfig] = {}
    softmax_by_matmul2 = {}
    for b in range(spec.blocks):
        base = 1 + 11 * b
        softmax_by_matmul2[base + 4] = base + 3  # matmul2 id -> softmax id

    for lid, bits in bits_by_layer.items():
        layer = spec.layers[lid]
        if not layer.quantizable:
            raise ValueError(f"layer {lid} ({layer.name}) is not quantizable")
        wkey = layer.name + ".weight"
        weight_params = None
        weight_value = None
        if wkey in weights:
            weight_params = calibrate_uniform(weights[wkey], bits,
                                              granularity=PER_CHANNEL, axis=0)
            weight_value = fake_quant(weights[wkey],
                                      QuantScheme(UNIFORM, weight_params))
        output_scheme = None
        if lid in act_samples:
            output_scheme = QuantScheme(
                UNIFORM, calibrate_uniform(act_samples[lid], bits,
                                           granularity=PER_TENSOR))
        input_scheme = None
        if layer.kind == net.MATMUL2:
            smx_id = softmax_by_matmul2[lid]
            input_scheme = QuantScheme(
                LOGARITHMIC, search_log_base(softmax_samples[smx_id], bits,
                                             candidates=log_candidates))
        config[lid] = LayerQuantConfig(weight=weight_params,
                                       output=output_scheme,
                                       input=input_scheme,
                                       weight_value=weight_value)
    return config


# ---------------------------------------------------------------------------
# pipeline stages


def run_profile(spec: NetworkSpec, seed: int, T: int = DEFAULT_CALIB_IMAGES,
                weights: Mapping[str, np.ndarray] | None = None,
                images: np.ndarray | None = None) -> io_mod.ProfileDocument:
    """Importance + synergy + static stats for a seeded toy model."""
    if T < 1:
        raise ValueError("need T >= 1 calibration images")
    if weights is None:
        weights = init_weights(spec, derive_seed(seed, _WEIGHT_STREAM))
    if images is None:
        side = spec.image_side
        images = generate_synthetic(derive_seed(seed, _CALIB_STREAM), T, (side, side))
    elif len(images) != T:
        raise ValueError(f"got {len(images)} images but T={T}")
    ctx = ModelContext(spec, weights)
    imp = importance_profile(ctx, list(images))
    syn = synergy_profile(imp.raw, imp.layer_ids)
    return io_mod.ProfileDocument(
        spec_hash=io_mod.spec_hash(spec),
        seed=int(seed),
        created=_timestamp(),
        importance=imp,
        synergy=syn,
        stats=layer_stats(spec),
        overhead_bits=unquantized_overhead_bits(spec),
    )


def problem_from_profile(profile: io_mod.ProfileDocument, target_bits: int,
                         bit_set=DEFAULT_BIT_SET, lam: float = DEFAULT_LAMBDA,
                         mode: str = "synergy", size_budget: int | None = None,
                         bitops_budget: int | None = None) -> AllocationProblem:
    """Budgets default to the uniform ``target_bits`` baseline; explicit
    overrides allow tighter (possibly infeasible) budgets."""
    import dataclasses

    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    bit_set = tuple(sorted(int(b) for b in bit_set))
    if not bit_set[0] <= target_bits <= bit_set[-1]:
        raise ValueError(
            f"target_bits={target_bits} outside candidate range {bit_set}")
    problem = build_problem(profile.importance, profile.synergy, profile.stats,
                            target_bits, bit_set=bit_set, lam=lam)
    if size_budget is not None or bitops_budget is not None:
        problem = dataclasses.replace(
            problem,
            size_budget=size_budget if size_budget is not None else problem.size_budget,
            bitops_budget=bitops_budget if bitops_budget is not None else problem.bitops_budget)
    if mode == "independent":
        problem = independent_variant(problem)
    elif mode == "importance-only":
        problem = importance_only_variant(problem)
    return problem


def run_allocate(profile: io_mod.ProfileDocument, target_bits: int,
                 bit_set=DEFAULT_BIT_SET, lam: float = DEFAULT_LAMBDA,
                 mode: str = "synergy", size_budget: int | None = None,
                 bitops_budget: int | None = None) -> io_mod.AllocationDocument:
    """Solve the bit assignment for a stored profile."""
    problem = problem_from_profile(profile, target_bits, bit_set, lam, mode,
                                   size_budget=size_budget,
                                   bitops_budget=bitops_budget)
    result = solve_bnb(problem)
    slack_size = slack_bitops = None
    if result.feasible:
        check = verify_allocation(problem, result)
        slack_size, slack_bitops = check.slack_size, check.slack_bitops
    return io_mod.AllocationDocument(
        spec_hash=profile.spec_hash, mode=mode, target_bits=int(target_bits),
        bit_set=tuple(sorted(int(b) for b in bit_set)), lam=problem.lam,
        allocation=result, slack_size=slack_size, slack_bitops=slack_bitops)


def quantized_config_for_bits(spec, weights, bits, calib_images,
                              log_candidates=None):
    """Fit a full per-layer quantization config for one bits vector."""
    ids = spec.quantizable_ids()
    if len(bits) != len(ids):
        raise ValueError("bits vector length does not match quantizable layers")
    act, smx = collect_activation_samples(spec, weights, calib_images)
    return build_quant_config(spec, weights, dict(zip(ids, bits)), act, smx,
                              log_candidates=log_candidates)


def evaluate_configurations(
    spec: NetworkSpec,
    weights: Mapping[str, np.ndarray],
    labeled_bits: Sequence[tuple],
    calib_images: np.ndarray,
    eval_images: np.ndarray,
) -> io_mod.EvaluationReport:
    """Score configurations by mean output KL and logit MSE against the
    full-precision model over the evaluation set.

    ``labeled_bits`` rows are ``(label, bits)`` or ``(label, bits,
    size_bits, bitops)``; ``None`` bits denote full precision.  The
    explicit cost fields let allocation rows report their budget envelope
    (the footprint the model is provisioned to, which equals the uniform
    baseline by construction); rows without them report the exact cost of
    the bits vector.  One activation-range calibration pass is shared by
    all configurations.
    """
    stats = layer_stats(spec)
    ids = spec.quantizable_ids()
    base_dists = []
    base_logits = []
    for image in eval_images:
        res = model_forward(spec, weights, image)
        base_logits.append(res.logits)
        base_dists.append(output_distribution(res.logits))

    act, smx = collect_activation_samples(spec, weights, calib_images)

    rows = []
    for entry in labeled_bits:
        label, bits = entry[0], entry[1]
        size_override = entry[2] if len(entry) > 2 else None
        bitops_override = entry[3] if len(entry) > 3 else None
        if bits is None:
            rows.append(io_mod.EvalRow(
                label=label, bits=None, mean_kl=0.0, mean_logit_mse=0.0,
                size_bits=model_size_bits(stats, [32] * len(ids)),
                bitops=bitops_of(stats, [32] * len(ids))))
            continue
        bits = tuple(int(b) for b in bits)
        config = build_quant_config(spec, weights, dict(zip(ids, bits)), act, smx)
        kls = []
        mses = []
        for image, p_base, l_base in zip(eval_images, base_dists, base_logits):
            res = model_forward(spec, weights, image, quant_config=config)
            kls.append(kl_divergence(p_base, output_distribution(res.logits)))
            diff = res.logits - l_base
            mses.append(float(np.mean(diff * diff)))
        rows.append(io_mod.EvalRow(
            label=label, bits=bits, mean_kl=float(np.mean(kls)),
            mean_logit_mse=float(np.mean(mses)),
            size_bits=size_override if size_override is not None
            else model_size_bits(stats, bits),
            bitops=bitops_override if bitops_override is not None
            else bitops_of(stats, bits)))

    note = ("configurations scored by output-distribution shift (KL, nats) and "
            "logit MSE against the full-precision model on synthetic data; "
            "no task benchmark is involved; allocation rows report their "
            "provisioned (budget) footprint, exact usage lives in the "
            "allocation document")
    return io_mod.EvaluationReport(spec_hash=io_mod.spec_hash(spec), note=note,
                                   rows=tuple(rows))


def run_evaluate(
    spec: NetworkSpec,
    seed: int,
    allocations: Sequence[io_mod.AllocationDocument] = (),
    uniform_bits: Sequence[int] = (),
    weights: Mapping[str, np.ndarray] | None = None,
    eval_images: np.ndarray | None = None,
    n_calib: int = DEFAULT_QUANT_CALIB,
    n_eval: int = DEFAULT_EVAL_IMAGES,
) -> io_mod.EvaluationReport:
    """Full-precision row plus one row per allocation/uniform width."""
    shash = io_mod.spec_hash(spec)
    for doc in allocations:
        io_mod.check_spec_hash(shash, doc.spec_hash, "allocation")
        if not doc.allocation.feasible or doc.allocation.bits is None:
            raise ValueError("cannot evaluate an infeasible allocation")
    if weights is None:
        weights = init_weights(spec, derive_seed(seed, _WEIGHT_STREAM))
    side = spec.image_side
    calib_images = generate_synthetic(derive_seed(seed, _CALIB_STREAM), n_calib,
                                      (side, side))
    if eval_images is None:
        eval_images = generate_synthetic(derive_seed(seed, _EVAL_STREAM), n_eval,
                                         (side, side))
    stats = layer_stats(spec)
    n_layers = len(spec.quantizable_ids())
    labeled: list[tuple] = [("full-precision", None)]
    for b in uniform_bits:
        labeled.append((f"uniform-{int(b)}", (int(b),) * n_layers))
    for doc in allocations:
        target = doc.target_bits
        labeled.append((f"mixed-{doc.mode}-t{target}", doc.allocation.bits,
                        model_size_bits(stats, [target] * n_layers),
                        bitops_of(stats, [target] * n_layers)))
    return evaluate_configurations(spec, weights, labeled, calib_images, eval_images)
