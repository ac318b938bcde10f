"""Mixed-precision post-training quantization planning for a toy ViT.

The pipeline: quantize layers with uniform/logarithmic fake quantizers,
score each layer's causal importance by zeroing + KL shift, derive
cross-layer synergy from per-image score similarity, and solve an exact
integer program assigning per-layer bit-widths under model-size and BitOps
budgets.
"""

from .allocation import (AllocationProblem, BitAllocation, build_problem,
                         export_lp, independent_variant,
                         importance_only_variant, objective, solve_bnb,
                         solve_bruteforce, verify_allocation)
from .importance import (ImportanceProfile, cmi_layer, importance_profile,
                         kl_divergence, normalize_scores)
from .network import (ForwardResult, LayerQuantConfig, ModelContext,
                      NetworkSpec, init_weights, model_forward,
                      output_distribution, toy_network_spec)
from .pipeline import (evaluate_configurations, generate_synthetic,
                       run_allocate, run_evaluate, run_profile)
from .profiling import (LayerStats, bitops, count_macs, count_params,
                        layer_stats, model_size_bits,
                        unquantized_overhead_bits)
from .quantizers import (AffineParams, LogParams, QuantScheme,
                         calibrate_uniform, dequantize_log,
                         dequantize_uniform, fake_quant, quantize_log,
                         quantize_uniform, search_log_base)
from .synergy import SynergyProfile, pair_synergy_per_image, synergy_profile

__version__ = "0.1.0"
