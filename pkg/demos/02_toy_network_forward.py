# The toy transformer: forward passes, activation taps, layer zeroing,
# and fake-quantized execution.
#
# Run with: python3 demos/02_toy_network_forward.py

import numpy as np

from mixprec import (ModelContext, init_weights, model_forward,
                     output_distribution, toy_network_spec)
from mixprec.pipeline import (build_quant_config, collect_activation_samples,
                              generate_synthetic)

spec = toy_network_spec()  # 4 blocks, 16 tokens, D=64, 10 classes
print("layers:", len(spec.layers), " quantizable:", len(spec.quantizable_ids()))
for layer in spec.layers[:8]:
    print(f"  id={layer.id:<3d} {layer.name:<16s} quantizable={layer.quantizable}")
print("  ...")

weights = init_weights(spec, seed=42)
image = generate_synthetic(7, 1, (spec.image_side, spec.image_side))[0]

result = model_forward(spec, weights, image)
print("\nlogits:", np.round(result.logits, 3))
print("class distribution:", np.round(output_distribution(result.logits), 4))
print("tapped activations:", len(result.taps), "layers")

# zero one layer's output and watch the distribution move; the residual
# skip path around it stays intact, so the network remains evaluable
fc2_block3 = next(l.id for l in spec.layers if l.name == "block3.fc2")
perturbed = model_forward(spec, weights, image, zero_mask={fc2_block3})
print("\nafter zeroing block3.fc2:")
print("class distribution:", np.round(output_distribution(perturbed.logits), 4))

# fake-quantized execution: calibrate activation ranges from a few images,
# then run everything through 4-bit quantizers
calib = generate_synthetic(8, 16, (spec.image_side, spec.image_side))
act, smx = collect_activation_samples(spec, weights, calib)
bits = {lid: 4 for lid in spec.quantizable_ids()}
config = build_quant_config(spec, weights, bits, act, smx)
quantized = model_forward(spec, weights, image, quant_config=config)
print("\n4-bit logits:", np.round(quantized.logits, 3))
print("max logit shift:", np.abs(quantized.logits - result.logits).max())

# the context wrapper counts forwards, which profiling cost checks use
ctx = ModelContext(spec, weights)
for _ in range(3):
    ctx.forward(image)
print("\nforwards through context:", ctx.forward_count)
