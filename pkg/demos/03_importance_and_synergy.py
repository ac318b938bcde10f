# Scoring layers: causal importance by zeroing + KL shift, and
# cross-layer synergy from per-image score similarity.
#
# Run with: python3 demos/03_importance_and_synergy.py

import numpy as np

from mixprec import (ModelContext, importance_profile, init_weights,
                     synergy_profile, toy_network_spec)
from mixprec.pipeline import generate_synthetic

spec = toy_network_spec()
weights = init_weights(spec, seed=42)
images = generate_synthetic(1, 32, (spec.image_side, spec.image_side))

ctx = ModelContext(spec, weights)
imp = importance_profile(ctx, list(images))
print(f"profiled {len(imp.layer_ids)} layers over T={imp.T} images "
      f"({ctx.forward_count} forwards: one baseline per image plus one "
      f"zeroing run per layer)")

syn = synergy_profile(imp.raw, imp.layer_ids)

print("\nlayer             omega    bar                      s_hat(next)")
names = {l.id: l.name for l in spec.layers}
for i, lid in enumerate(imp.layer_ids):
    bar = "#" * int(round(imp.omega[i] * 200))
    s = f"{syn.s_hat[i]:.2f}" if i < len(syn.s_hat) else "-"
    print(f"{names[lid]:<16s} {imp.omega[i]:.4f}  {bar:<24s} {s}")

print("\nomega sums to", imp.omega.sum())
print("the last block dominates: this toy is built with a quiet early "
      "stack and one high-gain final block, so bit allocation has real "
      "structure to exploit")
print("\nhigh s_hat pairs move together in the allocator; low s_hat marks "
      "cheap places for a precision step")
