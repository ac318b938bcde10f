# Fake quantization basics: uniform affine and logarithmic quantizers.
#
# Run with: python3 demos/01_quantizers.py

import numpy as np

from mixprec import (LogParams, QuantScheme, calibrate_uniform,
                     dequantize_log, dequantize_uniform, fake_quant,
                     quantize_log, quantize_uniform, search_log_base)

rng = np.random.default_rng(0)

# --- uniform affine quantization -----------------------------------------
# min-max calibration picks scale and zero-point so the sample range maps
# onto the full code range
x = rng.normal(0.5, 1.0, 10000)
params = calibrate_uniform(x, bits=4)
print("4-bit affine params: scale=%.5f zero_point=%d" %
      (params.scale[0], params.zero_point[0]))

codes = quantize_uniform(x, params)
print("codes span", codes.min(), "..", codes.max(), "of [0, 15]")

x_hat = dequantize_uniform(codes, params)
print("max |x_hat - x| = %.5f  (half step = %.5f)" %
      (np.abs(x_hat - x).max(), params.scale[0] / 2))

# the same thing per output channel: each row of a weight matrix gets its
# own scale, useful when channel magnitudes differ wildly
w = rng.normal(0, 1, (8, 64)) * np.logspace(-2, 0, 8)[:, None]
per_channel = calibrate_uniform(w, bits=4, granularity="per_channel", axis=0)
per_tensor = calibrate_uniform(w, bits=4)
err_pc = np.abs(fake_quant(w, QuantScheme("uniform", per_channel)) - w).max()
err_pt = np.abs(fake_quant(w, QuantScheme("uniform", per_tensor)) - w).max()
print("\nweight matrix with graded rows: per-channel err %.5f vs per-tensor %.5f"
      % (err_pc, err_pt))

# --- logarithmic quantization ---------------------------------------------
# softmax outputs live in (0, 1] and are power-law-ish: a geometric code
# grid (scale * base**-k) matches them far better than a linear grid
probs = rng.dirichlet(np.full(16, 0.3), 2000).ravel()
logp = search_log_base(probs, bits=4)
print("\nsearched log base: %.4f (scale=%.4f)" % (logp.base, logp.scale))
print("codebook:", np.round(logp.codebook(), 5))

uni = calibrate_uniform(probs, bits=4)
err_log = np.mean((fake_quant(probs, QuantScheme("logarithmic", logp)) - probs) ** 2)
err_uni = np.mean((fake_quant(probs, QuantScheme("uniform", uni)) - probs) ** 2)
print("4-bit MSE on softmax-like data: log %.3e vs uniform %.3e" %
      (err_log, err_uni))

# zeros are not representable on a log grid; they take the largest
# attenuation code
print("\ncode for exactly 0.0:", quantize_log(np.array(0.0), logp),
      "->", dequantize_log(quantize_log(np.array(0.0), logp), logp))
