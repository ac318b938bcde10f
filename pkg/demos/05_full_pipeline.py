# End to end: profile a seeded toy model, solve the bit assignment in
# three modes, and score every configuration against full precision.
#
# Run with: python3 demos/05_full_pipeline.py   (takes ~30 s)

from mixprec import toy_network_spec
from mixprec.pipeline import derive_seed, run_allocate, run_evaluate, run_profile
from mixprec.network import init_weights

spec = toy_network_spec()
weights = init_weights(spec, derive_seed(7, 0))

print("profiling (64 calibration images, one zeroing run per layer each)...")
profile = run_profile(spec, seed=0, weights=weights)
print(f"  spec hash {profile.spec_hash[:12]}, omega sum = "
      f"{profile.importance.omega.sum():.6f}")

allocations = []
for mode in ("synergy", "independent", "importance-only"):
    doc = run_allocate(profile, target_bits=6, mode=mode)
    allocations.append(doc)
    print(f"{mode:16s} bits={list(doc.allocation.bits)}")
    print(f"{'':16s} phi={doc.allocation.objective:.4f} "
          f"slack_size={doc.slack_size} slack_bitops={doc.slack_bitops}")

print("\nevaluating against full precision (KL in nats, lower is better)...")
report = run_evaluate(spec, seed=0, weights=weights, allocations=allocations,
                      uniform_bits=[6], n_eval=64)
print(report.render_text())

kl = {r.label: r.mean_kl for r in report.rows}
print("\nsynergy vs importance-only vs uniform 6-bit:")
print(f"  {kl['mixed-synergy-t6']:.4f} <= {kl['mixed-importance-only-t6']:.4f} "
      f"<= {kl['uniform-6']:.4f} ?",
      kl['mixed-synergy-t6'] <= kl['mixed-importance-only-t6'] <= kl['uniform-6'])
