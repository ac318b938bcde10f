"""Command-line pipeline driver.

Verbs: ``profile``, ``allocate``, ``evaluate``, ``export-lp``, ``report``.
All configuration is passed through long-name flags; nothing is read from
environment variables.  Exit codes: 0 success, 2 parse/validation error,
3 infeasible allocation problem, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import io as io_mod
from . import pipeline
from .allocation import export_lp
from .io import DocumentError
from .network import init_weights

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4


class Infeasible(RuntimeError):
    pass


def _load_spec(path):
    return io_mod.spec_from_dict(io_mod.load_json(path))


def _load_weights(args, spec):
    if getattr(args, "weights_dir", None):
        weights = io_mod.load_weights(args.weights_dir)
        missing = set(k for k in _expected_params(spec)) - set(weights)
        if missing:
            raise DocumentError(f"weight container is missing tensors: {sorted(missing)[:4]}...")
        return weights
    return init_weights(spec, pipeline.derive_seed(args.seed, 0))


def _expected_params(spec):
    from .network import param_shapes
    return param_shapes(spec)


def _load_batch(path, count, side):
    batch = io_mod.read_tensor(path)
    if batch.ndim != 3 or batch.shape[1] != side or batch.shape[2] != side:
        raise DocumentError(
            f"data batch must have shape (count, {side}, {side}), got {batch.shape}")
    if count is not None and batch.shape[0] < count:
        raise DocumentError(f"data batch holds {batch.shape[0]} images, need {count}")
    return batch[:count] if count is not None else batch


def cmd_profile(args) -> int:
    spec = _load_spec(args.spec)
    weights = _load_weights(args, spec)
    images = None
    if args.data:
        images = _load_batch(args.data, args.images, spec.image_side)
    doc = pipeline.run_profile(spec, seed=args.seed, T=args.images,
                               weights=weights, images=images)
    io_mod.dump_json(doc.to_dict(), args.out)
    print(f"wrote profile for {len(doc.importance.layer_ids)} layers "
          f"(T={doc.importance.T}) to {args.out}")
    return EXIT_OK


def _allocate_common(args):
    profile = io_mod.ProfileDocument.from_dict(io_mod.load_json(args.profile))
    bit_set = tuple(int(b) for b in args.bits_set.split(","))
    return profile, bit_set


def cmd_allocate(args) -> int:
    profile, bit_set = _allocate_common(args)
    doc = pipeline.run_allocate(profile, target_bits=args.target_bits,
                                bit_set=bit_set, lam=getattr(args, "lambda"),
                                mode=args.mode, size_budget=args.size_budget,
                                bitops_budget=args.bitops_budget)
    io_mod.dump_json(doc.to_dict(), args.out)
    if not doc.allocation.feasible:
        raise Infeasible(
            f"no assignment from {bit_set} satisfies both budgets; "
            f"wrote infeasible marker to {args.out}")
    print(f"bits={list(doc.allocation.bits)}")
    print(f"objective={doc.allocation.objective!r} "
          f"slack_size={doc.slack_size} slack_bitops={doc.slack_bitops}")
    print(f"wrote allocation to {args.out}")
    return EXIT_OK


def cmd_export_lp(args) -> int:
    profile, bit_set = _allocate_common(args)
    problem = pipeline.problem_from_profile(profile, args.target_bits, bit_set,
                                            getattr(args, "lambda"), args.mode,
                                            size_budget=args.size_budget,
                                            bitops_budget=args.bitops_budget)
    with open(args.out, "w") as fh:
        fh.write(export_lp(problem))
    print(f"wrote LP instance to {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    spec = _load_spec(args.spec)
    weights = _load_weights(args, spec)
    allocations = [io_mod.AllocationDocument.from_dict(io_mod.load_json(p))
                   for p in args.allocation or []]
    eval_images = None
    if args.eval_data:
        eval_images = _load_batch(args.eval_data, None, spec.image_side)
    report = pipeline.run_evaluate(
        spec, seed=args.seed, allocations=allocations,
        uniform_bits=[int(b) for b in args.uniform or []],
        weights=weights, eval_images=eval_images,
        n_calib=args.calib_count, n_eval=args.eval_count)
    io_mod.dump_json(report.to_dict(), args.out)
    print(report.render_text())
    print(f"wrote evaluation report to {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    doc = io_mod.load_json(args.input)
    kind = doc.get("kind")
    if kind == "evaluation":
        print(io_mod.EvaluationReport.from_dict(doc).render_text())
    elif kind == "profile":
        profile = io_mod.ProfileDocument.from_dict(doc)
        print(f"profile: T={profile.importance.T} layers={len(profile.importance.layer_ids)} "
              f"seed={profile.seed} spec={profile.spec_hash[:12]}")
        print("layer_id  omega        s_hat_to_next")
        s_hat = list(profile.synergy.s_hat) + [float("nan")]
        for lid, om, sh in zip(profile.importance.layer_ids,
                               profile.importance.omega, s_hat):
            print(f"{lid:<9d} {om:<12.6f} {sh:.6f}")
    elif kind == "allocation":
        alloc = io_mod.AllocationDocument.from_dict(doc)
        print(f"allocation: mode={alloc.mode} target={alloc.target_bits} "
              f"lambda={alloc.lam} feasible={alloc.allocation.feasible}")
        if alloc.allocation.feasible:
            print(f"bits={list(alloc.allocation.bits)}")
            print(f"objective={alloc.allocation.objective!r} "
                  f"size_bits={alloc.allocation.size_bits} bitops={alloc.allocation.bitops}")
    else:
        raise DocumentError(f"cannot report on document kind {kind!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixprec",
        description="mixed-precision quantization planning for a toy ViT")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("profile", help="score layer importance and synergy")
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--images", type=int, default=pipeline.DEFAULT_CALIB_IMAGES)
    p.add_argument("--data", default=None, help="MXQT batch of calibration images")
    p.add_argument("--weights-dir", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_profile)

    for verb, func in (("allocate", cmd_allocate), ("export-lp", cmd_export_lp)):
        p = sub.add_parser(verb)
        p.add_argument("--profile", required=True)
        p.add_argument("--target-bits", type=int, required=True)
        p.add_argument("--bits-set", default="4,5,6,7,8")
        p.add_argument("--lambda", type=float, default=0.1)
        p.add_argument("--mode", choices=pipeline.MODES, default="synergy")
        p.add_argument("--size-budget", type=int, default=None,
                       help="override the uniform-target size budget (bits)")
        p.add_argument("--bitops-budget", type=int, default=None)
        p.add_argument("--out", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("evaluate", help="compare configurations to full precision")
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--allocation", action="append", default=[])
    p.add_argument("--uniform", action="append", default=[],
                   help="extra uniform-width row (repeatable)")
    p.add_argument("--weights-dir", default=None)
    p.add_argument("--eval-data", default=None, help="MXQT batch of eval images")
    p.add_argument("--calib-count", type=int, default=pipeline.DEFAULT_QUANT_CALIB)
    p.add_argument("--eval-count", type=int, default=pipeline.DEFAULT_EVAL_IMAGES)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="render a stored JSON document as text")
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DocumentError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
