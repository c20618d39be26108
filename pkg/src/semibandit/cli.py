"""Command-line entry point: ``semibandit {run,diagnose,gen}``.

Exit status is 0 on success, 2 on configuration errors and 3 on runtime
errors (including any trial that raised).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .core import ActionSubset, ContractViolation
from .environments import (
    Instance,
    LowerBoundSpec,
    load_json,
    lower_bound_instance,
    policy_class_from_json,
    policy_class_to_json,
    save_json,
)
from .harness import ConfigError, ExperimentConfig, HarnessError, diagnose, generate, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _policies_path(path: str) -> str:
    stem = path[:-5] if path.endswith(".json") else path
    return stem + ".policies.json"


def _cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.out:
        cfg.output_dir = args.out
    if args.workers:
        cfg.workers = args.workers
    result = run_experiment(cfg)
    for name, agg in result.aggregate.items():
        print(f"{name}: mean={agg['mean']:.6g} se={agg['se']:.3g}")
    for err in result.errors:
        print(f"trial error: {err}", file=sys.stderr)
    return EXIT_RUNTIME if result.errors else EXIT_OK


def _cmd_diagnose(args) -> int:
    try:
        inst = Instance.from_json(load_json(args.instance))
        cls = policy_class_from_json(load_json(args.policies))
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError("input-invalid", f"cannot read instance/policies: {exc}") from exc
    report = diagnose(inst, cls, args.gamma, args.fw_iters)
    print(f"gamma={report['gamma']} s={report['s']} grad_inf_norm={report['grad_inf_norm']:.6g} "
          f"variance_bound={report['variance_bound']:.6g}")
    print("policy  exact_reward  gap  audit")
    for row in report["policies"]:
        print(f"{row['policy']:6d}  {row['exact_reward']:.6g}  {row['gap']:.6g}  {row['audit']:.6g}")
    print("smoothed marginals (context x action):")
    for x, q in enumerate(report["smoothed_marginals"]):
        print(f"  x={x}: " + " ".join(f"{v:.4f}" for v in q))
    if args.json:
        print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def _cmd_gen(args) -> int:
    if args.family == "lower-bound":
        good = args.good or list(range(args.m))
        try:
            spec = LowerBoundSpec(args.K, args.m, args.s, args.eps, ActionSubset(tuple(good), args.K))
        except ContractViolation as exc:
            raise ConfigError("config-invalid", str(exc)) from exc
        save_json(lower_bound_instance(spec).to_json(), args.output)
        print(f"wrote {args.output}")
        return EXIT_OK
    spec = {"type": args.family, "K": args.K, "m": args.m, "s": args.s, "n_contexts": args.contexts,
            "n_policies": args.policies, "seed": args.seed}
    if args.family == "list":
        spec["s"] = int(args.s)
    try:
        inst, cls = generate(spec)
    except ContractViolation as exc:
        raise ConfigError("config-invalid", str(exc)) from exc
    save_json(inst.to_json(), args.output)
    save_json(policy_class_to_json(cls), _policies_path(args.output))
    print(f"wrote {args.output} and {_policies_path(args.output)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semibandit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (overrides the config; SEMIBANDIT_OUT overrides both)")
    run.add_argument("--workers", type=int, default=0)
    run.set_defaults(func=_cmd_run)

    diag = sub.add_parser("diagnose", help="exact gaps, smoothed marginals and variance audits")
    diag.add_argument("instance")
    diag.add_argument("policies")
    diag.add_argument("--gamma", type=float, default=0.5)
    diag.add_argument("--fw-iters", type=int, default=20000)
    diag.add_argument("--json", action="store_true", help="also print the full report as JSON")
    diag.set_defaults(func=_cmd_diagnose)

    gen = sub.add_parser("gen", help="generate an instance (and policy class) file")
    gen.add_argument("family", choices=("random", "lower-bound", "list"))
    gen.add_argument("-o", "--output", required=True)
    gen.add_argument("--K", type=int, default=8)
    gen.add_argument("--m", type=int, default=2)
    gen.add_argument("--s", type=float, default=2.0)
    gen.add_argument("--eps", type=float, default=0.05)
    gen.add_argument("--good", type=int, nargs="*", help="good subset for lower-bound instances")
    gen.add_argument("--contexts", type=int, default=4)
    gen.add_argument("--policies", type=int, default=8)
    gen.add_argument("--seed", type=int, default=0)
    gen.set_defaults(func=_cmd_gen)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except HarnessError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return exc.exit_status
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ContractViolation, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error [algorithm]: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
