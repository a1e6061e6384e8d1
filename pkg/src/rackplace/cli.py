"""Command-line entry points.

Every subcommand takes ``--config <json>`` plus ``--seed``/``--out``
overrides. Exit codes: 0 full success, 1 configuration/usage errors,
2 completed with recorded failures (failed runs, audit mismatches).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import (
    AlgorithmSpec,
    ExperimentConfig,
    audit_results,
    ordering_rank_analysis,
    run_experiment,
)
from .heuristic import EngineConfig, solve_ordered
from .instgen import GeneratorConfig, generate_instance
from .oracle import brute_force_solve
from .seeding import child_seed
from .serialize import (
    assignment_to_dict,
    breakdown_to_dict,
    dump_json,
    instance_to_dict,
    load_instance,
)

CONFIG_ERROR = 1
PARTIAL_FAILURE = 2


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _generator_from(config: dict) -> GeneratorConfig:
    if "generator" in config:
        return GeneratorConfig.from_dict(config["generator"])
    return GeneratorConfig()


def _engine_from(config: dict) -> EngineConfig:
    if "engine" in config:
        return EngineConfig(**config["engine"])
    return EngineConfig()


def cmd_generate(args, config: dict) -> int:
    seed = 0 if args.seed is None else args.seed
    generator = _generator_from(config)
    count = args.count if args.count is not None else config.get("generate", {}).get("count", 1)
    out = Path(args.out or "instances")
    out.mkdir(parents=True, exist_ok=True)
    width = max(3, len(str(max(count - 1, 0))))
    for i in range(count):
        inst = generate_instance(generator, child_seed(seed, i))
        dump_json(instance_to_dict(inst), out / f"instance_{i:0{width}d}.json")
    print(f"wrote {count} instances to {out}")
    return 0


def cmd_solve(args, config: dict) -> int:
    seed = 0 if args.seed is None else args.seed
    engine = _engine_from(config)
    solve_cfg = config.get("solve", {})
    instance_path = args.instance or solve_cfg.get("instance")
    if instance_path:
        instance = load_instance(instance_path)
    else:
        instance = generate_instance(_generator_from(config), seed)

    checkpoint = args.checkpoint or solve_cfg.get("checkpoint")
    if checkpoint:
        from .policy import infer_order, load_checkpoint

        order = infer_order(instance, load_checkpoint(checkpoint), engine)
    elif args.order:
        order = tuple(int(x) for x in args.order.split(","))
    elif solve_cfg.get("order"):
        order = tuple(solve_cfg["order"])
    else:
        order = tuple(range(instance.num_rack_types))

    assignment, breakdown = solve_ordered(instance, order, engine)
    out = Path(args.out or "solution")
    out.mkdir(parents=True, exist_ok=True)
    dump_json(assignment_to_dict(assignment), out / "assignment.json")
    result = breakdown_to_dict(breakdown)
    result["order"] = list(order)
    dump_json(result, out / "breakdown.json")
    print(f"order {'-'.join(map(str, order))}: objective {breakdown.augmented:.6g}")
    return 0


def cmd_train(args, config: dict) -> int:
    from .policy import PolicyConfig, TrainConfig, save_checkpoint, train, write_training_curve

    train_cfg = config.get("train", {})
    policy_cfg = PolicyConfig(**train_cfg.get("policy", {}))
    tc = TrainConfig(
        epochs=train_cfg.get("epochs", 100),
        batch_size=train_cfg.get("batch_size", 16),
        generator=_generator_from(config),
        engine=_engine_from(config),
        policy=policy_cfg,
        learning_rate=train_cfg.get("learning_rate", 1e-4),
        leader_weight=train_cfg.get("leader_weight", 2.0),
        seed=0 if args.seed is None else args.seed,
    )
    policy, records = train(tc)
    out = Path(args.out or "training")
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(
        policy,
        out / "checkpoint.json",
        metadata={"epochs": tc.epochs, "batch_size": tc.batch_size, "seed": tc.seed},
    )
    write_training_curve(records, out / "training_curve.csv")
    print(
        f"trained {tc.epochs} epochs; final mean reward {records[-1].mean_reward:.6g}; "
        f"checkpoint at {out / 'checkpoint.json'}"
    )
    return 0


def cmd_bench(args, config: dict) -> int:
    if "experiment" not in config:
        print("bench needs an 'experiment' section in the config", file=sys.stderr)
        return CONFIG_ERROR
    exp_data = dict(config["experiment"])
    if exp_data.get("generator") is None and "generator" in config:
        exp_data["generator"] = config["generator"]
    experiment = ExperimentConfig.from_dict(exp_data)
    if args.format:
        experiment.formats = (args.format,)
    records, out = run_experiment(
        experiment,
        out_dir=args.out,
        seed=args.seed,
        workers=args.workers,
    )
    failures = sum(1 for r in records if not r.success)
    print(f"{len(records)} runs, {failures} failures; results in {out}")
    return PARTIAL_FAILURE if failures else 0


def cmd_rank_analysis(args, config: dict) -> int:
    seed = 0 if args.seed is None else args.seed
    ra = config.get("rank_analysis", {})
    num_instances = ra.get("num_instances", 20)
    orders = ra.get("orders_per_instance", 10)
    generator = _generator_from(config)
    instances = [
        generate_instance(generator, child_seed(seed, i)) for i in range(num_instances)
    ]
    analysis = ordering_rank_analysis(
        instances, orders, seed=seed, engine=_engine_from(config)
    )
    out = Path(args.out or "rank_analysis")
    out.mkdir(parents=True, exist_ok=True)
    (out / "rank_analysis.csv").write_text(analysis.to_csv())
    modal = analysis.modal_positions()
    print(f"modal top-3 position per rack type: {modal}")
    return 0


def cmd_audit(args, config: dict) -> int:
    problems = audit_results(args.results)
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        print(f"{len(problems)} mismatches", file=sys.stderr)
        return PARTIAL_FAILURE
    print("all records recompute cleanly")
    return 0


def cmd_oracle(args, config: dict) -> int:
    instance = load_instance(args.instance)
    result = brute_force_solve(instance)
    out = Path(args.out or "oracle")
    out.mkdir(parents=True, exist_ok=True)
    dump_json(
        {
            "optimal_value": result.optimal_value,
            "search_space_size": result.search_space_size,
            "optimal_assignment": assignment_to_dict(result.optimal_assignment),
        },
        out / "oracle.json",
    )
    print(
        f"optimum {result.optimal_value:.6g} over {result.search_space_size} candidates"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rackplace", description="Rack placement optimization toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("generate", help="write synthetic instance files")
    common(p)
    p.add_argument("--count", type=int, help="number of instances")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="solve one instance")
    common(p)
    p.add_argument("--instance", help="instance JSON file")
    p.add_argument("--order", help="comma-separated rack-type order")
    p.add_argument("--checkpoint", help="policy checkpoint for order inference")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("train", help="train the ordering policy")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bench", help="run a benchmark experiment")
    common(p)
    p.add_argument("--workers", type=int, default=1, help="parallel instance workers")
    p.add_argument("--format", choices=["csv", "json"], help="restrict report format")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("rank-analysis", help="top-3 order-position analysis")
    common(p)
    p.set_defaults(func=cmd_rank_analysis)

    p = sub.add_parser("audit", help="recompute objectives in a results directory")
    common(p)
    p.add_argument("--results", required=True, help="results directory to audit")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("oracle", help="brute-force a tiny instance")
    common(p)
    p.add_argument("--instance", required=True, help="instance JSON file")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    try:
        return args.func(args, config)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
