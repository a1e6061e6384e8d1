"""Benchmark harness: run solvers over instance sets and emit reports.

A run produces a self-contained results directory:

* ``instances/``    one JSON file per instance
* ``assignments/``  one JSON file per (instance, algorithm)
* ``records.csv``   fixed columns, deterministic bytes under a fixed seed
* ``summary.json``  per-algorithm aggregates, success rates, total runtime
* ``metadata.json`` timestamps and per-run durations (never byte-compared)

Solver failures do not abort the run: the failing record keeps the prior
mapping as its assignment (zero movement by definition) and is flagged
``success=false``.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .heuristic import EngineConfig, solve_ordered
from .instgen import GeneratorConfig, generate_instance
from .model import ProblemInstance, check_g3
from .objective import ObjectiveBreakdown, total_utility
from .ordering import exhaustive_order_search
from .seeding import child_seed, rng_stream
from .serialize import (
    assignment_to_dict,
    dump_json,
    instance_to_dict,
    load_assignment,
    load_instance,
)

RECORDS_CSV_COLUMNS = [
    "instance",
    "instance_seed",
    "algorithm",
    "order",
    "success",
    "movement",
    "spread",
    "limit_penalty",
    "placement_excess",
    "utility",
    "augmented",
    "g3_excess",
]
CSV_SCHEMA_VERSION = 1

FIXED_ORDER = "fixed_order"
RANDOM_ORDER = "random_order"
EXHAUSTIVE = "exhaustive"
POLICY = "policy"


@dataclass
class AlgorithmSpec:
    """One solver configuration to run on every instance."""

    id: str
    kind: str
    order: tuple[int, ...] | None = None  # fixed_order
    samples: int = 10  # random_order: best of this many sampled orders
    checkpoint: str | None = None  # policy
    engine: EngineConfig = field(default_factory=EngineConfig)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "order": None if self.order is None else list(self.order),
            "samples": self.samples,
            "checkpoint": self.checkpoint,
            "engine": {
                "adjustment_rounds": self.engine.adjustment_rounds,
                "tie_break": self.engine.tie_break,
                "tie_break_seed": self.engine.tie_break_seed,
                "swap_acceptance": self.engine.swap_acceptance,
                "penalty_kind": self.engine.penalty_kind,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AlgorithmSpec":
        kwargs = dict(data)
        if kwargs.get("order") is not None:
            kwargs["order"] = tuple(kwargs["order"])
        if "engine" in kwargs:
            kwargs["engine"] = EngineConfig(**kwargs["engine"])
        return cls(**kwargs)


@dataclass
class ExperimentConfig:
    """Instance source plus the algorithm list for one benchmark run."""

    algorithms: list[AlgorithmSpec]
    generator: GeneratorConfig | None = None
    num_instances: int = 80
    instance_files: list[str] = field(default_factory=list)
    seed: int = 0
    output_dir: str = "results"
    formats: tuple[str, ...] = ("csv", "json")

    def __post_init__(self):
        if not self.algorithms:
            raise ValueError("an experiment needs at least one algorithm")

    def to_dict(self) -> dict:
        return {
            "algorithms": [a.to_dict() for a in self.algorithms],
            "generator": None if self.generator is None else self.generator.to_dict(),
            "num_instances": self.num_instances,
            "instance_files": list(self.instance_files),
            "seed": self.seed,
            "output_dir": self.output_dir,
            "formats": list(self.formats),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        kwargs = dict(data)
        kwargs["algorithms"] = [AlgorithmSpec.from_dict(a) for a in data["algorithms"]]
        if kwargs.get("generator") is not None:
            kwargs["generator"] = GeneratorConfig.from_dict(kwargs["generator"])
        if "formats" in kwargs:
            kwargs["formats"] = tuple(kwargs["formats"])
        return cls(**kwargs)


@dataclass
class RunRecord:
    instance_id: str
    instance_seed: int | None
    algorithm: str
    breakdown: ObjectiveBreakdown
    g3_excess: float
    order: tuple[int, ...] | None
    duration: float
    success: bool
    error: str | None = None


def _load_policy(checkpoint: str):
    # Imported lazily so benchmark runs without a policy never touch torch.
    from .policy import load_checkpoint

    return load_checkpoint(checkpoint)


_POLICY_CACHE: dict[str, object] = {}


def _cached_policy(checkpoint: str):
    if checkpoint not in _POLICY_CACHE:
        _POLICY_CACHE[checkpoint] = _load_policy(checkpoint)
    return _POLICY_CACHE[checkpoint]


def run_algorithm(
    instance: ProblemInstance, spec: AlgorithmSpec, run_seed: int
) -> tuple:
    """Solve one instance with one algorithm; returns (assignment, order)."""
    if spec.kind == FIXED_ORDER:
        order = spec.order or tuple(range(instance.num_rack_types))
        assignment, _ = solve_ordered(instance, order, spec.engine)
        return assignment, tuple(order)
    if spec.kind == RANDOM_ORDER:
        rng = rng_stream(run_seed, 0)
        best = None
        for _ in range(spec.samples):
            order = tuple(int(x) for x in rng.permutation(instance.num_rack_types))
            assignment, breakdown = solve_ordered(instance, order, spec.engine)
            if best is None or breakdown.augmented < best[2]:
                best = (assignment, order, breakdown.augmented)
        return best[0], best[1]
    if spec.kind == EXHAUSTIVE:
        order, _ = exhaustive_order_search(instance, spec.engine)
        assignment, _ = solve_ordered(instance, order, spec.engine)
        return assignment, order
    if spec.kind == POLICY:
        from .policy import infer_order

        if not spec.checkpoint:
            raise ValueError(f"algorithm {spec.id!r} needs a checkpoint path")
        policy = _cached_policy(spec.checkpoint)
        order = infer_order(instance, policy, spec.engine)
        assignment, _ = solve_ordered(instance, order, spec.engine)
        return assignment, order
    raise ValueError(f"unknown algorithm kind {spec.kind!r}")


def _run_instance(args) -> list[dict]:
    """All algorithms on one instance; returns serializable partial records."""
    idx, instance, algorithms, master_seed = args
    out = []
    for algo_idx, spec in enumerate(algorithms):
        run_seed = child_seed(master_seed, (idx << 16) | algo_idx)
        start = time.monotonic()
        try:
            assignment, order = run_algorithm(instance, spec, run_seed)
            success, error = True, None
        except Exception as exc:  # failure is data, the run continues
            assignment, order = instance.prior_assignment, None
            success, error = False, f"{type(exc).__name__}: {exc}"
        duration = time.monotonic() - start
        breakdown = total_utility(instance, assignment, spec.engine.penalty_kind)
        out.append(
            {
                "idx": idx,
                "algorithm": spec.id,
                "assignment": assignment_to_dict(assignment),
                "breakdown": breakdown,
                "g3_excess": check_g3(instance, assignment),
                "order": order,
                "duration": duration,
                "success": success,
                "error": error,
            }
        )
    return out


def load_experiment_instances(
    config: ExperimentConfig, seed: int
) -> list[ProblemInstance]:
    if config.instance_files:
        return [load_instance(path) for path in config.instance_files]
    generator = config.generator or GeneratorConfig()
    return [
        generate_instance(generator, child_seed(seed, i))
        for i in range(config.num_instances)
    ]


def run_experiment(
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
    seed: int | None = None,
    workers: int = 1,
) -> tuple[list[RunRecord], Path]:
    """Run every algorithm on every instance and write the results directory."""
    started = time.monotonic()
    started_at = datetime.now(timezone.utc).isoformat()
    seed = config.seed if seed is None else seed
    out = Path(out_dir if out_dir is not None else config.output_dir)
    (out / "instances").mkdir(parents=True, exist_ok=True)
    (out / "assignments").mkdir(parents=True, exist_ok=True)

    instances = load_experiment_instances(config, seed)
    width = max(3, len(str(max(len(instances) - 1, 0))))
    ids = [f"instance_{i:0{width}d}" for i in range(len(instances))]
    for inst_id, inst in zip(ids, instances):
        dump_json(instance_to_dict(inst), out / "instances" / f"{inst_id}.json")

    tasks = [(i, inst, config.algorithms, seed) for i, inst in enumerate(instances)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(_run_instance, tasks))
    else:
        partials = [_run_instance(t) for t in tasks]

    records: list[RunRecord] = []
    for per_instance in partials:
        for part in per_instance:
            idx = part["idx"]
            inst_id = ids[idx]
            dump_json(
                part["assignment"],
                out / "assignments" / f"{inst_id}_{part['algorithm']}.json",
            )
            records.append(
                RunRecord(
                    instance_id=inst_id,
                    instance_seed=instances[idx].seed,
                    algorithm=part["algorithm"],
                    breakdown=part["breakdown"],
                    g3_excess=part["g3_excess"],
                    order=part["order"],
                    duration=part["duration"],
                    success=part["success"],
                    error=part["error"],
                )
            )
    algo_rank = {spec.id: i for i, spec in enumerate(config.algorithms)}
    records.sort(key=lambda r: (r.instance_id, algo_rank[r.algorithm]))

    if "csv" in config.formats:
        (out / "records.csv").write_text(records_to_csv(records))
    if "json" in config.formats:
        dump_json(
            {
                "schema_version": CSV_SCHEMA_VERSION,
                "records": [_record_row_dict(r) for r in records],
            },
            out / "records.json",
        )
    dump_json(summarize(records, seed, time.monotonic() - started), out / "summary.json")
    dump_json(
        {
            "started_at": started_at,
            "finished_at": datetime.now(timezone.utc).isoformat(),
            "durations": {
                f"{r.instance_id}/{r.algorithm}": r.duration for r in records
            },
            "errors": {
                f"{r.instance_id}/{r.algorithm}": r.error for r in records if r.error
            },
            "workers": workers,
        },
        out / "metadata.json",
    )
    return records, out


def _record_row_dict(r: RunRecord) -> dict:
    return {
        "instance": r.instance_id,
        "instance_seed": r.instance_seed,
        "algorithm": r.algorithm,
        "order": None if r.order is None else list(r.order),
        "success": r.success,
        "movement": r.breakdown.movement,
        "spread": r.breakdown.spread,
        "limit_penalty": r.breakdown.limit_penalty,
        "placement_excess": r.breakdown.placement_excess,
        "utility": r.breakdown.utility,
        "augmented": r.breakdown.augmented,
        "g3_excess": r.g3_excess,
    }


def records_to_csv(records: list[RunRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RECORDS_CSV_COLUMNS)
    for r in records:
        writer.writerow(
            [
                r.instance_id,
                "" if r.instance_seed is None else r.instance_seed,
                r.algorithm,
                "" if r.order is None else "-".join(str(k) for k in r.order),
                int(r.success),
                repr(r.breakdown.movement),
                repr(r.breakdown.spread),
                repr(r.breakdown.limit_penalty),
                repr(r.breakdown.placement_excess),
                repr(r.breakdown.utility),
                repr(r.breakdown.augmented),
                repr(r.g3_excess),
            ]
        )
    return buf.getvalue()


def summarize(records: list[RunRecord], seed: int, total_runtime: float) -> dict:
    by_algo: dict[str, list[RunRecord]] = {}
    for r in records:
        by_algo.setdefault(r.algorithm, []).append(r)
    summary = {
        "schema_version": CSV_SCHEMA_VERSION,
        "seed": seed,
        "total_runtime_seconds": total_runtime,
        "algorithms": {},
    }
    for algo, rs in by_algo.items():
        ok = [r for r in rs if r.success]
        values = {
            "movement": [r.breakdown.movement for r in ok],
            "spread": [r.breakdown.spread for r in ok],
            "limit_penalty": [r.breakdown.limit_penalty for r in ok],
            "utility": [r.breakdown.utility for r in ok],
            "augmented": [r.breakdown.augmented for r in ok],
        }
        summary["algorithms"][algo] = {
            "runs": len(rs),
            "success_rate": len(ok) / len(rs) if rs else 0.0,
            "means": {k: float(np.mean(v)) if v else None for k, v in values.items()},
            "medians": {k: float(np.median(v)) if v else None for k, v in values.items()},
        }
    return summary


@dataclass
class RankAnalysis:
    """How often each (rack type, order position) lands in a top-3 order."""

    tallies: np.ndarray  # (K, K, 3): type, position, rank
    num_instances: int
    orders_per_instance: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["rack_type", "order_position", "rank1", "rank2", "rank3"])
        k = self.tallies.shape[0]
        for rack_type in range(k):
            for pos in range(k):
                writer.writerow(
                    [rack_type, pos, *(int(c) for c in self.tallies[rack_type, pos])]
                )
        return buf.getvalue()

    def modal_positions(self) -> list[int]:
        """Per rack type, the order position with the most top-3 hits."""
        return [int(np.argmax(self.tallies[k].sum(axis=1))) for k in range(self.tallies.shape[0])]


def ordering_rank_analysis(
    instances: list[ProblemInstance],
    orders_per_instance: int,
    seed: int = 0,
    engine: EngineConfig = EngineConfig(),
) -> RankAnalysis:
    """Sample orders per instance, rank them by reward, tally the top three.

    For every instance, ``orders_per_instance`` random orders are solved and
    ranked by reward (negated objective). Each of the top-3 orders
    contributes one tally per rack type at that type's position in the order.
    """
    if orders_per_instance < 3:
        raise ValueError("need at least 3 orders per instance to rank a top-3")
    k = instances[0].num_rack_types
    tallies = np.zeros((k, k, 3), dtype=np.int64)
    for idx, instance in enumerate(instances):
        rng = rng_stream(child_seed(seed, idx), 0)
        orders = [
            tuple(int(x) for x in rng.permutation(k)) for _ in range(orders_per_instance)
        ]
        values = []
        for order in orders:
            _, breakdown = solve_ordered(instance, order, engine)
            values.append(breakdown.augmented)
        ranked = sorted(range(len(orders)), key=lambda j: (values[j], j))
        for rank, j in enumerate(ranked[:3]):
            for pos, rack_type in enumerate(orders[j]):
                tallies[rack_type, pos, rank] += 1
    return RankAnalysis(
        tallies=tallies,
        num_instances=len(instances),
        orders_per_instance=orders_per_instance,
    )


def audit_results(results_dir: str | Path, tolerance: float = 1e-9) -> list[str]:
    """Re-run the objective on every stored assignment and compare to the CSV.

    Returns a list of mismatch descriptions; empty means the directory is
    internally consistent.
    """
    out = Path(results_dir)
    problems: list[str] = []
    with open(out / "records.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        inst = load_instance(out / "instances" / f"{row['instance']}.json")
        assignment = load_assignment(
            out / "assignments" / f"{row['instance']}_{row['algorithm']}.json"
        )
        breakdown = total_utility(inst, assignment)
        for column in (
            "movement",
            "spread",
            "limit_penalty",
            "placement_excess",
            "utility",
            "augmented",
        ):
            stored = float(row[column])
            recomputed = getattr(breakdown, column)
            if abs(stored - recomputed) > tolerance:
                problems.append(
                    f"{row['instance']}/{row['algorithm']}: {column} stored "
                    f"{stored!r} != recomputed {recomputed!r}"
                )
        stored_g3 = float(row["g3_excess"])
        if abs(stored_g3 - check_g3(inst, assignment)) > tolerance:
            problems.append(
                f"{row['instance']}/{row['algorithm']}: g3_excess mismatch"
            )
    return problems
