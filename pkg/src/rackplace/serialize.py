"""Versioned JSON formats for instances, assignments, and breakdowns.

Output is deterministic: field order is fixed, floats use Python repr, and
no timestamps appear. Binary assignments serialize as a sparse list of
(position, rack_type) pairs.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import BINARY, Assignment, ProblemInstance, SpreadRequirement
from .objective import ObjectiveBreakdown

SCHEMA_VERSION = 1


class SchemaVersionError(ValueError):
    """File declares a schema version this code does not understand."""


def _require_version(data: dict, what: str) -> None:
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"{what} has schema_version {version!r}, expected {SCHEMA_VERSION}"
        )


def instance_to_dict(instance: ProblemInstance) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "num_positions": instance.num_positions,
        "num_rack_types": instance.num_rack_types,
        "num_resources": instance.num_resources,
        "resource_matrix": instance.resource_matrix.tolist(),
        "scope_membership": instance.scope_membership.astype(int).tolist(),
        "scope_limits": instance.scope_limits.tolist(),
        "demands": instance.demands.tolist(),
        "placement_limit": int(instance.placement_limit),
        "movement_weights": instance.movement_weights.tolist(),
        "spread_requirements": [
            {
                "resource_type": req.resource_type,
                "rack_group": list(req.rack_group),
                "scope_group": list(req.scope_group),
            }
            for req in instance.spread_requirements
        ],
        "prior_assignment": assignment_to_dict(instance.prior_assignment),
        "beta_spread": instance.beta_spread,
        "beta_limit": instance.beta_limit,
        "gamma_placement": instance.gamma_placement,
        "seed": instance.seed,
    }


def instance_from_dict(data: dict) -> ProblemInstance:
    _require_version(data, "instance")
    return ProblemInstance(
        num_positions=int(data["num_positions"]),
        num_rack_types=int(data["num_rack_types"]),
        num_resources=int(data["num_resources"]),
        resource_matrix=np.asarray(data["resource_matrix"], dtype=np.float64),
        scope_membership=np.asarray(data["scope_membership"], dtype=np.bool_),
        scope_limits=np.asarray(data["scope_limits"], dtype=np.float64),
        demands=np.asarray(data["demands"], dtype=np.int64),
        placement_limit=int(data["placement_limit"]),
        movement_weights=np.asarray(data["movement_weights"], dtype=np.float64),
        spread_requirements=[
            SpreadRequirement(
                resource_type=req["resource_type"],
                rack_group=tuple(req["rack_group"]),
                scope_group=tuple(req["scope_group"]),
            )
            for req in data["spread_requirements"]
        ],
        prior_assignment=assignment_from_dict(data["prior_assignment"]),
        beta_spread=float(data["beta_spread"]),
        beta_limit=float(data["beta_limit"]),
        gamma_placement=float(data["gamma_placement"]),
        seed=data.get("seed"),
    )


def assignment_to_dict(assignment: Assignment) -> dict:
    if assignment.mode != BINARY:
        raise ValueError("only binary assignments serialize to the sparse format")
    positions, racks = np.nonzero(assignment.entries)
    return {
        "schema_version": SCHEMA_VERSION,
        "num_positions": assignment.num_positions,
        "num_rack_types": assignment.num_rack_types,
        "placements": [[int(p), int(k)] for p, k in zip(positions, racks)],
    }


def assignment_from_dict(data: dict) -> Assignment:
    _require_version(data, "assignment")
    entries = np.zeros((int(data["num_positions"]), int(data["num_rack_types"])))
    for p, k in data["placements"]:
        if not (0 <= p < entries.shape[0] and 0 <= k < entries.shape[1]):
            raise ValueError(f"placement ({p}, {k}) outside the declared dimensions")
        entries[p, k] = 1.0
    return Assignment(entries)


def breakdown_to_dict(breakdown: ObjectiveBreakdown) -> dict:
    out = {"schema_version": SCHEMA_VERSION}
    out.update(breakdown.to_dict())
    return out


def breakdown_from_dict(data: dict) -> ObjectiveBreakdown:
    _require_version(data, "breakdown")
    return ObjectiveBreakdown(
        movement=float(data["movement"]),
        spread=float(data["spread"]),
        limit_penalty=float(data["limit_penalty"]),
        placement_excess=float(data["placement_excess"]),
        utility=float(data["utility"]),
        augmented=float(data["augmented"]),
    )


def dump_json(data: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(data, indent=1) + "\n")


def load_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def save_instance(instance: ProblemInstance, path: str | Path) -> None:
    dump_json(instance_to_dict(instance), path)


def load_instance(path: str | Path) -> ProblemInstance:
    return instance_from_dict(load_json(path))


def save_assignment(assignment: Assignment, path: str | Path) -> None:
    dump_json(assignment_to_dict(assignment), path)


def load_assignment(path: str | Path) -> Assignment:
    return assignment_from_dict(load_json(path))
