"""Problem data model: instances, assignments, and hard-constraint checks.

A problem instance describes a set of positions grouped into scopes, a set
of rack types with per-type resource profiles, demands, a cap on newly
placed racks, and fault-tolerance spread requirements. An assignment maps
positions to rack types, either as a binary matrix or as a relaxed
continuous matrix used for gradient evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BINARY = "binary"
RELAXED = "relaxed"

# Relaxed rows may exceed 1 by at most this much (accumulated float error).
ROW_SUM_TOL = 1e-9


@dataclass
class SpreadRequirement:
    """One fault-tolerance requirement: resource contributed by a group of
    rack types should be evenly distributed across a group of disjoint scopes.
    """

    resource_type: int
    rack_group: tuple[int, ...]
    scope_group: tuple[int, ...]

    def __post_init__(self):
        self.rack_group = tuple(sorted(int(k) for k in self.rack_group))
        self.scope_group = tuple(sorted(int(s) for s in self.scope_group))
        self.resource_type = int(self.resource_type)


class Assignment:
    """Position-to-rack-type matrix, binary or relaxed to [0, 1].

    Entries are frozen after construction; derive modified copies via
    ``entries.copy()``. Binary assignments additionally guarantee at most
    one rack per position.
    """

    def __init__(self, entries: np.ndarray, mode: str = BINARY):
        if mode not in (BINARY, RELAXED):
            raise ValueError(f"unknown assignment mode {mode!r}")
        entries = np.array(entries, dtype=np.float64)
        if entries.ndim != 2:
            raise ValueError("assignment entries must be a 2-D matrix")
        if mode == BINARY:
            if not np.all((entries == 0.0) | (entries == 1.0)):
                raise ValueError("binary assignment entries must be 0 or 1")
            if np.any(entries.sum(axis=1) > 1.0):
                raise ValueError("binary assignment has a position with two racks")
        else:
            if np.any(entries < 0.0) or np.any(entries > 1.0):
                raise ValueError("relaxed assignment entries must lie in [0, 1]")
            if np.any(entries.sum(axis=1) > 1.0 + ROW_SUM_TOL):
                raise ValueError("relaxed assignment row sum exceeds 1")
        entries.flags.writeable = False
        self.entries = entries
        self.mode = mode

    @classmethod
    def empty(cls, num_positions: int, num_rack_types: int) -> "Assignment":
        return cls(np.zeros((num_positions, num_rack_types)), BINARY)

    @property
    def num_positions(self) -> int:
        return self.entries.shape[0]

    @property
    def num_rack_types(self) -> int:
        return self.entries.shape[1]

    def counts(self) -> np.ndarray:
        """Per-type totals (column sums)."""
        return self.entries.sum(axis=0)

    def as_relaxed(self) -> "Assignment":
        """View the same entries as a relaxed-mode assignment."""
        if self.mode == RELAXED:
            return self
        return Assignment(self.entries, RELAXED)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Assignment)
            and self.mode == other.mode
            and self.entries.shape == other.entries.shape
            and np.array_equal(self.entries, other.entries)
        )

    def __repr__(self) -> str:
        p, k = self.entries.shape
        return f"Assignment({p}x{k}, mode={self.mode})"


@dataclass
class ProblemInstance:
    """Immutable description of one placement problem.

    Matrices: ``resource_matrix`` is rack-type x resource, ``scope_membership``
    is position x scope (boolean), ``scope_limits`` is scope x resource.
    ``prior_assignment`` is the mapping from the previous round; movement is
    charged for racks removed relative to it.
    """

    num_positions: int
    num_rack_types: int
    num_resources: int
    resource_matrix: np.ndarray
    scope_membership: np.ndarray
    scope_limits: np.ndarray
    demands: np.ndarray
    placement_limit: int
    movement_weights: np.ndarray
    spread_requirements: list[SpreadRequirement]
    prior_assignment: Assignment
    beta_spread: float = 1.0
    beta_limit: float = 1.0
    gamma_placement: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        self.resource_matrix = _frozen(self.resource_matrix, np.float64)
        self.scope_membership = _frozen(self.scope_membership, np.bool_)
        self.scope_limits = _frozen(self.scope_limits, np.float64)
        self.demands = _frozen(self.demands, np.int64)
        self.movement_weights = _frozen(self.movement_weights, np.float64)

    @property
    def num_scopes(self) -> int:
        return self.scope_membership.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProblemInstance):
            return NotImplemented
        return (
            self.num_positions == other.num_positions
            and self.num_rack_types == other.num_rack_types
            and self.num_resources == other.num_resources
            and np.array_equal(self.resource_matrix, other.resource_matrix)
            and np.array_equal(self.scope_membership, other.scope_membership)
            and np.array_equal(self.scope_limits, other.scope_limits)
            and np.array_equal(self.demands, other.demands)
            and self.placement_limit == other.placement_limit
            and np.array_equal(self.movement_weights, other.movement_weights)
            and self.spread_requirements == other.spread_requirements
            and self.prior_assignment == other.prior_assignment
            and self.beta_spread == other.beta_spread
            and self.beta_limit == other.beta_limit
            and self.gamma_placement == other.gamma_placement
            and self.seed == other.seed
        )


@dataclass
class ConstraintReport:
    """Outcome of the three hard/soft constraint checks for one assignment."""

    g1_violations: list[int]
    g2_shortfalls: np.ndarray
    g3_excess: float

    @property
    def satisfied(self) -> bool:
        return (
            not self.g1_violations
            and not np.any(self.g2_shortfalls > 0)
            and self.g3_excess <= 0
        )


def _frozen(arr, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype)
    out.flags.writeable = False
    return out


def validate_instance(instance: ProblemInstance) -> list[str]:
    """Return human-readable invariant violations; empty list means valid.

    Violations are data, not failures: callers (e.g. the bench harness) may
    log and skip malformed instances instead of crashing.
    """
    v: list[str] = []
    p, k, r = instance.num_positions, instance.num_rack_types, instance.num_resources
    s = instance.num_scopes

    if instance.resource_matrix.shape != (k, r):
        v.append(f"resource_matrix shape {instance.resource_matrix.shape} != ({k}, {r})")
    if instance.scope_membership.shape[0] != p:
        v.append(f"scope_membership has {instance.scope_membership.shape[0]} rows, expected {p}")
    if instance.scope_limits.shape != (s, r):
        v.append(f"scope_limits shape {instance.scope_limits.shape} != ({s}, {r})")
    if instance.demands.shape != (k,):
        v.append(f"demands shape {instance.demands.shape} != ({k},)")
    if instance.movement_weights.shape != (k,):
        v.append(f"movement_weights shape {instance.movement_weights.shape} != ({k},)")

    for name, arr in (
        ("resource_matrix", instance.resource_matrix),
        ("scope_limits", instance.scope_limits),
        ("demands", instance.demands),
        ("movement_weights", instance.movement_weights),
    ):
        bad = np.argwhere(np.asarray(arr) < 0)
        for idx in bad:
            v.append(f"{name}[{', '.join(str(i) for i in idx)}] is negative")

    if instance.placement_limit < 0:
        v.append("placement_limit is negative")

    prior = instance.prior_assignment
    if prior.entries.shape != (p, k):
        v.append(f"prior_assignment shape {prior.entries.shape} != ({p}, {k})")
    else:
        row_sums = prior.entries.sum(axis=1)
        for pos in np.nonzero(row_sums > 1.0 + ROW_SUM_TOL)[0]:
            v.append(f"prior_assignment row {pos} sums to {row_sums[pos]:g} > 1")

    for i, req in enumerate(instance.spread_requirements):
        if not req.rack_group:
            v.append(f"spread_requirements[{i}] has an empty rack group")
        if len(req.scope_group) < 2:
            v.append(f"spread_requirements[{i}] needs at least 2 scopes")
        if not (0 <= req.resource_type < r):
            v.append(f"spread_requirements[{i}].resource_type {req.resource_type} out of range")
        for kk in req.rack_group:
            if not (0 <= kk < k):
                v.append(f"spread_requirements[{i}] rack type {kk} out of range")
        bad_scopes = [ss for ss in req.scope_group if not (0 <= ss < s)]
        for ss in bad_scopes:
            v.append(f"spread_requirements[{i}] scope {ss} out of range")
        if not bad_scopes and len(req.scope_group) >= 2:
            cols = instance.scope_membership[:, list(req.scope_group)]
            overlap = np.nonzero(cols.sum(axis=1) > 1)[0]
            if overlap.size:
                v.append(
                    f"spread_requirements[{i}] scopes overlap at position {overlap[0]}"
                )
    return v


def check_g1(assignment: Assignment) -> list[int]:
    """Positions holding more than one rack. Empty list means satisfied."""
    if assignment.mode != BINARY:
        raise ValueError("g1 check requires a binary assignment")
    return np.nonzero(assignment.entries.sum(axis=1) > 1.0)[0].tolist()


def check_g2(instance: ProblemInstance, assignment: Assignment) -> np.ndarray:
    """Per-type demand shortfall max(0, demand - placed count).

    One-sided: surplus racks are allowed, only missing ones are reported.
    """
    if assignment.mode != BINARY:
        raise ValueError("g2 check requires a binary assignment")
    counts = np.rint(assignment.counts()).astype(np.int64)
    return np.maximum(0, instance.demands - counts)


def check_g3(instance: ProblemInstance, assignment: Assignment) -> float:
    """Newly placed racks beyond the placement limit.

    Returns sum_k max(0, count_k - prior_count_k) - limit; negative values
    mean headroom remains, positive values mean the limit is violated.
    """
    if assignment.mode != BINARY:
        raise ValueError("g3 check requires a binary assignment")
    counts = assignment.counts()
    prior_counts = instance.prior_assignment.counts()
    new_placements = np.maximum(0.0, counts - prior_counts).sum()
    return float(new_placements - instance.placement_limit)


def check_all(instance: ProblemInstance, assignment: Assignment) -> ConstraintReport:
    """Run all three constraint checks and bundle the results."""
    return ConstraintReport(
        g1_violations=check_g1(assignment),
        g2_shortfalls=check_g2(instance, assignment),
        g3_excess=check_g3(instance, assignment),
    )
