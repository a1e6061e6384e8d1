"""Objective evaluation and its gradient with respect to a relaxed assignment.

The objective combines three metrics plus a placement-cap penalty:

* movement:       sum_{p,k} M_k * max(0, prior - current)   (removals cost)
* spread:         per requirement, population std of per-scope utilizations
* limit penalty:  per (scope, resource), softplus(usage - limit)
* placement cap:  gamma * max(0, new_placements - limit)     (exact hinge)

The gradient is closed-form reverse-mode over this fixed graph. Subgradient
conventions at kinks: every max(0, z) uses derivative 0 at z == 0, and the
spread std uses gradient 0 at zero variance. These choices avoid phantom
descent directions when the heuristic scans candidate flips.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import RELAXED, Assignment, ProblemInstance, SpreadRequirement

SOFTPLUS = "softplus"
HINGE = "hinge"


def softplus(z: np.ndarray) -> np.ndarray:
    """ln(1 + e^z), overflow-safe."""
    return np.logaddexp(0.0, z)


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Derivative of softplus, overflow-safe."""
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def _zeta(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == SOFTPLUS:
        return softplus(z)
    if kind == HINGE:
        return np.maximum(0.0, z)
    raise ValueError(f"unknown penalty kind {kind!r}")


def _zeta_prime(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == SOFTPLUS:
        return sigmoid(z)
    if kind == HINGE:
        return (z > 0.0).astype(np.float64)
    raise ValueError(f"unknown penalty kind {kind!r}")


@dataclass
class ObjectiveBreakdown:
    """All objective components for one assignment.

    ``spread`` and ``limit_penalty`` are unweighted sums; the weights enter in
    ``utility = movement + beta_spread * spread + beta_limit * limit_penalty``.
    ``placement_excess`` is the hinged cap overshoot (>= 0), and
    ``augmented = utility + gamma_placement * placement_excess``.
    """

    movement: float
    spread: float
    limit_penalty: float
    placement_excess: float
    utility: float
    augmented: float

    def to_dict(self) -> dict:
        return {
            "movement": self.movement,
            "spread": self.spread,
            "limit_penalty": self.limit_penalty,
            "placement_excess": self.placement_excess,
            "utility": self.utility,
            "augmented": self.augmented,
        }


@dataclass
class GradientField:
    """Partial derivatives of the augmented objective, one per (position, type)."""

    values: np.ndarray
    evaluated_at: Assignment


def movement_cost(instance: ProblemInstance, assignment: Assignment) -> float:
    """Weighted count of racks removed relative to the prior mapping.

    Placements are free; only prior entries that shrank are charged.
    """
    diff = np.maximum(0.0, instance.prior_assignment.entries - assignment.entries)
    return float((diff * instance.movement_weights[np.newaxis, :]).sum())


def scope_utilizations(
    instance: ProblemInstance, assignment: Assignment, req: SpreadRequirement
) -> np.ndarray:
    """Resource contributed by the requirement's rack group, per scope."""
    racks = list(req.rack_group)
    scopes = list(req.scope_group)
    load = assignment.entries[:, racks] @ instance.resource_matrix[racks, req.resource_type]
    return instance.scope_membership[:, scopes].astype(np.float64).T @ load


def spread_metric(
    instance: ProblemInstance, assignment: Assignment, req: SpreadRequirement
) -> float:
    """Population standard deviation of the per-scope utilizations."""
    return spread_of(scope_utilizations(instance, assignment, req))


def spread_of(utilizations: np.ndarray) -> float:
    dev = utilizations - utilizations.mean()
    return float(np.sqrt((dev * dev).mean()))


def limit_penalty(
    instance: ProblemInstance, assignment: Assignment, kind: str = SOFTPLUS
) -> tuple[float, np.ndarray]:
    """Total overage penalty plus the per-(scope, resource) cell matrix."""
    usage = usage_matrix(instance, assignment.entries)
    per_cell = _zeta(usage - instance.scope_limits, kind)
    return float(per_cell.sum()), per_cell


def usage_matrix(instance: ProblemInstance, entries: np.ndarray) -> np.ndarray:
    """Per-(scope, resource) utilization of the given assignment entries."""
    scope_f = instance.scope_membership.astype(np.float64)
    return scope_f.T @ entries @ instance.resource_matrix


def placement_excess(instance: ProblemInstance, entries: np.ndarray) -> float:
    """Hinged overshoot of new placements beyond the placement limit."""
    delta = entries.sum(axis=0) - instance.prior_assignment.entries.sum(axis=0)
    return max(0.0, float(np.maximum(0.0, delta).sum()) - instance.placement_limit)


def total_utility(
    instance: ProblemInstance, assignment: Assignment, penalty_kind: str = SOFTPLUS
) -> ObjectiveBreakdown:
    """Evaluate every objective component for one assignment."""
    movement, spread, penalty, excess = _objective_terms(
        instance, assignment.entries, penalty_kind
    )
    utility = movement + instance.beta_spread * spread + instance.beta_limit * penalty
    return ObjectiveBreakdown(
        movement=movement,
        spread=spread,
        limit_penalty=penalty,
        placement_excess=excess,
        utility=utility,
        augmented=utility + instance.gamma_placement * excess,
    )


def augmented_objective(
    instance: ProblemInstance, assignment: Assignment, penalty_kind: str = SOFTPLUS
) -> float:
    return total_utility(instance, assignment, penalty_kind).augmented


def _objective_terms(
    instance: ProblemInstance, entries: np.ndarray, penalty_kind: str
) -> tuple[float, float, float, float]:
    """(movement, spread, penalty, placement excess) from raw entries."""
    diff = np.maximum(0.0, instance.prior_assignment.entries - entries)
    movement = float((diff * instance.movement_weights[np.newaxis, :]).sum())

    spread = 0.0
    for req in instance.spread_requirements:
        racks = list(req.rack_group)
        load = entries[:, racks] @ instance.resource_matrix[racks, req.resource_type]
        u = instance.scope_membership[:, list(req.scope_group)].astype(np.float64).T @ load
        spread += spread_of(u)

    usage = usage_matrix(instance, entries)
    penalty = float(_zeta(usage - instance.scope_limits, penalty_kind).sum())

    return movement, spread, penalty, placement_excess(instance, entries)


def gradient(
    instance: ProblemInstance,
    relaxed_assignment: Assignment,
    free_type: int | None = None,
    frozen_types: frozenset[int] | set[int] = frozenset(),
    penalty_kind: str = SOFTPLUS,
) -> GradientField:
    """Gradient of the augmented objective at a relaxed assignment.

    All (position, type) partials are returned; callers optimizing one rack
    type simply ignore the frozen columns. ``free_type`` must not be listed
    in ``frozen_types``.
    """
    if free_type is not None and free_type in frozen_types:
        raise ValueError(f"free type {free_type} is in the frozen set")
    entries = relaxed_assignment.entries
    if np.isnan(entries).any():
        raise ValueError("assignment contains NaN entries")

    values = gradient_values(instance, entries, penalty_kind)
    return GradientField(values=values, evaluated_at=relaxed_assignment)


def gradient_values(
    instance: ProblemInstance, entries: np.ndarray, penalty_kind: str = SOFTPLUS
) -> np.ndarray:
    """Gradient matrix from raw entries (shared with the solver fast path)."""
    prior = instance.prior_assignment.entries
    scope_f = instance.scope_membership.astype(np.float64)

    # Movement: d/dx max(0, prior - x) is -1 strictly below prior, 0 elsewhere.
    grad = np.where(
        prior > entries, -instance.movement_weights[np.newaxis, :], 0.0
    ).astype(np.float64)

    # Limit penalty, pulled back through usage = S^T X R.
    usage = scope_f.T @ entries @ instance.resource_matrix
    slope = _zeta_prime(usage - instance.scope_limits, penalty_kind)
    grad += instance.beta_limit * (scope_f @ slope @ instance.resource_matrix.T)

    # Spread: d std / d u_s = (u_s - mean) / (n * std), zero at zero variance.
    for req in instance.spread_requirements:
        racks = list(req.rack_group)
        scopes = list(req.scope_group)
        res = instance.resource_matrix[racks, req.resource_type]
        load = entries[:, racks] @ res
        u = scope_f[:, scopes].T @ load
        dev = u - u.mean()
        std = np.sqrt((dev * dev).mean())
        if std > 0.0:
            w = dev / (len(u) * std)
            per_pos = scope_f[:, scopes] @ w
            grad[:, racks] += instance.beta_spread * np.outer(per_pos, res)

    # Placement cap hinge: active only while over the limit, and only for
    # types whose count actually grew.
    delta = entries.sum(axis=0) - prior.sum(axis=0)
    over = np.maximum(0.0, delta).sum() - instance.placement_limit
    if over > 0.0:
        grad[:, delta > 0.0] += instance.gamma_placement

    return grad


def finite_difference_check(
    instance: ProblemInstance,
    relaxed_assignment: Assignment,
    step: float = 1e-5,
    max_entries: int | None = None,
    seed: int = 0,
    penalty_kind: str = SOFTPLUS,
) -> float:
    """Max relative disagreement between the analytic gradient and central
    finite differences of the objective.

    The evaluation point must stay clear of the hinge kinks (|prior - x| and
    the placement-cap argument both larger than ~10 * step). With
    ``max_entries`` set, a seeded random subset of entries is probed instead
    of all of them.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    entries = relaxed_assignment.entries
    analytic = gradient(instance, relaxed_assignment, penalty_kind=penalty_kind).values

    num = entries.size
    if max_entries is None or max_entries >= num:
        flat_indices = np.arange(num)
    else:
        rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
        flat_indices = rng.choice(num, size=max_entries, replace=False)

    def f(x: np.ndarray) -> float:
        m, s, pen, exc = _objective_terms(instance, x, penalty_kind)
        return (
            m
            + instance.beta_spread * s
            + instance.beta_limit * pen
            + instance.gamma_placement * exc
        )

    work = entries.copy()
    worst = 0.0
    for flat in flat_indices:
        p, k = divmod(int(flat), entries.shape[1])
        orig = work[p, k]
        work[p, k] = orig + step
        f_plus = f(work)
        work[p, k] = orig - step
        f_minus = f(work)
        work[p, k] = orig
        fd = (f_plus - f_minus) / (2.0 * step)
        err = abs(analytic[p, k] - fd) / max(1.0, abs(analytic[p, k]))
        worst = max(worst, err)
    return worst
