"""Gradient-guided local search: one rack type at a time, in a given order.

Each rack type's subproblem flips positions until the placed count matches
the demand exactly, picking at every step the flip with the best partial
derivative of the augmented objective (most negative for additions on vacant
positions, most positive for removals from the type's own positions). The
gradient is re-evaluated after every flip. A configurable number of
remove-worst/add-best swap rounds then polishes the type's placement; swaps
that would increase the objective are reverted.

Columns of already-solved types are never touched again, so the per-position
and per-demand constraints hold by construction at every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Assignment, ProblemInstance
from .objective import (
    SOFTPLUS,
    ObjectiveBreakdown,
    _zeta,
    _zeta_prime,
    spread_of,
    total_utility,
)

TIE_BREAK_INDEX = "index"
TIE_BREAK_RANDOM = "random"
SWAP_MONOTONE = "monotone"
SWAP_ALWAYS = "always"


class InfeasibleDemandError(Exception):
    """A rack type's demand cannot be met with the vacant positions left."""

    def __init__(self, rack_type: int, missing: int, vacant: int):
        self.rack_type = rack_type
        super().__init__(
            f"rack type {rack_type} needs {missing} more positions "
            f"but only {vacant} are vacant"
        )


@dataclass
class EngineConfig:
    """Knobs for the local-search engine."""

    adjustment_rounds: int = 2
    tie_break: str = TIE_BREAK_INDEX
    tie_break_seed: int = 0
    swap_acceptance: str = SWAP_MONOTONE
    penalty_kind: str = SOFTPLUS


@dataclass
class SubproblemState:
    """Working state while one rack type is being placed."""

    assignment: Assignment
    solved_types: tuple[int, ...]
    current_type: int
    adjustment_rounds: int = 2


class PlacementEvaluator:
    """Incremental objective/gradient state for single-entry flips.

    Keeps per-scope usage, per-requirement utilizations, per-type counts and
    the movement total up to date so that evaluating one gradient column or
    the full objective after a flip costs far less than a from-scratch pass.
    """

    def __init__(self, instance: ProblemInstance, entries: np.ndarray, penalty_kind: str = SOFTPLUS):
        self.inst = instance
        self.penalty_kind = penalty_kind
        self.entries = np.array(entries, dtype=np.float64)
        self.scope_f = instance.scope_membership.astype(np.float64)
        self.prior = instance.prior_assignment.entries
        self.prior_counts = self.prior.sum(axis=0)
        self.counts = self.entries.sum(axis=0)
        self.row_sums = self.entries.sum(axis=1)
        self.usage = self.scope_f.T @ self.entries @ instance.resource_matrix

        # Per spread requirement: scope columns, per-type contribution weight,
        # and the current utilization vector.
        self._req_cols: list[np.ndarray] = []
        self._req_weight: list[np.ndarray] = []
        self._req_u: list[np.ndarray] = []
        for req in instance.spread_requirements:
            racks = list(req.rack_group)
            cols = self.scope_f[:, list(req.scope_group)]
            weight = np.zeros(instance.num_rack_types)
            weight[racks] = instance.resource_matrix[racks, req.resource_type]
            self._req_cols.append(cols)
            self._req_weight.append(weight)
            self._req_u.append(cols.T @ (self.entries @ weight))

        diff = np.maximum(0.0, self.prior - self.entries)
        self.movement = float((diff * instance.movement_weights[np.newaxis, :]).sum())

    def flip(self, p: int, k: int, value: float) -> None:
        old = self.entries[p, k]
        delta = value - old
        if delta == 0.0:
            return
        self.entries[p, k] = value
        self.counts[k] += delta
        self.row_sums[p] += delta
        self.usage += np.outer(self.scope_f[p], self.inst.resource_matrix[k]) * delta
        for cols, weight, u in zip(self._req_cols, self._req_weight, self._req_u):
            if weight[k] != 0.0:
                u += cols[p] * (weight[k] * delta)
        prior = self.prior[p, k]
        self.movement += self.inst.movement_weights[k] * (
            max(0.0, prior - value) - max(0.0, prior - old)
        )

    def objective(self) -> float:
        inst = self.inst
        spread = sum(spread_of(u) for u in self._req_u)
        penalty = float(_zeta(self.usage - inst.scope_limits, self.penalty_kind).sum())
        over = max(
            0.0,
            float(np.maximum(0.0, self.counts - self.prior_counts).sum())
            - inst.placement_limit,
        )
        return (
            self.movement
            + inst.beta_spread * spread
            + inst.beta_limit * penalty
            + inst.gamma_placement * over
        )

    def grad_column(self, k: int) -> np.ndarray:
        """Partial derivatives of the augmented objective for one type."""
        inst = self.inst
        col = np.where(
            self.prior[:, k] > self.entries[:, k], -inst.movement_weights[k], 0.0
        )
        slope = _zeta_prime(self.usage - inst.scope_limits, self.penalty_kind)
        col += inst.beta_limit * (self.scope_f @ (slope @ inst.resource_matrix[k]))
        for cols, weight, u in zip(self._req_cols, self._req_weight, self._req_u):
            if weight[k] != 0.0:
                dev = u - u.mean()
                std = np.sqrt((dev * dev).mean())
                if std > 0.0:
                    col += inst.beta_spread * weight[k] * (cols @ (dev / (len(u) * std)))
        delta = self.counts - self.prior_counts
        over = np.maximum(0.0, delta).sum() - inst.placement_limit
        if over > 0.0 and delta[k] > 0.0:
            col = col + inst.gamma_placement
        return col


def _pick(values: np.ndarray, mask: np.ndarray, best: str, config: EngineConfig, rng) -> int:
    """Index of the best masked entry; ties go to the lowest index unless the
    random tie-break mode is active."""
    guarded = np.where(mask, values, -np.inf if best == "max" else np.inf)
    target = guarded.max() if best == "max" else guarded.min()
    if config.tie_break == TIE_BREAK_RANDOM:
        candidates = np.nonzero(guarded == target)[0]
        return int(candidates[rng.integers(0, len(candidates))])
    return int(np.argmax(guarded) if best == "max" else np.argmin(guarded))


def _settle_type(
    instance: ProblemInstance,
    ev: PlacementEvaluator,
    k: int,
    adjustment_rounds: int,
    config: EngineConfig,
    rng,
) -> None:
    demand = int(instance.demands[k])
    allocations = int(round(ev.counts[k])) - demand

    if allocations < 0:
        vacant = int(np.count_nonzero(ev.row_sums == 0.0))
        if -allocations > vacant:
            raise InfeasibleDemandError(k, -allocations, vacant)
        for _ in range(-allocations):
            col = ev.grad_column(k)
            p = _pick(col, ev.row_sums == 0.0, "min", config, rng)
            ev.flip(p, k, 1.0)
    elif allocations > 0:
        for _ in range(allocations):
            col = ev.grad_column(k)
            p = _pick(col, ev.entries[:, k] == 1.0, "max", config, rng)
            ev.flip(p, k, 0.0)

    for _ in range(adjustment_rounds):
        own = ev.entries[:, k] == 1.0
        if not own.any():
            break
        before = ev.objective()
        p_out = _pick(ev.grad_column(k), own, "max", config, rng)
        ev.flip(p_out, k, 0.0)
        p_in = _pick(ev.grad_column(k), ev.row_sums == 0.0, "min", config, rng)
        ev.flip(p_in, k, 1.0)
        if config.swap_acceptance == SWAP_MONOTONE and ev.objective() > before:
            ev.flip(p_in, k, 0.0)
            ev.flip(p_out, k, 1.0)
            # The state is unchanged, so further rounds would propose the
            # same rejected swap.
            break


def solve_subproblem(
    instance: ProblemInstance, state: SubproblemState, config: EngineConfig = EngineConfig()
) -> Assignment:
    """Place exactly the demanded count of one rack type, then swap-polish."""
    if state.current_type in state.solved_types:
        raise ValueError(f"type {state.current_type} was already solved")
    if np.any(state.assignment.entries.sum(axis=1) > 1.0):
        raise ValueError("working assignment violates the one-rack-per-position rule")
    ev = PlacementEvaluator(instance, state.assignment.entries, config.penalty_kind)
    rng = np.random.Generator(np.random.Philox(key=[config.tie_break_seed, 0]))
    _settle_type(instance, ev, state.current_type, state.adjustment_rounds, config, rng)
    return Assignment(ev.entries)


def solve_ordered(
    instance: ProblemInstance,
    order: list[int] | tuple[int, ...] | np.ndarray,
    config: EngineConfig = EngineConfig(),
) -> tuple[Assignment, ObjectiveBreakdown]:
    """Run every rack type's subproblem in the given order.

    Returns the final binary assignment (one rack per position, counts equal
    to demands exactly) and its objective breakdown.
    """
    order = [int(k) for k in order]
    if sorted(order) != list(range(instance.num_rack_types)):
        raise ValueError(f"order {order} is not a permutation of the rack types")

    ev = PlacementEvaluator(
        instance, instance.prior_assignment.entries, config.penalty_kind
    )
    rng = np.random.Generator(np.random.Philox(key=[config.tie_break_seed, 0]))
    for k in order:
        _settle_type(instance, ev, k, config.adjustment_rounds, config, rng)

    assignment = Assignment(ev.entries)
    counts = np.rint(assignment.counts()).astype(np.int64)
    if np.any(assignment.entries.sum(axis=1) > 1.0):
        raise RuntimeError("solver produced a position with two racks")
    if np.any(counts != instance.demands):
        raise RuntimeError(
            f"solver missed demands: placed {counts.tolist()}, "
            f"wanted {instance.demands.tolist()}"
        )
    return assignment, total_utility(instance, assignment, config.penalty_kind)
