"""Exhaustive exact solver for tiny instances.

Enumerates every assignment that places exactly the demanded count of each
rack type with at most one rack per position, and returns the minimizer of
the augmented objective. Deliberately simple (no bounding, no pruning beyond
the search-space guard) so it can serve as an independent correctness oracle
for the local-search solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .model import Assignment, ProblemInstance
from .objective import SOFTPLUS, _objective_terms, augmented_objective

SEARCH_SPACE_GUARD = 10**7


class SearchSpaceError(Exception):
    """The enumeration would visit more candidates than the guard allows."""

    def __init__(self, size: int, guard: int):
        self.size = size
        self.guard = guard
        super().__init__(f"search space of {size} candidates exceeds the {guard} guard")


@dataclass
class OracleResult:
    optimal_assignment: Assignment
    optimal_value: float
    search_space_size: int


def search_space_size(instance: ProblemInstance) -> int:
    free = instance.num_positions
    size = 1
    for d in instance.demands:
        size *= comb(free, int(d))
        free -= int(d)
    return size


def brute_force_solve(
    instance: ProblemInstance, penalty_kind: str = SOFTPLUS, guard: int = SEARCH_SPACE_GUARD
) -> OracleResult:
    """Enumerate all exact-count assignments and return the best one.

    Candidates are visited in lexicographic order (types ascending, chosen
    position tuples ascending), and only strict improvements replace the
    incumbent, so ties resolve to the lexicographically first optimum.
    """
    size = search_space_size(instance)
    if size > guard:
        raise SearchSpaceError(size, guard)

    inst = instance
    p, k = inst.num_positions, inst.num_rack_types
    entries = np.zeros((p, k))
    best_entries: np.ndarray | None = None
    best_value = np.inf
    visited = 0

    def objective() -> float:
        m, s, pen, exc = _objective_terms(inst, entries, penalty_kind)
        return (
            m
            + inst.beta_spread * s
            + inst.beta_limit * pen
            + inst.gamma_placement * exc
        )

    def recurse(rack_type: int, available: tuple[int, ...]) -> None:
        nonlocal best_entries, best_value, visited
        if rack_type == k:
            visited += 1
            value = objective()
            if value < best_value:
                best_value = value
                best_entries = entries.copy()
            return
        demand = int(inst.demands[rack_type])
        for chosen in combinations(available, demand):
            for pos in chosen:
                entries[pos, rack_type] = 1.0
            remaining = tuple(pos for pos in available if pos not in chosen)
            recurse(rack_type + 1, remaining)
            for pos in chosen:
                entries[pos, rack_type] = 0.0

    recurse(0, tuple(range(p)))
    assert best_entries is not None and visited == size
    return OracleResult(
        optimal_assignment=Assignment(best_entries),
        optimal_value=float(best_value),
        search_space_size=visited,
    )


def optimality_gap(
    instance: ProblemInstance,
    assignment: Assignment,
    penalty_kind: str = SOFTPLUS,
    oracle_result: OracleResult | None = None,
) -> float:
    """Relative excess of an assignment's objective over the exact optimum.

    Assignments drawn from the same feasible set (exact counts, one rack per
    position) can never beat the optimum; a negative gap indicates a bug and
    raises.
    """
    if oracle_result is None:
        oracle_result = brute_force_solve(instance, penalty_kind)
    value = augmented_objective(instance, assignment, penalty_kind)
    gap = (value - oracle_result.optimal_value) / max(1.0, abs(oracle_result.optimal_value))
    if gap < -1e-9:
        raise AssertionError(
            f"assignment value {value} beats the exact optimum "
            f"{oracle_result.optimal_value}"
        )
    return gap
