"""Rack-type ordering: featurization and the non-learned baselines.

The learned ordering policy lives in :mod:`rackplace.policy`; this module
holds everything that does not need a neural network: the two-float
per-type featurization the policy encoder consumes, exhaustive search over
all orders, and a seeded random-order baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .heuristic import EngineConfig, solve_ordered
from .model import ProblemInstance
from .objective import ObjectiveBreakdown
from .seeding import rng_stream

EXHAUSTIVE_MAX_TYPES = 8


def featurize(instance: ProblemInstance) -> np.ndarray:
    """Two floats per rack type: normalized demand gap and normalized
    resource-and-group density.

    Column 0: (demand - prior count) / positions. Column 1: (resource row
    sum + number of spread groups containing the type) / (resources +
    requirements). Deterministic in the instance.
    """
    prior_counts = instance.prior_assignment.counts()
    gap = (instance.demands - prior_counts) / instance.num_positions

    group_hits = np.zeros(instance.num_rack_types)
    for req in instance.spread_requirements:
        group_hits[list(req.rack_group)] += 1.0
    density = (instance.resource_matrix.sum(axis=1) + group_hits) / (
        instance.num_resources + len(instance.spread_requirements)
    )
    return np.stack([gap, density], axis=1)


def exhaustive_order_search(
    instance: ProblemInstance, config: EngineConfig = EngineConfig()
) -> tuple[tuple[int, ...], ObjectiveBreakdown]:
    """Solve every rack-type order and keep the best.

    Orders are visited lexicographically and only strict improvements
    replace the incumbent, so ties resolve to the first order. Guarded to 8
    rack types (factorial growth).
    """
    k = instance.num_rack_types
    if k > EXHAUSTIVE_MAX_TYPES:
        raise ValueError(
            f"{k} rack types means {k}! orders; exhaustive search is capped at "
            f"{EXHAUSTIVE_MAX_TYPES}"
        )
    best_order: tuple[int, ...] | None = None
    best_breakdown: ObjectiveBreakdown | None = None
    for order in permutations(range(k)):
        _, breakdown = solve_ordered(instance, order, config)
        if best_breakdown is None or breakdown.augmented < best_breakdown.augmented:
            best_order = order
            best_breakdown = breakdown
    return best_order, best_breakdown


@dataclass
class RandomOrderStats:
    """Objectives of uniformly sampled rack-type orders."""

    mean: float
    min: float
    max: float
    objectives: list[float]
    orders: list[tuple[int, ...]]


def random_order_baseline(
    instance: ProblemInstance,
    n_samples: int,
    seed: int = 0,
    config: EngineConfig = EngineConfig(),
) -> RandomOrderStats:
    """Solve ``n_samples`` uniformly random orders, deterministic in the seed."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = rng_stream(seed, 0)
    objectives = []
    orders = []
    for _ in range(n_samples):
        order = tuple(int(x) for x in rng.permutation(instance.num_rack_types))
        _, breakdown = solve_ordered(instance, order, config)
        orders.append(order)
        objectives.append(breakdown.augmented)
    return RandomOrderStats(
        mean=float(np.mean(objectives)),
        min=float(np.min(objectives)),
        max=float(np.max(objectives)),
        objectives=objectives,
        orders=orders,
    )
