"""Synthetic instance generation.

The defaults reproduce the reference experimental setup: 1000 positions in a
three-level scope hierarchy (2 data centers / 10 suites / 50 main
switchboards), 10 rack types with a fixed binary resource profile, demands
and limits drawn uniformly from per-level ranges, and a prior mapping drawn
from a fixed per-position category distribution in which half the positions
start vacant. Everything scales: position counts, rack-type counts (resource
rows tile), scope counts and ranges are all configurable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Assignment, ProblemInstance, SpreadRequirement, validate_instance
from .seeding import rng_stream

# Per rack type (rows): which of the 10 resource types it contributes.
BASE_RESOURCE_MATRIX = np.array(
    [
        [0, 0, 0, 0, 0, 1, 1, 0, 1, 0],
        [0, 1, 0, 0, 1, 1, 0, 0, 0, 0],
        [0, 0, 0, 0, 1, 0, 1, 0, 1, 0],
        [0, 1, 1, 0, 0, 0, 1, 0, 0, 1],
        [0, 1, 0, 1, 0, 0, 0, 0, 1, 0],
        [0, 0, 1, 1, 1, 0, 1, 0, 1, 0],
        [1, 0, 1, 1, 0, 0, 0, 0, 0, 0],
        [1, 1, 0, 1, 0, 0, 1, 0, 0, 0],
        [0, 0, 0, 0, 1, 0, 0, 0, 1, 0],
        [1, 1, 0, 0, 0, 0, 0, 0, 0, 1],
    ],
    dtype=np.float64,
)

# Per-position prior category probabilities for the 10 base rack types; the
# remaining 0.5 is the probability of starting vacant.
BASE_PRIOR_TYPE_PROBS = np.array(
    [0.033, 0.014, 0.030, 0.010, 0.009, 0.102, 0.029, 0.204, 0.018, 0.051]
)
VACANT_PROB = 0.5

# Default spread requirements: (resource type, hierarchy level). The rack
# group is every type that contributes the resource.
DEFAULT_SPREAD_TEMPLATE = ((0, 0), (4, 1), (6, 1), (8, 2))

# RNG stream ids within one instance seed.
_STREAM_PRIOR = 0
_STREAM_DEMANDS = 1
_STREAM_PLACEMENT_LIMIT = 2
_STREAM_SCOPE_LIMITS = 3


def default_resource_matrix(num_rack_types: int, num_resources: int) -> np.ndarray:
    """Base resource profile tiled/truncated to the requested shape."""
    reps_r = -(-num_rack_types // BASE_RESOURCE_MATRIX.shape[0])
    reps_c = -(-num_resources // BASE_RESOURCE_MATRIX.shape[1])
    tiled = np.tile(BASE_RESOURCE_MATRIX, (reps_r, reps_c))
    return tiled[:num_rack_types, :num_resources].copy()


def default_prior_probabilities(num_rack_types: int) -> np.ndarray:
    """Category probabilities (types..., vacant) scaled to the type count.

    The per-type mass always totals 1 - VACANT_PROB so that half the
    positions stay vacant regardless of how many rack types exist.
    """
    reps = -(-num_rack_types // len(BASE_PRIOR_TYPE_PROBS))
    raw = np.tile(BASE_PRIOR_TYPE_PROBS, reps)[:num_rack_types]
    raw = raw * ((1.0 - VACANT_PROB) / raw.sum())
    return np.concatenate([raw, [VACANT_PROB]])


@dataclass
class GeneratorConfig:
    """Everything needed to sample one problem instance."""

    num_positions: int = 1000
    num_rack_types: int = 10
    num_resources: int = 10
    scope_counts: tuple[int, ...] = (2, 10, 50)
    demand_range: tuple[int, int] = (20, 60)
    placement_limit_range: tuple[int, int] = (800, 1000)
    limit_ranges: tuple[tuple[float, float], ...] = ((3.0, 6.0), (30.0, 50.0), (90.0, 110.0))
    resource_matrix: np.ndarray | None = None
    prior_probabilities: np.ndarray | None = None
    spread_template: tuple[tuple[int, int], ...] = DEFAULT_SPREAD_TEMPLATE
    # Weight defaults are calibrated so that the movement, weighted-spread,
    # and weighted-penalty terms land within an order of magnitude of each
    # other for solved instances at the default scale.
    movement_weight: float = 1.0
    beta_spread: float = 100.0
    beta_limit: float = 1.0
    gamma_placement: float = 100.0

    def resolved_resource_matrix(self) -> np.ndarray:
        if self.resource_matrix is not None:
            return np.asarray(self.resource_matrix, dtype=np.float64)
        return default_resource_matrix(self.num_rack_types, self.num_resources)

    def resolved_prior_probabilities(self) -> np.ndarray:
        if self.prior_probabilities is not None:
            return np.asarray(self.prior_probabilities, dtype=np.float64)
        return default_prior_probabilities(self.num_rack_types)

    def to_dict(self) -> dict:
        return {
            "num_positions": self.num_positions,
            "num_rack_types": self.num_rack_types,
            "num_resources": self.num_resources,
            "scope_counts": list(self.scope_counts),
            "demand_range": list(self.demand_range),
            "placement_limit_range": list(self.placement_limit_range),
            "limit_ranges": [list(r) for r in self.limit_ranges],
            "resource_matrix": None
            if self.resource_matrix is None
            else np.asarray(self.resource_matrix).tolist(),
            "prior_probabilities": None
            if self.prior_probabilities is None
            else np.asarray(self.prior_probabilities).tolist(),
            "spread_template": [list(t) for t in self.spread_template],
            "movement_weight": self.movement_weight,
            "beta_spread": self.beta_spread,
            "beta_limit": self.beta_limit,
            "gamma_placement": self.gamma_placement,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorConfig":
        kwargs = dict(data)
        for key in ("scope_counts", "demand_range", "placement_limit_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        if "limit_ranges" in kwargs:
            kwargs["limit_ranges"] = tuple(tuple(r) for r in kwargs["limit_ranges"])
        if "spread_template" in kwargs:
            kwargs["spread_template"] = tuple(tuple(t) for t in kwargs["spread_template"])
        for key in ("resource_matrix", "prior_probabilities"):
            if kwargs.get(key) is not None:
                kwargs[key] = np.asarray(kwargs[key], dtype=np.float64)
        return cls(**kwargs)


def validate_config(config: GeneratorConfig) -> list[str]:
    """Invariant violations of a generator config; empty means usable."""
    v: list[str] = []
    p = config.num_positions
    if len(config.limit_ranges) != len(config.scope_counts):
        v.append("limit_ranges and scope_counts must have one entry per level")
    sizes = []
    for level, count in enumerate(config.scope_counts):
        if count <= 0 or p % count != 0:
            v.append(f"scope count {count} at level {level} does not divide {p} positions")
        else:
            sizes.append(p // count)
    for level in range(1, len(sizes)):
        if sizes[level - 1] % sizes[level] != 0:
            v.append(
                f"level {level} scopes (size {sizes[level]}) do not nest inside "
                f"level {level - 1} scopes (size {sizes[level - 1]})"
            )
    probs = config.resolved_prior_probabilities()
    if len(probs) != config.num_rack_types + 1:
        v.append("prior probabilities must have one entry per rack type plus vacant")
    elif abs(probs.sum() - 1.0) > 1e-12:
        v.append(f"prior probabilities sum to {probs.sum()!r}, expected 1")
    r = config.resolved_resource_matrix()
    if r.shape != (config.num_rack_types, config.num_resources):
        v.append(f"resource matrix shape {r.shape} does not match config")
    for res, level in config.spread_template:
        if not (0 <= res < config.num_resources):
            v.append(f"spread template resource {res} out of range")
        if not (0 <= level < len(config.scope_counts)):
            v.append(f"spread template level {level} out of range")
    if config.demand_range[0] > config.demand_range[1] or config.demand_range[0] < 0:
        v.append(f"bad demand range {config.demand_range}")
    if (
        config.placement_limit_range[0] > config.placement_limit_range[1]
        or config.placement_limit_range[0] < 0
    ):
        v.append(f"bad placement limit range {config.placement_limit_range}")
    return v


def build_scope_hierarchy(config: GeneratorConfig) -> tuple[np.ndarray, np.ndarray]:
    """Contiguous-block nested scopes.

    Returns the position-by-scope boolean membership matrix (levels
    concatenated coarsest first) and the level index of each scope column.
    """
    problems = [msg for msg in validate_config(config) if "scope" in msg or "nest" in msg]
    if problems:
        raise ValueError("; ".join(problems))
    p = config.num_positions
    total = sum(config.scope_counts)
    membership = np.zeros((p, total), dtype=np.bool_)
    levels = np.zeros(total, dtype=np.int64)
    col = 0
    positions = np.arange(p)
    for level, count in enumerate(config.scope_counts):
        size = p // count
        scope_of = positions // size
        for s in range(count):
            membership[scope_of == s, col] = True
            levels[col] = level
            col += 1
    return membership, levels


def sample_prior_mapping(config: GeneratorConfig, seed: int) -> Assignment:
    """Draw the previous-round mapping: one category per position."""
    probs = config.resolved_prior_probabilities()
    if abs(probs.sum() - 1.0) > 1e-12:
        raise ValueError("prior probabilities must sum to 1")
    rng = rng_stream(seed, _STREAM_PRIOR)
    k = config.num_rack_types
    categories = rng.choice(k + 1, size=config.num_positions, p=probs)
    entries = np.zeros((config.num_positions, k))
    occupied = categories < k
    entries[np.nonzero(occupied)[0], categories[occupied]] = 1.0
    return Assignment(entries)


def _clip_demands(demands: np.ndarray, num_positions: int) -> np.ndarray:
    """Decrement the largest demand until the total fits the position count."""
    demands = demands.copy()
    while demands.sum() > num_positions:
        demands[int(np.argmax(demands))] -= 1
    return demands


def spread_requirements_from_template(
    config: GeneratorConfig, resource_matrix: np.ndarray
) -> list[SpreadRequirement]:
    """Instantiate the template: group = all types contributing the resource."""
    reqs = []
    offsets = np.concatenate([[0], np.cumsum(config.scope_counts)])
    for res, level in config.spread_template:
        group = tuple(np.nonzero(resource_matrix[:, res] > 0)[0].tolist())
        scopes = tuple(range(offsets[level], offsets[level + 1]))
        reqs.append(SpreadRequirement(resource_type=res, rack_group=group, scope_group=scopes))
    return reqs


def generate_instance(config: GeneratorConfig, seed: int) -> ProblemInstance:
    """Sample one full problem instance, deterministic in (config, seed)."""
    problems = validate_config(config)
    if problems:
        raise ValueError("invalid generator config: " + "; ".join(problems))

    membership, levels = build_scope_hierarchy(config)
    resource_matrix = config.resolved_resource_matrix()

    lo, hi = config.demand_range
    demands = rng_stream(seed, _STREAM_DEMANDS).integers(
        lo, hi + 1, size=config.num_rack_types
    )
    demands = _clip_demands(demands, config.num_positions)

    qlo, qhi = config.placement_limit_range
    placement_limit = int(rng_stream(seed, _STREAM_PLACEMENT_LIMIT).integers(qlo, qhi + 1))

    limit_rng = rng_stream(seed, _STREAM_SCOPE_LIMITS)
    blocks = []
    for level, count in enumerate(config.scope_counts):
        llo, lhi = config.limit_ranges[level]
        blocks.append(limit_rng.uniform(llo, lhi, size=(count, config.num_resources)))
    scope_limits = np.concatenate(blocks, axis=0)

    instance = ProblemInstance(
        num_positions=config.num_positions,
        num_rack_types=config.num_rack_types,
        num_resources=config.num_resources,
        resource_matrix=resource_matrix,
        scope_membership=membership,
        scope_limits=scope_limits,
        demands=demands,
        placement_limit=placement_limit,
        movement_weights=np.full(config.num_rack_types, config.movement_weight),
        spread_requirements=spread_requirements_from_template(config, resource_matrix),
        prior_assignment=sample_prior_mapping(config, seed),
        beta_spread=config.beta_spread,
        beta_limit=config.beta_limit,
        gamma_placement=config.gamma_placement,
        seed=int(seed),
    )
    problems = validate_instance(instance)
    if problems:
        raise RuntimeError("generated an invalid instance: " + "; ".join(problems))
    return instance
