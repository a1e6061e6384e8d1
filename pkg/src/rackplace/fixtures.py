"""Canonical tiny instance used across tests and demos.

Four positions split into two scopes of two, two rack types with a single
shared resource, demand of one rack each, empty prior mapping. Small enough
to enumerate by hand: the optimum puts the two racks in different scopes.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from .model import Assignment, ProblemInstance, SpreadRequirement
from .serialize import instance_from_dict, load_json


def tiny_instance() -> ProblemInstance:
    return ProblemInstance(
        num_positions=4,
        num_rack_types=2,
        num_resources=1,
        resource_matrix=np.array([[1.0], [1.0]]),
        scope_membership=np.array(
            [[1, 0], [1, 0], [0, 1], [0, 1]], dtype=np.bool_
        ),
        scope_limits=np.array([[4.0], [4.0]]),
        demands=np.array([1, 1]),
        placement_limit=2,
        movement_weights=np.array([1.0, 1.0]),
        spread_requirements=[
            SpreadRequirement(resource_type=0, rack_group=(0, 1), scope_group=(0, 1))
        ],
        prior_assignment=Assignment.empty(4, 2),
        beta_spread=1.0,
        beta_limit=1.0,
        gamma_placement=10.0,
    )


def load_tiny_instance() -> ProblemInstance:
    """The same instance, read from the packaged fixture file."""
    with resources.as_file(
        resources.files("rackplace").joinpath("data/tiny_instance.json")
    ) as path:
        return instance_from_dict(load_json(path))
