import numpy as np
import pytest

from rackplace.fixtures import tiny_instance
from rackplace.instgen import GeneratorConfig, generate_instance
from rackplace.model import Assignment, ProblemInstance, SpreadRequirement


@pytest.fixture
def tiny():
    return tiny_instance()


@pytest.fixture
def small_config():
    """A 200-position config that keeps unit tests fast."""
    return GeneratorConfig(
        num_positions=200,
        scope_counts=(2, 10, 50),
        demand_range=(5, 15),
        placement_limit_range=(100, 150),
    )


@pytest.fixture
def small_instance(small_config):
    return generate_instance(small_config, seed=42)


def micro_config(num_positions=8):
    """Enumerable two-type instances for oracle comparisons."""
    return GeneratorConfig(
        num_positions=num_positions,
        num_rack_types=2,
        num_resources=3,
        scope_counts=(2, 4),
        limit_ranges=((2.0, 5.0), (1.0, 3.0)),
        demand_range=(1, 3),
        placement_limit_range=(2, 6),
        resource_matrix=np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]),
        spread_template=((0, 0), (2, 1)),
        beta_spread=5.0,
        beta_limit=1.0,
        gamma_placement=10.0,
    )


def random_relaxed_entries(instance: ProblemInstance, rng: np.random.Generator) -> np.ndarray:
    """Relaxed entries clear of every hinge kink: each entry sits well inside
    (0, 1/K), so rows sum below 1 and |prior - x| stays > 1e-3."""
    k = instance.num_rack_types
    high = min(0.9, (1.0 - 1e-3) / k)
    return rng.uniform(1e-3, high, size=(instance.num_positions, k))


def manual_instance() -> ProblemInstance:
    """Hand-built 6-position instance with a non-empty prior, used where a
    prior-dependent quantity (movement, placement cap) must be exercised."""
    prior = np.zeros((6, 2))
    prior[0, 0] = 1.0
    prior[1, 0] = 1.0
    prior[4, 1] = 1.0
    return ProblemInstance(
        num_positions=6,
        num_rack_types=2,
        num_resources=2,
        resource_matrix=np.array([[1.0, 0.0], [1.0, 2.0]]),
        scope_membership=np.array(
            [[1, 0], [1, 0], [1, 0], [0, 1], [0, 1], [0, 1]], dtype=np.bool_
        ),
        scope_limits=np.array([[3.0, 2.0], [3.0, 2.0]]),
        demands=np.array([2, 2]),
        placement_limit=3,
        movement_weights=np.array([1.0, 2.0]),
        spread_requirements=[
            SpreadRequirement(resource_type=0, rack_group=(0, 1), scope_group=(0, 1))
        ],
        prior_assignment=Assignment(prior),
        beta_spread=2.0,
        beta_limit=1.0,
        gamma_placement=10.0,
    )
