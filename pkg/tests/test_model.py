import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rackplace.model import (
    Assignment,
    ProblemInstance,
    SpreadRequirement,
    check_all,
    check_g1,
    check_g2,
    check_g3,
    validate_instance,
)

from conftest import manual_instance


def place(num_positions, num_rack_types, pairs):
    entries = np.zeros((num_positions, num_rack_types))
    for p, k in pairs:
        entries[p, k] = 1.0
    return Assignment(entries)


class TestAssignment:
    def test_binary_rejects_fractional(self):
        with pytest.raises(ValueError, match="0 or 1"):
            Assignment(np.array([[0.5, 0.0]]))

    def test_binary_rejects_double_occupancy(self):
        with pytest.raises(ValueError, match="two racks"):
            Assignment(np.array([[1.0, 1.0]]))

    def test_relaxed_accepts_fractional_rows_below_one(self):
        a = Assignment(np.array([[0.4, 0.5]]), mode="relaxed")
        assert a.mode == "relaxed"

    def test_relaxed_rejects_row_sum_above_one(self):
        with pytest.raises(ValueError, match="row sum"):
            Assignment(np.array([[0.7, 0.7]]), mode="relaxed")

    def test_entries_frozen(self):
        a = Assignment.empty(2, 2)
        with pytest.raises(ValueError):
            a.entries[0, 0] = 1.0

    def test_counts(self):
        a = place(4, 2, [(0, 0), (1, 0), (2, 1)])
        assert a.counts().tolist() == [2.0, 1.0]


class TestValidateInstance:
    def test_well_formed_instance_is_clean(self, tiny):
        assert validate_instance(tiny) == []

    def test_negative_demand_named(self, tiny):
        bad = ProblemInstance(
            **{
                **tiny.__dict__,
                "demands": np.array([-1, 1]),
            }
        )
        violations = validate_instance(bad)
        assert len(violations) == 1
        assert "demands[0]" in violations[0]

    def test_prior_row_over_one_named(self, tiny):
        prior = np.zeros((4, 2))
        prior[2] = [1.0, 1.0]
        bad = ProblemInstance(
            **{
                **tiny.__dict__,
                # Bypass Assignment's own guard to exercise instance validation.
                "prior_assignment": Assignment.__new__(Assignment),
            }
        )
        bad.prior_assignment.entries = prior
        bad.prior_assignment.mode = "binary"
        violations = validate_instance(bad)
        assert any("row 2" in v for v in violations)

    def test_overlapping_spread_scopes_flagged(self, tiny):
        membership = np.array([[1, 1], [1, 0], [0, 1], [0, 1]], dtype=np.bool_)
        bad = ProblemInstance(**{**tiny.__dict__, "scope_membership": membership})
        assert any("overlap" in v for v in validate_instance(bad))

    def test_dimension_mismatch_flagged(self, tiny):
        bad = ProblemInstance(**{**tiny.__dict__, "scope_limits": np.zeros((3, 1))})
        assert any("scope_limits" in v for v in validate_instance(bad))


class TestG1:
    def test_all_vacant_ok(self):
        assert check_g1(Assignment.empty(4, 2)) == []

    def test_one_rack_per_position_ok(self):
        assert check_g1(place(4, 2, [(0, 0), (1, 1), (2, 0), (3, 1)])) == []

    def test_double_occupancy_reported(self):
        entries = np.zeros((4, 2))
        entries[3] = [1.0, 1.0]
        a = Assignment.__new__(Assignment)
        a.entries = entries
        a.mode = "binary"
        assert check_g1(a) == [3]

    def test_relaxed_rejected(self):
        with pytest.raises(ValueError, match="binary"):
            check_g1(Assignment(np.zeros((2, 2)), mode="relaxed"))


class TestG2:
    def test_exact_counts(self, tiny):
        a = place(4, 2, [(0, 0), (2, 1)])
        assert check_g2(tiny, a).tolist() == [0, 0]

    def test_empty_assignment_shortfall(self, tiny):
        two = ProblemInstance(**{**tiny.__dict__, "demands": np.array([2, 0])})
        assert check_g2(two, Assignment.empty(4, 2)).tolist() == [2, 0]

    def test_surplus_allowed(self, tiny):
        a = place(4, 2, [(0, 0), (1, 0), (2, 0)])
        assert check_g2(tiny, a).tolist() == [0, 1]


class TestG3:
    def test_no_new_placements(self):
        inst = manual_instance()
        assert check_g3(inst, inst.prior_assignment) == -3.0

    def test_new_placements_counted(self, tiny):
        a = place(4, 2, [(0, 0), (1, 0), (2, 1)])
        assert check_g3(tiny, a) == pytest.approx(1.0)  # 3 new - limit 2

    def test_only_positive_differences(self):
        # Type 0 shrinks by 5, type 1 grows by 5, limit 5: excess is zero.
        prior = np.zeros((10, 2))
        prior[:5, 0] = 1.0
        entries = np.zeros((10, 2))
        entries[5:, 1] = 1.0
        inst = manual_instance()
        big = ProblemInstance(
            **{
                **inst.__dict__,
                "num_positions": 10,
                "scope_membership": np.ones((10, 1), dtype=np.bool_),
                "scope_limits": np.full((1, 2), 100.0),
                "spread_requirements": [],
                "prior_assignment": Assignment(prior),
                "placement_limit": 5,
            }
        )
        assert check_g3(big, Assignment(entries)) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 12), st.integers(1, 3))
def test_g3_invariant_under_position_permutation(seed, num_positions, num_rack_types):
    rng = np.random.default_rng(seed)
    prior = np.zeros((num_positions, num_rack_types))
    entries = np.zeros((num_positions, num_rack_types))
    for row in (prior, entries):
        for p in range(num_positions):
            k = rng.integers(-1, num_rack_types)
            if k >= 0:
                row[p, k] = 1.0
    inst = manual_instance()
    inst = ProblemInstance(
        **{
            **inst.__dict__,
            "num_positions": num_positions,
            "num_rack_types": num_rack_types,
            "num_resources": 1,
            "resource_matrix": np.ones((num_rack_types, 1)),
            "movement_weights": np.ones(num_rack_types),
            "demands": np.zeros(num_rack_types, dtype=np.int64),
            "scope_membership": np.ones((num_positions, 1), dtype=np.bool_),
            "scope_limits": np.full((1, 1), 10.0),
            "spread_requirements": [],
            "prior_assignment": Assignment(prior),
            "placement_limit": 2,
        }
    )
    perm = rng.permutation(num_positions)
    inst_permuted = ProblemInstance(
        **{**inst.__dict__, "prior_assignment": Assignment(prior[perm])}
    )
    assert check_g3(inst, Assignment(entries)) == check_g3(
        inst_permuted, Assignment(entries[perm])
    )


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_checks_invariant_under_type_relabeling(seed):
    rng = np.random.default_rng(seed)
    inst = manual_instance()
    entries = np.zeros((6, 2))
    for p in range(6):
        k = rng.integers(-1, 2)
        if k >= 0:
            entries[p, k] = 1.0
    a = Assignment(entries)
    perm = rng.permutation(2)
    relabeled = ProblemInstance(
        **{
            **inst.__dict__,
            "resource_matrix": inst.resource_matrix[perm],
            "demands": inst.demands[perm],
            "movement_weights": inst.movement_weights[perm],
            "spread_requirements": [],
            "prior_assignment": Assignment(inst.prior_assignment.entries[:, perm]),
        }
    )
    base = ProblemInstance(**{**inst.__dict__, "spread_requirements": []})
    a_perm = Assignment(entries[:, perm])
    assert sorted(check_g2(base, a).tolist()) == sorted(check_g2(relabeled, a_perm).tolist())
    assert check_g3(base, a) == check_g3(relabeled, a_perm)
    assert check_g1(a) == check_g1(a_perm)


def test_check_all_bundles(tiny):
    report = check_all(tiny, Assignment.empty(4, 2))
    assert report.g1_violations == []
    assert report.g2_shortfalls.tolist() == [1, 1]
    assert report.g3_excess == -2.0
    assert not report.satisfied
    report_ok = check_all(tiny, place(4, 2, [(0, 0), (2, 1)]))
    assert report_ok.satisfied


def test_spread_requirement_normalizes():
    req = SpreadRequirement(resource_type=1, rack_group=(3, 1), scope_group=(5, 2))
    assert req.rack_group == (1, 3)
    assert req.scope_group == (2, 5)
