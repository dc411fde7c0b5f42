"""
Unit tests for the property audits
"""

import pytest
import numpy as np
import json
import os
import sys
from dataclasses import replace

# Add src to path
sys.path.append(os.path.join(os.path.dirname(__file__), '..', 'src'))

from analysis.audit import (
    AuditConfig,
    DeviationTracker,
    audit_distance_invariance,
    audit_equivariance,
    audit_gradients,
    audit_semantics,
    automorphism_checks,
    run_audits,
)
from data_manipulation.program_generator import GeneratorConfig
from learning.ga_model import GaModel, ModelConfig
from program.ir import parse


TINY = AuditConfig(
    programs=4,
    trials=5,
    seed=1,
    sampled_reorderings=3,
    random_permutations=3,
    semantics_percents=(50.0, 100.0),
    gradient_coordinates=4,
    model=ModelConfig(d_model=8, heads=2, layers=1, max_distance_bucket=4, vocab_size=24,
                      max_position=64, max_degree=8, hidden=8, projection=4),
    generator=GeneratorConfig(min_instructions=3, max_instructions=8),
)


class TestAuditConfig:
    """Test cases for audit settings"""

    def test_dict_round_trip(self):
        """Test that nested configs survive to_dict/from_dict"""
        restored = AuditConfig.from_dict(json.loads(json.dumps(TINY.to_dict())))
        assert restored == TINY

    def test_float_tolerance(self):
        """Test the precision-dependent tolerance"""
        assert TINY.float_tolerance == TINY.wide_tolerance
        narrow = replace(TINY, model=replace(TINY.model, precision="narrow"))
        assert narrow.float_tolerance == TINY.narrow_tolerance


class TestDeviationTracker:
    """Test cases for deviation bookkeeping"""

    def test_tracks_maximum(self):
        """Test absolute and relative maxima"""
        tracker = DeviationTracker("demo", 0.1)
        tracker.add(np.array([1.0, 2.0]), np.array([1.0, 2.5]))
        tracker.add(np.array([0.0]), np.array([0.0]))
        result = tracker.result()

        assert result.instances == 2
        assert result.max_abs_deviation == pytest.approx(0.5)
        assert result.max_rel_deviation == pytest.approx(0.2)
        assert not result.passed

    def test_shape_mismatch(self):
        """Test that mismatched shapes always fail"""
        tracker = DeviationTracker("demo", 1.0)
        tracker.add(np.zeros(2), np.zeros(3))
        result = tracker.result()
        assert not result.passed
        assert result.max_abs_deviation == -1.0

    def test_counts(self):
        """Test integer violation counts"""
        tracker = DeviationTracker("demo", 0.0)
        tracker.add_count(0)
        assert tracker.result().passed
        tracker.add_count(2)
        assert not tracker.result().passed


class TestSuites:
    """Test cases for the four audit suites"""

    def test_equivariance_holds(self):
        """Test that every equivariance property holds on random programs"""
        report = audit_equivariance(TINY)
        assert report.passed, report.failed_properties
        assert report.property("embedding_equivariance").instances > 0
        assert report.property("unbiased_all_permutation_equivariance").passed

    def test_small_programs_also_get_reorderings(self):
        """Test that sampled reorderings are checked next to enumerated automorphisms"""
        cfg = replace(TINY, programs=6, sampled_reorderings=5,
                      generator=GeneratorConfig(min_instructions=5, max_instructions=8, branch_probability=0.0,
                                                back_edge_probability=0.0, halt_probability=0.0))
        report = audit_equivariance(cfg)
        details = report.property("stack_equivariance").details

        assert report.passed, report.failed_properties
        assert details["automorphisms_checked"] >= cfg.programs
        assert details["reorderings_checked"] > 0
        assert details["programs"] == {"complete": cfg.programs}

    def test_residual_equivariance(self):
        """Test the residual + layer-norm variant"""
        cfg = replace(TINY, model=replace(TINY.model, residual=True))
        assert audit_equivariance(cfg).passed

    @pytest.mark.slow
    def test_negative_control_breaks_equivariance(self):
        """Test that absolute positions break the stack property"""
        cfg = replace(TINY, programs=6, negative_control=True,
                      generator=GeneratorConfig(min_instructions=5, max_instructions=8, branch_probability=0.0,
                                                back_edge_probability=0.0, halt_probability=0.0))
        report = audit_equivariance(cfg)

        assert not report.property("stack_equivariance").passed
        control = report.property("negative_control_breaks_equivariance")
        assert control.passed
        assert control.details["broken_fraction"] >= 0.95
        assert "stack_equivariance" in report.failed_properties

    def test_distance_holds(self):
        """Test the integer distance properties"""
        report = audit_distance_invariance(TINY)
        assert report.passed, report.failed_properties
        assert report.property("pdg_rebuild_consistency").instances > 0

    def test_semantics_holds(self):
        """Test that sampled reorderings and automorphisms preserve semantics"""
        report = audit_semantics(TINY)
        assert report.passed, report.failed_properties
        relationship = report.property("automorphism_semantics").details["relationship"]
        assert relationship["samples"] >= 0

    def test_large_groups_fall_back_to_reorderings(self):
        """Test that programs above max_group_order are still checked"""
        cfg = replace(TINY, max_group_order=1,
                      generator=GeneratorConfig(min_instructions=3, max_instructions=5, branch_probability=0.0,
                                                back_edge_probability=0.0, halt_probability=0.0))
        report = audit_semantics(cfg)
        automorphic = report.property("automorphism_semantics")
        coverage = automorphic.details["programs"]

        assert report.passed, report.failed_properties
        assert sum(coverage.values()) == cfg.programs
        assert coverage.get("group_too_large", 0) + coverage.get("complete", 0) == cfg.programs
        assert automorphic.instances > 0

    def test_gradients_hold(self):
        """Test finite differences, frozen parameters and unused buckets"""
        report = audit_gradients(TINY)
        assert report.passed, report.failed_properties
        assert report.property("finite_difference[plain]").details["tensors"] > 0
        assert report.property("finite_difference[residual]").passed

    def test_gradients_check_every_coordinate(self):
        """Test the full finite-difference sweep"""
        small = ModelConfig(d_model=4, heads=2, layers=1, max_distance_bucket=2, vocab_size=16,
                            max_position=4, max_degree=4, hidden=4, projection=2)
        cfg = replace(TINY, gradient_coordinates=None, gradient_model=small)
        report = audit_gradients(cfg)

        assert report.passed, report.failed_properties
        for variant, residual in (("plain", False), ("residual", True)):
            expected = GaModel.initialize(replace(small, residual=residual)).parameter_count
            assert report.property(f"finite_difference[{variant}]").details["coordinates"] == expected


class TestAutomorphismChecks:
    """Test cases for choosing the automorphisms audited per program"""

    def setup_method(self):
        """Setup test environment"""
        self.unit = parse("a = 1; b = 2; c = 3; d = 4")
        self.rng = np.random.default_rng(0)

    def test_complete_by_default(self):
        """Test that every element is checked without a per-program limit"""
        elements, group, coverage = automorphism_checks(self.unit, TINY, self.rng)
        assert coverage == "complete"
        assert group.order == 24
        assert len(elements) == 24

    def test_subsampled(self):
        """Test the optional per-program limit"""
        elements, group, coverage = automorphism_checks(self.unit, replace(TINY, max_elements_per_program=5), self.rng)
        assert coverage == "subsampled"
        assert group.order == 24
        assert len({sigma.mapping for sigma in elements}) == 5

    def test_group_too_large(self):
        """Test the group order cap"""
        elements, group, coverage = automorphism_checks(self.unit, replace(TINY, max_group_order=5), self.rng)
        assert (elements, group, coverage) == ([], None, "group_too_large")

    def test_above_cap(self):
        """Test the node count cap"""
        elements, group, coverage = automorphism_checks(self.unit, replace(TINY, enumeration_cap=3), self.rng)
        assert (elements, group, coverage) == ([], None, "above_cap")


class TestRunAudits:
    """Test cases for running several suites"""

    def test_json_is_deterministic(self):
        """Test byte-identical reports for one seed"""
        first = run_audits(TINY, ["distance", "semantics"]).to_json()
        second = run_audits(TINY, ["semantics", "distance"]).to_json()
        assert first == second
        payload = json.loads(first)
        assert [r["suite"] for r in payload["reports"]] == ["distance", "semantics"]
        assert "wall_time" not in first

    def test_failed_properties_are_listed(self):
        """Test the failure summary"""
        cfg = replace(TINY, programs=6, negative_control=True,
                      generator=GeneratorConfig(min_instructions=5, max_instructions=8, branch_probability=0.0,
                                                back_edge_probability=0.0, halt_probability=0.0))
        run = run_audits(cfg, ["equivariance"])
        assert not run.passed
        assert "equivariance/stack_equivariance" in run.failed_properties

    def test_unknown_suite(self):
        """Test suite validation"""
        with pytest.raises(ValueError):
            run_audits(TINY, ["coverage"])
