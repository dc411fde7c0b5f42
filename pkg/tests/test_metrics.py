"""
Unit tests for the metrics module
"""

import pytest
import numpy as np
import os
import sys

# Add src to path
sys.path.append(os.path.join(os.path.dirname(__file__), '..', 'src'))

from analysis.metrics import (
    auc_score,
    evaluate,
    evaluate_percent,
    f1_by_length_bin,
    f1_score,
    majority_baseline_f1,
)
from learning.ga_model import GaModel, ModelConfig
from program.ir import parse


class TestScores:
    """Test cases for F1 and AUC"""

    def test_binary_f1(self):
        """Test F1 of the positive class"""
        assert f1_score([1, 1, 0, 0], [1, 0, 1, 0]) == pytest.approx(0.5)
        assert f1_score([1, 1], [1, 1]) == 1.0

    def test_f1_without_positives(self):
        """Test F1 when class 1 never appears"""
        assert f1_score([0, 0], [0, 0]) == 0.0

    def test_macro_f1(self):
        """Test macro averaging over more than two classes"""
        assert f1_score([0, 1, 2], [0, 1, 2]) == 1.0
        assert f1_score([0, 1, 2], [0, 2, 1]) == pytest.approx(1.0 / 3.0)

    def test_length_mismatch(self):
        """Test unequal inputs"""
        with pytest.raises(ValueError):
            f1_score([0, 1], [0])

    def test_majority_baseline(self):
        """Test always predicting the most frequent label"""
        assert majority_baseline_f1([1, 1, 0]) == pytest.approx(0.8)
        assert majority_baseline_f1([0, 0, 1]) == 0.0
        assert majority_baseline_f1([]) == 0.0

    def test_auc(self):
        """Test perfect, reversed, tied and single-class AUC"""
        assert auc_score([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0
        assert auc_score([0, 0, 1, 1], [0.9, 0.8, 0.2, 0.1]) == 0.0
        assert auc_score([0, 1], [0.5, 0.5]) == 0.5
        assert auc_score([1, 1], [0.1, 0.2]) == 0.5

    def test_length_bins(self):
        """Test per-bin counts"""
        bins = f1_by_length_bin([2, 3, 8, 9], [1, 0, 1, 1], [1, 0, 0, 1], bins=2)
        assert [b["count"] for b in bins] == [2, 2]
        assert bins[0]["f1"] == 1.0

    def test_single_length(self):
        """Test a set where every program has one length"""
        bins = f1_by_length_bin([4, 4], [1, 0], [1, 0])
        assert bins == [{"bin": "4-4", "count": 2, "f1": 1.0}]


class TestEvaluate:
    """Test cases for permuted-test-set evaluation"""

    def setup_method(self):
        """Setup test environment"""
        config = ModelConfig(d_model=8, heads=2, layers=1, max_distance_bucket=4, vocab_size=24,
                             max_position=8, max_degree=8, hidden=8, projection=4)
        self.model = GaModel.initialize(config)
        self.units = [
            (parse("a = 1; b = 2; c = a + b"), 1),
            (parse("x = 2; y = 4; store y"), 0),
            (parse("d = load; e = d; f = 3"), 1),
        ]

    def test_unit_evaluation(self):
        """Test the result fields"""
        result = evaluate_percent(self.model, self.units, "unit", 50.0, seed=1)

        assert result["examples"] == 3
        assert 0.0 <= result["f1"] <= 1.0
        assert len(result["predictions_digest"]) == 64

    def test_predictions_stable_across_percents(self):
        """Test identical predictions at every permutation level"""
        result = evaluate(self.model, self.units, "unit", percents=(0.0, 50.0, 100.0), seed=2)

        assert result["predictions_identical"]
        assert result["f1_spread"] == 0.0
        assert [run["percent"] for run in result["runs"]] == [0.0, 50.0, 100.0]

    def test_token_predictions_restored(self):
        """Test that token predictions are mapped back to the original order"""
        items = [(parse("a = 1; b = 2; store a"), [0, 1, 0, 1, 0, 1, 0, 1])]
        result = evaluate(self.model, items, "token", percents=(0.0, 100.0), seed=0)
        assert result["predictions_identical"]

    def test_pair_reports_auc(self):
        """Test AUC for pair tasks"""
        items = [
            ((parse("a = 1; b = 2"), parse("b = 2; a = 1")), 1),
            ((parse("a = 1; b = a"), parse("c = load")), 0),
        ]
        result = evaluate_percent(self.model, items, "pair", 100.0)
        assert 0.0 <= result["auc"] <= 1.0

    def test_non_finite_outputs_are_reported(self):
        """Test that NaN logits are counted and scored as misses"""
        self.model.params["head.pool.b2"][:] = np.nan
        result = evaluate(self.model, self.units, "unit", percents=(0.0, 100.0))

        assert [run["non_finite"] for run in result["runs"]] == [3, 3]
        assert result["non_finite_outputs"] == 6
        assert result["runs"][0]["f1"] == 0.0

    def test_finite_outputs(self):
        """Test the zero count of a healthy model"""
        assert evaluate_percent(self.model, self.units, "unit", 0.0)["non_finite"] == 0
