"""
Unit tests for the trainer module
"""

import pytest
import numpy as np
import os
import sys
import tempfile
import shutil

# Add src to path
sys.path.append(os.path.join(os.path.dirname(__file__), '..', 'src'))

from analysis.metrics import evaluate
from data_manipulation.corpus_builder import build_corpus, load_corpus
from learning.ga_model import ModelConfig
from learning.trainer import (
    AdamOptimizer,
    EmptyCorpusError,
    LabelError,
    NonFiniteOutputError,
    TrainingConfig,
    predict,
    train,
    validate_corpus,
)
from program.ir import parse
from program.pdg import build_pdg
from program.symmetry import apply, sample_reordering


CONFIG = ModelConfig(d_model=8, heads=2, layers=1, max_distance_bucket=4, vocab_size=24,
                     max_position=8, max_degree=8, hidden=8, projection=4)


class TestTrainingConfig:
    """Test cases for optimizer settings"""

    def test_validation(self):
        """Test rejection of a zero batch"""
        with pytest.raises(ValueError):
            TrainingConfig(batch_size=0)

    def test_from_dict_ignores_unknown(self):
        """Test loading from a config section"""
        config = TrainingConfig.from_dict({"epochs": 3, "comment": "x"})
        assert config.epochs == 3


class TestAdamOptimizer:
    """Test cases for the Adam update"""

    def test_first_step_moves_by_learning_rate(self):
        """Test the bias-corrected first step"""
        params = {"w": np.array([1.0, -1.0])}
        optimizer = AdamOptimizer(params, TrainingConfig(learning_rate=0.1))
        optimizer.step(params, {"w": np.array([2.0, -0.5])})

        assert np.allclose(params["w"], [0.9, -0.9], atol=1e-6)
        assert optimizer.step_count == 1

    def test_zero_gradient_keeps_value(self):
        """Test that a zero gradient leaves the parameter alone"""
        params = {"w": np.array([3.0])}
        optimizer = AdamOptimizer(params, TrainingConfig())
        optimizer.step(params, {"w": np.zeros(1)})
        assert params["w"][0] == 3.0


class TestValidation:
    """Test cases for corpus validation"""

    def test_empty_corpus(self):
        """Test training on nothing"""
        with pytest.raises(EmptyCorpusError):
            train([], CONFIG, "unit")

    def test_unit_label_range(self):
        """Test an out-of-range unit label"""
        with pytest.raises(LabelError):
            validate_corpus([(parse("a = 1"), 5)], "unit", CONFIG)

    def test_token_label_count(self):
        """Test token labels that do not match the token count"""
        with pytest.raises(LabelError):
            validate_corpus([(parse("a = 1"), [0, 1])], "token", CONFIG)

    def test_pair_label(self):
        """Test a non-binary pair label"""
        with pytest.raises(LabelError):
            validate_corpus([((parse("a = 1"), parse("b = 1")), 2)], "pair", CONFIG)

    def test_empty_unit(self):
        """Test that an empty unit cannot be pooled"""
        with pytest.raises(LabelError):
            validate_corpus([(parse(""), 0)], "unit", CONFIG)

    def test_unknown_task(self):
        """Test task validation"""
        with pytest.raises(ValueError):
            validate_corpus([(parse("a = 1"), 0)], "regression", CONFIG)


class TestTrain:
    """Test cases for training"""

    @pytest.mark.slow
    def test_memorizes_one_example(self):
        """Test that a single example is fitted"""
        corpus = [(parse("a = 1; b = a + 2; store b"), 1)]
        result = train(corpus, CONFIG, "unit", TrainingConfig(epochs=400, batch_size=1, learning_rate=0.05))

        assert result.trace["loss"].iloc[-1] < 1e-3
        assert predict(result.model, [corpus[0][0]], "unit") == [1]

    def test_deterministic(self):
        """Test bitwise-identical models from identical runs"""
        corpus = [(parse("a = 1; b = a"), 0), (parse("c = 2; store c"), 1), (parse("d = load"), 1)]
        training = TrainingConfig(epochs=3, batch_size=2, seed=4)
        first = train(corpus, CONFIG, "unit", training).model
        second = train(corpus, CONFIG, "unit", training).model
        for name in first.params:
            assert np.array_equal(first.params[name], second.params[name])

    def test_trace(self):
        """Test one trace row per optimizer step"""
        corpus = [(parse("a = 1"), 0), (parse("b = 2"), 1), (parse("c = 3"), 0)]
        result = train(corpus, CONFIG, "unit", TrainingConfig(epochs=2, batch_size=2))

        assert list(result.trace.columns) == ["epoch", "step", "loss"]
        assert len(result.trace) == 4
        assert list(result.trace["step"]) == [1, 2, 3, 4]

    def test_returns_requested_precision(self):
        """Test that narrow models are trained wide and returned narrow"""
        config = ModelConfig(**{**CONFIG.to_dict(), "precision": "narrow"})
        result = train([(parse("a = 1; b = a"), 1)], config, "unit", TrainingConfig(epochs=1))

        assert result.model.config.precision == "narrow"
        assert result.model.params["emb.token"].dtype == np.float64

    def test_token_task(self):
        """Test per-token training and prediction shapes"""
        unit = parse("a = 1; store a")
        result = train([(unit, [0, 0, 0, 1, 1])], CONFIG, "token", TrainingConfig(epochs=2))
        predictions = predict(result.model, [unit], "token")
        assert predictions[0].shape == (5,)

    def test_pair_task(self):
        """Test pair training and similarity range"""
        first, second = parse("a = 1; b = 2"), parse("b = 2; a = 1")
        result = train([((first, second), 1), ((first, parse("c = load")), 0)], CONFIG, "pair",
                       TrainingConfig(epochs=2))
        similarity = predict(result.model, [(first, second)], "pair")[0]
        assert -1.0 <= similarity <= 1.0

    def test_predictions_survive_reordering(self):
        """Test identical unit predictions on legal reorderings"""
        corpus = [(parse("a = 1; b = 2; c = a + b; store c"), 1), (parse("d = load; e = d * 3"), 0)]
        model = train(corpus, CONFIG, "unit", TrainingConfig(epochs=20, learning_rate=0.05)).model
        unit = corpus[0][0]
        baseline = predict(model, [unit], "unit")
        for seed in range(5):
            moved = apply(sample_reordering(build_pdg(unit), 100.0, seed), unit)
            assert predict(model, [moved], "unit") == baseline

    def test_non_finite_prediction(self):
        """Test that NaN outputs raise instead of producing a label"""
        corpus = [(parse("a = 1; b = a"), 0), (parse("c = 2"), 1)]
        model = train(corpus, CONFIG, "unit", TrainingConfig(epochs=1)).model
        model.params["head.pool.w2"][0, 0] = np.inf
        model.params["head.pool.w2"][1, 0] = -np.inf
        with pytest.raises(NonFiniteOutputError):
            predict(model, [corpus[0][0]], "unit")


@pytest.mark.slow
class TestParityExperiment:
    """Test cases for training on the write-parity corpus and testing on reordered programs"""

    PERCENTS = (0.0, 25.0, 50.0, 75.0, 100.0)

    def setup_method(self):
        """Setup test environment"""
        self.temp_dir = tempfile.mkdtemp()
        build_corpus(self.temp_dir, "parity", 2500, seed=7)
        self.corpus = load_corpus(self.temp_dir)
        config = ModelConfig(residual=True, seed=7)
        self.model = train(self.corpus.train, config, "unit", TrainingConfig(epochs=5, seed=7)).model

    def teardown_method(self):
        """Cleanup test environment"""
        shutil.rmtree(self.temp_dir)

    def test_beats_majority_and_ignores_reordering(self):
        """Test held-out F1 above the majority baseline at every permutation percentage"""
        assert len(self.corpus.train) == 2000 and len(self.corpus.test) == 500

        wide = evaluate(self.model, self.corpus.test, "unit", self.PERCENTS, seed=7)
        for run in wide["runs"]:
            assert run["f1"] > run["majority_f1"]
        assert len({round(run["f1"], 4) for run in wide["runs"]}) == 1
        assert wide["predictions_identical"]
        assert wide["non_finite_outputs"] == 0

        narrow = evaluate(self.model.with_precision("narrow"), self.corpus.test, "unit", self.PERCENTS, seed=7)
        assert narrow["non_finite_outputs"] == 0
        assert narrow["f1_spread"] <= 0.01
