"""
Trainer Module for the Symmetry Toolkit

Seeded, single-threaded mini-batch training of the distance-biased attention
model on unit-level, token-level or pair-similarity tasks, plus the
prediction helpers used by evaluation.

Author: Symmetry Toolkit Team
Date: 2026-10-18
"""

import logging
from dataclasses import asdict, dataclass, fields, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from learning.autodiff import Tensor
from learning.ga_model import (
    GaModel,
    ModelConfig,
    UnitFeatures,
    Vocabulary,
    backward,
    encode,
    featurize,
    pair_cosine,
    pair_loss,
    pair_similarity,
    pool_head,
    token_head,
    token_loss,
    unit_loss,
)
from program.ir import CodeUnit

# Configure logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

TASKS = ("token", "unit", "pair")

Item = Union[CodeUnit, Tuple[CodeUnit, CodeUnit]]
Label = Union[int, Sequence[int]]


class EmptyCorpusError(ValueError):
    pass


class LabelError(ValueError):
    pass


class NonFiniteOutputError(ArithmeticError):
    """Raised when a forward pass yields NaN or infinite outputs."""


@dataclass(frozen=True)
class TrainingConfig:
    """
    Optimizer and schedule settings.

    Attributes:
        epochs: passes over the corpus
        batch_size: examples per Adam step
        learning_rate: Adam step size
        seed: shuffling seed
        pair_margin: margin of the negative-pair cosine loss
    """

    epochs: int = 10
    batch_size: int = 16
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    pair_margin: float = 0.0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size <= 0 or self.learning_rate <= 0:
            raise ValueError("epochs must be >= 0, batch_size and learning_rate positive")

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Dict[str, object]) -> "TrainingConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in values.items() if k in known})


class AdamOptimizer:
    """Adam over a dict of float64 parameter arrays, updated in place."""

    def __init__(self, params: Dict[str, np.ndarray], config: TrainingConfig):
        self.config = config
        self.step_count = 0
        self.first = {name: np.zeros_like(value) for name, value in params.items()}
        self.second = {name: np.zeros_like(value) for name, value in params.items()}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]):
        cfg = self.config
        self.step_count += 1
        correction1 = 1.0 - cfg.beta1 ** self.step_count
        correction2 = 1.0 - cfg.beta2 ** self.step_count
        for name, grad in grads.items():
            self.first[name] = cfg.beta1 * self.first[name] + (1.0 - cfg.beta1) * grad
            self.second[name] = cfg.beta2 * self.second[name] + (1.0 - cfg.beta2) * grad * grad
            update = (self.first[name] / correction1) / (np.sqrt(self.second[name] / correction2) + cfg.epsilon)
            params[name] = params[name] - cfg.learning_rate * update


@dataclass
class TrainingResult:
    model: GaModel
    trace: pd.DataFrame


def validate_corpus(corpus: Sequence[Tuple[Item, Label]], task: str, config: ModelConfig):
    """
    Check that every label fits the task and the head sizes.

    Raises:
        EmptyCorpusError: on an empty corpus
        LabelError: on a label of the wrong shape or out of range
    """
    if task not in TASKS:
        raise ValueError(f"task must be one of {TASKS}")
    if not corpus:
        raise EmptyCorpusError("cannot train on an empty corpus")
    for position, (item, label) in enumerate(corpus):
        if task == "token":
            labels = list(label)
            if len(labels) != item.num_tokens:
                raise LabelError(f"example {position}: {len(labels)} labels for {item.num_tokens} tokens")
            if any(not 0 <= int(v) < config.token_labels for v in labels):
                raise LabelError(f"example {position}: token label out of range [0, {config.token_labels})")
            if item.num_tokens == 0:
                raise LabelError(f"example {position}: empty unit has no tokens to label")
        elif task == "unit":
            if not 0 <= int(label) < config.unit_labels:
                raise LabelError(f"example {position}: label {label} out of range [0, {config.unit_labels})")
            if item.num_tokens == 0:
                raise LabelError(f"example {position}: empty unit cannot be pooled")
        else:
            if int(label) not in (0, 1):
                raise LabelError(f"example {position}: pair label must be 0 or 1, got {label}")
            if item[0].num_tokens == 0 or item[1].num_tokens == 0:
                raise LabelError(f"example {position}: empty unit cannot be pooled")


def featurize_item(item: Item, task: str):
    if task == "pair":
        return featurize(item[0]), featurize(item[1])
    return featurize(item)


def example_loss(model: GaModel, features, label: Label, task: str, margin: float = 0.0) -> Optional[Tensor]:
    """Forward pass and loss of one example; None when a pair projection vanishes."""
    if task == "token":
        return token_loss(token_head(encode(features, model), model), [int(v) for v in label])
    if task == "unit":
        return unit_loss(pool_head(encode(features, model), model), int(label))
    cosine = pair_cosine(encode(features[0], model), encode(features[1], model), model)
    if cosine is None:
        return None
    return pair_loss(cosine, int(label), margin)


def train(
    corpus: Sequence[Tuple[Item, Label]],
    cfg: ModelConfig,
    task: str,
    training: Optional[TrainingConfig] = None,
    vocabulary: Optional[Vocabulary] = None,
) -> TrainingResult:
    """
    Train a fresh model.

    Training always runs in wide precision; the returned model carries the
    precision requested in `cfg`. The same corpus, configs and seeds give a
    bitwise-identical model.

    Args:
        corpus: (item, label) pairs; items are units, or unit pairs for "pair"
        cfg: model hyperparameters
        task: "token", "unit" or "pair"
        training: optimizer settings
        vocabulary: token vocabulary; built from the corpus when omitted

    Returns:
        TrainingResult with the model and a per-step loss trace
    """
    training = training or TrainingConfig()
    validate_corpus(corpus, task, cfg)
    if vocabulary is None:
        units = [unit for item, _ in corpus for unit in (item if task == "pair" else (item,))]
        vocabulary = Vocabulary.build(units, cfg.vocab_size)

    model = GaModel.initialize(replace(cfg, precision="wide"), vocabulary)
    examples = [(featurize_item(item, task), label) for item, label in corpus]
    optimizer = AdamOptimizer(model.params, training)
    rng = np.random.default_rng(training.seed)

    logger.info(f"🚀 Training {task} model on {len(examples)} examples for {training.epochs} epochs")
    records = []
    for epoch in range(training.epochs):
        order = rng.permutation(len(examples))
        epoch_losses = []
        for start in range(0, len(order), training.batch_size):
            batch = order[start:start + training.batch_size]
            totals = {name: np.zeros_like(value) for name, value in model.params.items()}
            batch_loss = 0.0
            for index in batch:
                features, label = examples[int(index)]
                loss = example_loss(model, features, label, task, training.pair_margin)
                if loss is None:
                    continue
                batch_loss += float(loss.data)
                for name, grad in backward(loss, model).items():
                    totals[name] += grad
            for name in totals:
                totals[name] /= len(batch)
            optimizer.step(model.params, totals)
            mean_loss = batch_loss / len(batch)
            epoch_losses.append(mean_loss)
            records.append({"epoch": epoch, "step": optimizer.step_count, "loss": mean_loss})
        logger.info(f"Epoch {epoch + 1}/{training.epochs}: mean loss {np.mean(epoch_losses):.6f}")

    trace = pd.DataFrame(records, columns=["epoch", "step", "loss"])
    model = GaModel(cfg, model.params, vocabulary, model.frozen)
    logger.info(f"✅ Training finished after {optimizer.step_count} steps")
    return TrainingResult(model, trace)


def predict_features(model: GaModel, features, task: str):
    """
    Model output for one featurized item.

    Returns:
        token: (tokens x labels) logits; unit: label logits; pair: similarity

    Raises:
        NonFiniteOutputError: when the output holds NaN or infinite values
    """
    if task == "token":
        output = token_head(encode(features, model), model).data
    elif task == "unit":
        output = pool_head(encode(features, model), model).data
    else:
        output = pair_similarity(encode(features[0], model), encode(features[1], model), model).value
    if not np.all(np.isfinite(np.asarray(output, dtype=np.float64))):
        raise NonFiniteOutputError(f"non-finite {task} output in {model.config.precision} precision")
    return output


def predict(model: GaModel, items: Sequence[Item], task: str) -> List:
    """
    Argmax labels per token (token), argmax label (unit) or similarity (pair).

    Raises:
        NonFiniteOutputError: when any item's output is not finite
    """
    results = []
    for item in items:
        output = predict_features(model, featurize_item(item, task), task)
        if task == "pair":
            results.append(output)
        elif task == "token":
            results.append(np.argmax(output, axis=1))
        else:
            results.append(int(np.argmax(output)))
    return results
