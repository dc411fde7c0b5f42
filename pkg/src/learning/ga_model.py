"""
Distance-Biased Attention Model Module for the Symmetry Toolkit

This module implements the representation-learning stack: four summed
embedding tables (token, intra-instruction position, in-degree, out-degree),
the multi-head self-attention layer whose attention probabilities are biased
by the PDG distance matrix, and the prediction heads (per-token affine head,
mean-pooling head, cosine pair head) together with their losses.

Activations are row-stacked: one row per token, `d_model` columns.

Author: Symmetry Toolkit Team
Date: 2026-10-18
"""

import copy
import logging
from collections import Counter
from dataclasses import asdict, dataclass, fields, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from learning.autodiff import NoForwardError, Tensor, concat, cross_entropy
from program.ir import CodeUnit
from program.pdg import (
    NO_ANCESTOR,
    DegreeSequences,
    DistanceMatrix,
    Pdg,
    build_pdg,
    degree_sequences,
    distance_matrix,
    expand_to_tokens,
)

logger = logging.getLogger(__name__)

PRECISIONS = {"wide": np.float64, "narrow": np.float16}
POSITION_MODES = ("intra", "absolute", "none")

# Rows of (A + Bias) sum to 1 + sum of the row's biases; small tables keep
# that near 1 over a few dozen tokens.
BIAS_INIT_STD = 0.01
NARROW_ACCUMULATOR = np.float32

UNKNOWN_TOKEN = "<unk>"
RESERVED_TOKENS = (UNKNOWN_TOKEN, "=", "+", "-", "*", "<", "==", ":", "load", "store", "if", "goto", "halt")


@dataclass(frozen=True)
class ModelConfig:
    """
    Model hyperparameters.

    Attributes:
        d_model: embedding width
        heads: attention heads; even, the first half reads positive distances
        layers: stacked attention layers
        max_distance_bucket: distances above this share one bias bucket
        vocab_size: rows of the token table
        max_position: rows of the position table
        max_degree: rows of each degree table
        token_labels: classes of the token head
        unit_labels: classes of the pooling head
        hidden: width of the pooling head's hidden layer
        projection: output width of the pair head
        residual: wrap each layer in residual + layer normalization
        precision: "wide" (float64) or "narrow" (float16) inference
        seed: parameter initialization seed
    """

    d_model: int = 32
    heads: int = 4
    layers: int = 2
    max_distance_bucket: int = 16
    vocab_size: int = 128
    max_position: int = 64
    max_degree: int = 32
    token_labels: int = 2
    unit_labels: int = 2
    hidden: int = 32
    projection: int = 16
    residual: bool = False
    precision: str = "wide"
    seed: int = 0

    def __post_init__(self):
        if self.heads <= 0 or self.heads % 2:
            raise ValueError(f"heads must be a positive even number, got {self.heads}")
        if self.d_model <= 0 or self.d_model % self.heads:
            raise ValueError(f"d_model ({self.d_model}) must be a positive multiple of heads ({self.heads})")
        for name in ("layers", "max_distance_bucket", "max_position", "max_degree",
                     "token_labels", "unit_labels", "hidden", "projection"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.vocab_size < len(RESERVED_TOKENS):
            raise ValueError(f"vocab_size must be at least {len(RESERVED_TOKENS)}")
        if self.precision not in PRECISIONS:
            raise ValueError(f"precision must be one of {sorted(PRECISIONS)}")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.heads

    @property
    def dtype(self):
        return PRECISIONS[self.precision]

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Dict[str, object]) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**values)


class Vocabulary:
    """Token text to table row; unseen tokens map to row 0."""

    def __init__(self, tokens: Sequence[str]):
        tokens = tuple(tokens)
        if tokens[:len(RESERVED_TOKENS)] != RESERVED_TOKENS:
            raise ValueError("vocabulary must start with the reserved tokens")
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary tokens must be unique")
        self.tokens = tokens
        self._index = {token: i for i, token in enumerate(tokens)}

    @classmethod
    def build(cls, units: Iterable[CodeUnit], capacity: int) -> "Vocabulary":
        """Reserved tokens first, then corpus tokens by descending count."""
        counts = Counter(token for unit in units for token in unit.tokens)
        extra = sorted((t for t in counts if t not in RESERVED_TOKENS), key=lambda t: (-counts[t], t))
        return cls((list(RESERVED_TOKENS) + extra)[:capacity])

    @classmethod
    def default(cls, capacity: int) -> "Vocabulary":
        letters = [chr(c) for c in range(ord("a"), ord("z") + 1)]
        digits = [str(d) for d in range(10)]
        labels = [f"L{i}" for i in range(10)]
        return cls((list(RESERVED_TOKENS) + letters + digits + labels)[:capacity])

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self._index.get(token, 0) for token in tokens], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens


def parameter_shapes(config: ModelConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    d, h, dh = config.d_model, config.heads, config.head_dim
    buckets = config.max_distance_bucket + 2
    shapes = [
        ("emb.token", (config.vocab_size, d)),
        ("emb.pos", (config.max_position, d)),
        ("emb.in_degree", (config.max_degree, d)),
        ("emb.out_degree", (config.max_degree, d)),
    ]
    for layer in range(config.layers):
        prefix = f"layer{layer}."
        shapes += [
            (prefix + "w_q", (h, d, dh)),
            (prefix + "w_k", (h, d, dh)),
            (prefix + "w_v", (h, d, dh)),
            (prefix + "w_o", (d, d)),
            (prefix + "b_o", (d,)),
            (prefix + "bias_p", (h // 2, buckets)),
            (prefix + "bias_n", (h // 2, buckets)),
        ]
        if config.residual:
            shapes += [(prefix + "ln_gain", (d,)), (prefix + "ln_shift", (d,))]
    shapes += [
        ("head.token.w", (d, config.token_labels)),
        ("head.token.b", (config.token_labels,)),
        ("head.pool.w1", (d, config.hidden)),
        ("head.pool.b1", (config.hidden,)),
        ("head.pool.w2", (config.hidden, config.unit_labels)),
        ("head.pool.b2", (config.unit_labels,)),
        ("head.pair.w", (d, config.projection)),
    ]
    return shapes


class GaModel:
    """
    Parameters of the distance-biased attention stack and its heads.

    Parameters are kept as float64 arrays; forward passes read them through
    `tensor`, which casts to the configured precision and creates a fresh
    autodiff leaf.

    Attributes:
        config: model hyperparameters
        params: parameter name -> array
        vocabulary: token vocabulary
        frozen: names of parameters excluded from gradients
    """

    def __init__(self, config: ModelConfig, params: Dict[str, np.ndarray], vocabulary: Vocabulary,
                 frozen: Iterable[str] = ()):
        expected = dict(parameter_shapes(config))
        if set(params) != set(expected):
            raise ValueError(f"parameter names do not match config: {sorted(set(params) ^ set(expected))}")
        for name, shape in expected.items():
            if tuple(params[name].shape) != shape:
                raise ValueError(f"parameter {name} has shape {params[name].shape}, expected {shape}")
        if len(vocabulary) > config.vocab_size:
            raise ValueError("vocabulary is larger than the token table")
        self.config = config
        self.params = {name: np.asarray(params[name], dtype=np.float64) for name, _ in parameter_shapes(config)}
        self.vocabulary = vocabulary
        self.frozen = set(frozen)

    @classmethod
    def initialize(cls, config: ModelConfig, vocabulary: Optional[Vocabulary] = None) -> "GaModel":
        """
        Seeded random initialization.

        Args:
            config: model hyperparameters (config.seed drives the RNG)
            vocabulary: token vocabulary; a default one when omitted
        """
        rng = np.random.default_rng(config.seed)
        params = {}
        for name, shape in parameter_shapes(config):
            if name.endswith(("b_o", ".b", "b1", "b2", "ln_shift")):
                params[name] = np.zeros(shape)
            elif name.endswith("ln_gain"):
                params[name] = np.ones(shape)
            elif name.startswith("emb."):
                params[name] = rng.normal(0.0, 0.5, shape)
            elif name.endswith(("bias_p", "bias_n")):
                params[name] = rng.normal(0.0, BIAS_INIT_STD, shape)
            else:
                params[name] = rng.normal(0.0, 1.0 / np.sqrt(shape[-2]), shape)
        vocabulary = vocabulary or Vocabulary.default(config.vocab_size)
        logger.debug(f"Initialized model with {sum(p.size for p in params.values())} parameters")
        return cls(config, params, vocabulary)

    @property
    def dtype(self):
        return self.config.dtype

    @property
    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def tensor(self, name: str) -> Tensor:
        value = self.params[name].astype(self.dtype, copy=False)
        return Tensor(value, requires_grad=name not in self.frozen, name=name)

    def copy(self) -> "GaModel":
        return GaModel(self.config, copy.deepcopy(self.params), self.vocabulary, self.frozen)

    def with_precision(self, precision: str) -> "GaModel":
        return GaModel(replace(self.config, precision=precision), self.params, self.vocabulary, self.frozen)

    def zero_bias(self) -> "GaModel":
        """Copy with every distance-bias table set to zero."""
        clone = self.copy()
        for name in clone.params:
            if name.endswith(("bias_p", "bias_n")):
                clone.params[name] = np.zeros_like(clone.params[name])
        return clone

    def freeze(self, *names: str) -> "GaModel":
        unknown = set(names) - set(self.params)
        if unknown:
            raise KeyError(f"unknown parameters: {sorted(unknown)}")
        self.frozen |= set(names)
        return self


@dataclass(frozen=True, eq=False)
class UnitFeatures:
    """Everything the model reads about one code unit."""

    unit: CodeUnit
    graph: Pdg
    degrees: DegreeSequences
    distances: DistanceMatrix
    token_distances: DistanceMatrix


def featurize(unit: CodeUnit) -> UnitFeatures:
    graph = build_pdg(unit)
    distances = distance_matrix(graph)
    return UnitFeatures(unit, graph, degree_sequences(unit, graph), distances, expand_to_tokens(distances, unit))


@dataclass(eq=False)
class Activation:
    """Token-major activations; the tensor keeps the graph for backward."""

    values: Tensor

    @property
    def array(self) -> np.ndarray:
        return self.values.data

    def __len__(self) -> int:
        return self.values.shape[0]


def embed(unit: CodeUnit, degrees: DegreeSequences, model: GaModel,
          position_mode: str = "intra", use_degrees: bool = True) -> Activation:
    """
    Sum the token, position, in-degree and out-degree embeddings per token.

    Args:
        unit: code unit
        degrees: its degree sequences
        model: parameters
        position_mode: "intra" (position within the instruction), "absolute"
            (token index in the unit, not symmetry-preserving) or "none"
        use_degrees: include the two degree tables

    Returns:
        Activation of shape (tokens, d_model); out-of-range values clamp to
        the last table row
    """
    if position_mode not in POSITION_MODES:
        raise ValueError(f"position_mode must be one of {POSITION_MODES}")
    if len(degrees) != unit.num_tokens:
        raise ValueError("degree sequences do not match the unit's token count")
    cfg = model.config
    values = model.tensor("emb.token")[model.vocabulary.encode(degrees.x_c)]
    if position_mode != "none":
        if position_mode == "intra":
            positions = np.asarray(degrees.x_pos, dtype=np.int64)
        else:
            positions = np.arange(unit.num_tokens, dtype=np.int64)
        values = values + model.tensor("emb.pos")[np.minimum(positions, cfg.max_position - 1)]
    if use_degrees:
        top = cfg.max_degree - 1
        values = values + model.tensor("emb.in_degree")[np.minimum(np.asarray(degrees.x_ind, dtype=np.int64), top)]
        values = values + model.tensor("emb.out_degree")[np.minimum(np.asarray(degrees.x_outd, dtype=np.int64), top)]
    return Activation(values)


def bias_buckets(values: np.ndarray, max_bucket: int) -> np.ndarray:
    """Clamp distances to [0, max_bucket]; NO_ANCESTOR gets bucket max_bucket + 1."""
    return np.where(values == NO_ANCESTOR, max_bucket + 1, np.minimum(values, max_bucket))


def layer_norm(x: Tensor, gain: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    mean = x.mean(axis=1, keepdims=True)
    centred = x - mean
    variance = (centred * centred).mean(axis=1, keepdims=True)
    return centred / (variance + eps).sqrt() * gain + shift


def _widen(x: Tensor) -> Tensor:
    """float16 values are accumulated in float32; wider dtypes pass through."""
    return x.astype(NARROW_ACCUMULATOR) if x.dtype == np.float16 else x


def ga_forward(e: Activation, token_distances: DistanceMatrix, model: GaModel, layer: int) -> Activation:
    """
    One distance-biased multi-head attention layer.

    Per head: scores = Q Kᵀ / √d_head, A = softmax over keys, and the bias
    looked up from the distance matrix is added to A after the softmax
    without renormalizing rows. Heads in the first half read the positive
    distances, the second half the negative ones. In narrow precision the
    scores, the softmax and the layer normalization run in float32 and are
    cast back to float16.

    Args:
        e: input activation (tokens x d_model)
        token_distances: token-level distance matrix of the same unit
        model: parameters
        layer: layer index

    Returns:
        output activation (tokens x d_model)
    """
    x = e.values
    tokens = x.shape[0]
    if token_distances.n != tokens:
        raise ValueError(f"distance matrix is {token_distances.n}x{token_distances.n} for {tokens} tokens")
    if tokens == 0:
        return e
    cfg = model.config
    prefix = f"layer{layer}."
    w_q, w_k, w_v = model.tensor(prefix + "w_q"), model.tensor(prefix + "w_k"), model.tensor(prefix + "w_v")
    bias_p, bias_n = model.tensor(prefix + "bias_p"), model.tensor(prefix + "bias_n")
    positive = bias_buckets(token_distances.positive, cfg.max_distance_bucket)
    negative = bias_buckets(token_distances.negative, cfg.max_distance_bucket)
    half = cfg.heads // 2
    scale = 1.0 / np.sqrt(cfg.head_dim)

    outputs = []
    for head in range(cfg.heads):
        q, k, v = x @ w_q[head], x @ w_k[head], x @ w_v[head]
        attention = ((_widen(q) @ _widen(k).T) * scale).softmax(axis=-1).astype(x.dtype)
        if head < half:
            bias = bias_p[(np.full(positive.shape, head), positive)]
        else:
            bias = bias_n[(np.full(negative.shape, head - half), negative)]
        outputs.append((attention + bias) @ v)

    y = concat(outputs, axis=1) @ model.tensor(prefix + "w_o") + model.tensor(prefix + "b_o")
    if cfg.residual:
        gain, shift = _widen(model.tensor(prefix + "ln_gain")), _widen(model.tensor(prefix + "ln_shift"))
        y = layer_norm(_widen(x + y), gain, shift).astype(x.dtype)
    return Activation(y)


def encode_layers(features: UnitFeatures, model: GaModel, position_mode: str = "intra",
                  use_degrees: bool = True) -> List[Activation]:
    """Embedding followed by every attention layer; returns all l+1 activations."""
    activations = [embed(features.unit, features.degrees, model, position_mode, use_degrees)]
    for layer in range(model.config.layers):
        activations.append(ga_forward(activations[-1], features.token_distances, model, layer))
    return activations


def encode(features: UnitFeatures, model: GaModel, position_mode: str = "intra",
           use_degrees: bool = True) -> Activation:
    return encode_layers(features, model, position_mode, use_degrees)[-1]


def token_head(e: Activation, model: GaModel) -> Tensor:
    """
    Per-token label logits.

    Each row is computed by an elementwise product and a reduction over the
    feature axis, so a token's logits do not depend on its row position.
    """
    x = e.values
    weight = model.tensor("head.token.w")
    tokens, width = x.shape
    labels = weight.shape[1]
    return (x.reshape(tokens, width, 1) * weight.reshape(1, width, labels)).sum(axis=1) + model.tensor("head.token.b")


def canonical_mean(x: Tensor) -> Tensor:
    """Mean over rows summed in lexicographic row order (1 x d)."""
    order = np.lexsort(x.data.T[::-1])
    return x[order].sum(axis=0, keepdims=True) * (1.0 / x.shape[0])


def pool_head(e: Activation, model: GaModel) -> Tensor:
    """Unit-level logits: canonical mean pooling, then a tanh feed-forward layer."""
    if len(e) == 0:
        raise ValueError("pooling needs at least one token")
    pooled = canonical_mean(e.values)
    hidden = (pooled @ model.tensor("head.pool.w1") + model.tensor("head.pool.b1")).tanh()
    return (hidden @ model.tensor("head.pool.w2") + model.tensor("head.pool.b2")).reshape(-1)


@dataclass(frozen=True)
class PairSimilarity:
    value: float
    zero_norm: bool = False


def pair_cosine(e1: Activation, e2: Activation, model: GaModel) -> Optional[Tensor]:
    """Cosine of the projected pooled embeddings; None when a projection is zero."""
    if len(e1) == 0 or len(e2) == 0:
        raise ValueError("pair similarity needs two non-empty activations")
    weight = model.tensor("head.pair.w")
    first = canonical_mean(e1.values) @ weight
    second = canonical_mean(e2.values) @ weight
    if not np.any(first.data) or not np.any(second.data):
        return None
    norms = (first * first).sum().sqrt() * (second * second).sum().sqrt()
    return (first * second).sum() / norms


def pair_similarity(e1: Activation, e2: Activation, model: GaModel) -> PairSimilarity:
    cosine = pair_cosine(e1, e2, model)
    if cosine is None:
        logger.warning("⚠️  zero-norm projection in pair similarity; reporting 0")
        return PairSimilarity(0.0, zero_norm=True)
    return PairSimilarity(float(np.clip(cosine.data, -1.0, 1.0)))


def token_loss(logits: Tensor, labels: Sequence[int]) -> Tensor:
    return cross_entropy(logits, labels)


def unit_loss(logits: Tensor, label: int) -> Tensor:
    return cross_entropy(logits.reshape(1, -1), [label])


def pair_loss(cosine: Tensor, label: int, margin: float = 0.0) -> Tensor:
    """Cosine-embedding loss: 1 - cos for positives, max(0, cos - margin) for negatives."""
    if label == 1:
        return 1.0 - cosine
    return (cosine - margin).relu()


def backward(loss: Tensor, model: GaModel) -> Dict[str, np.ndarray]:
    """
    Reverse-mode gradients of a scalar loss for every model parameter.

    Parameters the loss never touched (or frozen ones) get zero gradients;
    a parameter read by several forward passes sums their contributions.

    Raises:
        NoForwardError: when the loss carries no recorded forward pass
    """
    if not isinstance(loss, Tensor):
        raise NoForwardError("backward needs the Tensor produced by a forward pass")
    loss.backward()
    grads = {name: np.zeros_like(value) for name, value in model.params.items()}
    for leaf in loss.leaves():
        if leaf.name in grads and leaf.grad is not None:
            grads[leaf.name] += leaf.grad.astype(np.float64)
    return grads
