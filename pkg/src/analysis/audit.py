"""
Audit Module for the Symmetry Toolkit

Executable checks of the symmetry properties the model relies on:

    equivariance  embedding, per-layer, stack and head behaviour under
                  automorphisms and legal reorderings; the all-permutation
                  property of unbiased attention; optional negative control
    distance      automorphism invariance and permutation-matrix commutation
                  of the distance matrix, PDG rebuild consistency, group axioms
    semantics     io-equivalence of every sampled reordering and automorphism
    gradients     finite-difference check of every parameter tensor, frozen
                  parameters, unused bias buckets and a loss-invariant direction

Failures are recorded in reports, never raised. Report JSON is byte-stable
for equal configs and seeds: wall times stay on the report objects only.

Tolerances: exact for integers, lookups and token heads; `wide_tolerance`
for float64 equivariance; `narrow_tolerance` for float16 and
`gradient_tolerance` for finite differences.

Author: Symmetry Toolkit Team
Date: 2026-10-18
"""

import json
import logging
import time
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from data_manipulation.program_generator import GeneratorConfig, ProgramGenerator
from learning.autodiff import Tensor
from learning.ga_model import (
    Activation,
    GaModel,
    ModelConfig,
    backward,
    bias_buckets,
    embed,
    encode,
    encode_layers,
    featurize,
    ga_forward,
    pair_cosine,
    pair_loss,
    pool_head,
    token_head,
    token_loss,
    unit_loss,
)
from program.ir import CodeUnit, Verdict, io_equivalent
from program.pdg import build_pdg, distance_matrix, expand_to_tokens
from program.symmetry import (
    DEFAULT_ENUMERATION_CAP,
    DEFAULT_MAX_ELEMENTS,
    AutomorphismGroup,
    BlockPermutation,
    EnumerationCapError,
    GroupAxiomError,
    apply,
    automorphisms,
    is_linear_extension,
    permutation_matrix,
    reordering_relationship,
    sample_reordering,
)

# Configure logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

SUITES = ("equivariance", "distance", "semantics", "gradients")


def _gradient_model_default() -> ModelConfig:
    return ModelConfig(d_model=16, heads=2, layers=2, max_distance_bucket=4, vocab_size=24,
                       max_position=8, max_degree=8, hidden=8, projection=4)


@dataclass(frozen=True)
class AuditConfig:
    """
    Audit settings; recorded in every report.

    Attributes:
        programs: random programs per suite
        trials: random input stores per io-equivalence check
        seed: seed of the program corpus and every sampler
        enumeration_cap: largest instruction count for Aut(PDG) enumeration
        max_group_order: largest automorphism group materialized; larger
            groups fall back to sampled reorderings and are counted
        max_elements_per_program: automorphisms checked per program; None
            checks every enumerated element, a number draws a seeded sample
        sampled_reorderings: legal reorderings drawn per program, checked
            next to the automorphisms
        random_permutations: uniformly random token permutations per program
            for the unbiased-attention check
        gradient_coordinates: coordinates checked per parameter tensor; None
            checks every coordinate
        negative_control: use absolute token indices as positions
        model: model checked by the equivariance suite
        gradient_model: model checked by the gradient suite
        generator: random program shape
    """

    programs: int = 200
    trials: int = 50
    seed: int = 0
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP
    max_group_order: int = DEFAULT_MAX_ELEMENTS
    max_elements_per_program: Optional[int] = None
    sampled_reorderings: int = 20
    random_permutations: int = 50
    semantics_percents: Tuple[float, ...] = (25.0, 50.0, 100.0)
    wide_tolerance: float = 1e-9
    narrow_tolerance: float = 1e-4
    gradient_tolerance: float = 1e-4
    finite_difference_step: float = 1e-5
    gradient_coordinates: Optional[int] = None
    negative_control: bool = False
    negative_control_threshold: float = 1e-3
    negative_control_fraction: float = 0.95
    model: ModelConfig = field(default_factory=ModelConfig)
    gradient_model: ModelConfig = field(default_factory=_gradient_model_default)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)

    def to_dict(self) -> Dict[str, object]:
        values = asdict(self)
        values["semantics_percents"] = list(self.semantics_percents)
        return values

    @classmethod
    def from_dict(cls, values: Dict[str, object]) -> "AuditConfig":
        values = dict(values)
        if "model" in values:
            values["model"] = ModelConfig.from_dict(values["model"])
        if "gradient_model" in values:
            values["gradient_model"] = ModelConfig.from_dict(values["gradient_model"])
        if "generator" in values:
            values["generator"] = GeneratorConfig.from_dict(values["generator"])
        if "semantics_percents" in values:
            values["semantics_percents"] = tuple(float(p) for p in values["semantics_percents"])
        return cls(**values)

    @property
    def float_tolerance(self) -> float:
        return self.narrow_tolerance if self.model.precision == "narrow" else self.wide_tolerance


@dataclass(frozen=True)
class PropertyResult:
    """Outcome of one audited property; passed iff max deviation <= tolerance."""

    name: str
    instances: int
    max_abs_deviation: float
    max_rel_deviation: float
    tolerance: float
    passed: bool
    details: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


class DeviationTracker:
    """Running maximum of absolute and relative deviations for one property."""

    def __init__(self, name: str, tolerance: float):
        self.name = name
        self.tolerance = tolerance
        self.instances = 0
        self.max_abs = 0.0
        self.max_rel = 0.0
        self.details: Dict[str, object] = {}

    def add(self, actual: np.ndarray, expected: np.ndarray) -> float:
        actual = np.asarray(actual, dtype=np.float64)
        expected = np.asarray(expected, dtype=np.float64)
        self.instances += 1
        if actual.shape != expected.shape:
            self.max_abs = self.max_rel = float("inf")
            return float("inf")
        if actual.size == 0:
            return 0.0
        deviation = float(np.max(np.abs(actual - expected)))
        scale = max(float(np.max(np.abs(expected))), 1e-12)
        self.max_abs = max(self.max_abs, deviation)
        self.max_rel = max(self.max_rel, deviation / scale)
        return deviation

    def add_count(self, violations: int):
        self.instances += 1
        self.max_abs = max(self.max_abs, float(violations))
        self.max_rel = max(self.max_rel, float(violations))

    def result(self, passed: Optional[bool] = None) -> PropertyResult:
        if passed is None:
            passed = self.max_abs <= self.tolerance
        max_abs = self.max_abs if np.isfinite(self.max_abs) else -1.0
        max_rel = self.max_rel if np.isfinite(self.max_rel) else -1.0
        return PropertyResult(self.name, self.instances, max_abs, max_rel, self.tolerance, bool(passed),
                              dict(self.details))


class AuditReport:
    """
    Append-only list of property results for one suite.

    Attributes:
        suite: suite name
        seed: audit seed
        config: resolved audit config
        wall_time: seconds spent (not serialized)
    """

    def __init__(self, suite: str, seed: int, config: Dict[str, object]):
        self.suite = suite
        self.seed = seed
        self.config = config
        self.wall_time = 0.0
        self._properties: List[PropertyResult] = []

    def record(self, result: PropertyResult) -> PropertyResult:
        self._properties.append(result)
        status = "✅" if result.passed else "❌"
        logger.info(f"{status} {self.suite}/{result.name}: {result.instances} instances, "
                    f"max deviation {result.max_abs_deviation:.3e} (tolerance {result.tolerance:g})")
        return result

    @property
    def properties(self) -> Tuple[PropertyResult, ...]:
        return tuple(self._properties)

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self._properties)

    @property
    def failed_properties(self) -> List[str]:
        return [p.name for p in self._properties if not p.passed]

    def property(self, name: str) -> PropertyResult:
        for result in self._properties:
            if result.name == name:
                return result
        raise KeyError(name)

    def to_dict(self) -> Dict[str, object]:
        return {
            "suite": self.suite,
            "seed": self.seed,
            "passed": self.passed,
            "properties": [p.to_dict() for p in self._properties],
        }


class AuditRun:
    """Reports of one invocation, in execution order."""

    def __init__(self, config: AuditConfig):
        self.config = config
        self._reports: List[AuditReport] = []

    def add(self, report: AuditReport) -> AuditReport:
        self._reports.append(report)
        return report

    @property
    def reports(self) -> Tuple[AuditReport, ...]:
        return tuple(self._reports)

    @property
    def passed(self) -> bool:
        return all(report.passed for report in self._reports)

    @property
    def failed_properties(self) -> List[str]:
        return [f"{r.suite}/{name}" for r in self._reports for name in r.failed_properties]

    def to_dict(self) -> Dict[str, object]:
        return {
            "config": self.config.to_dict(),
            "seed": self.config.seed,
            "passed": self.passed,
            "failed": self.failed_properties,
            "reports": [report.to_dict() for report in self._reports],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def audit_programs(cfg: AuditConfig, programs: Optional[int] = None, seed: Optional[int] = None) -> List[CodeUnit]:
    count = cfg.programs if programs is None else programs
    return ProgramGenerator(cfg.generator).generate_many(count, cfg.seed if seed is None else seed)


def automorphism_checks(
    unit: CodeUnit, cfg: AuditConfig, rng: np.random.Generator
) -> Tuple[List[BlockPermutation], Optional[AutomorphismGroup], str]:
    """
    Automorphisms of one program to audit.

    Returns:
        (elements, group, coverage) where coverage is "complete" (every
        element), "subsampled" (a seeded sample of max_elements_per_program),
        "above_cap" (too many instructions) or "group_too_large" (more than
        max_group_order elements); group is None in the last two cases
    """
    if unit.n > cfg.enumeration_cap:
        return [], None, "above_cap"
    try:
        group = automorphisms(build_pdg(unit), cfg.enumeration_cap, cfg.max_group_order)
    except EnumerationCapError as e:
        logger.debug(f"Falling back to sampled reorderings: {e}")
        return [], None, "group_too_large"
    elements = list(group.elements)
    limit = cfg.max_elements_per_program
    if limit is not None and len(elements) > limit:
        picked = rng.choice(len(elements), size=limit, replace=False)
        return [elements[int(i)] for i in sorted(picked)], group, "subsampled"
    return elements, group, "complete"


def _sampled_reorderings(unit: CodeUnit, count: int, seed: int) -> List[BlockPermutation]:
    graph = build_pdg(unit)
    distinct: Dict[Tuple[int, ...], BlockPermutation] = {}
    for k in range(count):
        pi = sample_reordering(graph, 100.0, seed + k)
        distinct.setdefault(pi.mapping, pi)
    return list(distinct.values())


def _timed(report: AuditReport, start: float) -> AuditReport:
    report.wall_time = time.perf_counter() - start
    logger.info(f"Audit {report.suite} finished in {report.wall_time:.2f}s")
    return report


def audit_equivariance(cfg: AuditConfig, programs: Optional[int] = None, seed: Optional[int] = None) -> AuditReport:
    """
    Check embedding, layer, stack and head equivariance on random programs.

    Every checked permutation is applied to the program text and the features
    of the rewritten program are rebuilt from scratch. Each program is checked
    against its enumerated automorphisms (when within the caps) and against
    sampled legal reorderings; the stack property's details count both and
    the coverage of every program.

    Args:
        cfg: audit settings
        programs: program count override
        seed: seed override

    Returns:
        AuditReport; in negative-control mode the stack property is expected
        to fail and the broken-program fraction is recorded
    """
    start = time.perf_counter()
    seed = cfg.seed if seed is None else seed
    report = AuditReport("equivariance", seed, cfg.to_dict())
    position_mode = "absolute" if cfg.negative_control else "intra"
    tolerance = cfg.float_tolerance
    model = GaModel.initialize(replace(cfg.model, seed=seed))
    unbiased = model.zero_bias()
    rng = np.random.default_rng(seed)

    embedding = DeviationTracker("embedding_equivariance", 0.0)
    layers = DeviationTracker("layer_equivariance", tolerance)
    stack = DeviationTracker("stack_equivariance", tolerance)
    token_heads = DeviationTracker("token_head_equivariance", 0.0)
    pooling = DeviationTracker("pool_head_invariance", tolerance)
    pairs = DeviationTracker("pair_similarity_invariance", tolerance)
    all_permutations = DeviationTracker("unbiased_all_permutation_equivariance", tolerance)
    nontrivial_programs = 0
    broken_programs = 0
    group_orders = []
    coverage: Counter = Counter()
    checked = {"automorphisms_checked": 0, "reorderings_checked": 0}

    for k, unit in enumerate(audit_programs(cfg, programs, seed)):
        features = featurize(unit)
        checks, group, status = automorphism_checks(unit, cfg, rng)
        coverage[status] += 1
        if group is not None:
            group_orders.append(group.order)
        known = {sigma.mapping for sigma in checks}
        extra = [pi for pi in _sampled_reorderings(unit, cfg.sampled_reorderings, seed + 1000 * k)
                 if pi.mapping not in known]
        checked["automorphisms_checked"] += len(checks)
        checked["reorderings_checked"] += len(extra)
        checks = checks + extra

        activations = encode_layers(features, model, position_mode)
        token_logits = token_head(activations[-1], model).data if unit.num_tokens else None
        pooled = pool_head(activations[-1], model).data if unit.num_tokens else None

        program_deviation = 0.0
        nontrivial = False
        for sigma in checks:
            moved = sigma.with_blocks(unit.block_sizes)
            if not moved.is_identity:
                nontrivial = True
            permuted = featurize(apply(sigma, unit))
            moved_acts = encode_layers(permuted, model, position_mode)

            embedding.add(moved_acts[0].array, moved.act_on_rows(activations[0].array))
            for layer in range(model.config.layers):
                expected = moved.act_on_rows(activations[layer + 1].array)
                source = Activation(Tensor(moved.act_on_rows(activations[layer].array)))
                layers.add(ga_forward(source, permuted.token_distances, model, layer).array, expected)
                deviation = stack.add(moved_acts[layer + 1].array, expected)
                program_deviation = max(program_deviation, deviation)
            if unit.num_tokens:
                token_heads.add(token_head(Activation(Tensor(moved.act_on_rows(activations[-1].array))), model).data,
                                moved.act_on_rows(token_logits))
                pooling.add(pool_head(moved_acts[-1], model).data, pooled)
                similarity = pair_cosine(activations[-1], moved_acts[-1], model)
                if similarity is not None:
                    pairs.add(np.asarray([similarity.data]), np.asarray([1.0]))

        if nontrivial:
            nontrivial_programs += 1
            if program_deviation > cfg.negative_control_threshold:
                broken_programs += 1

        if unit.num_tokens > 1 and not cfg.negative_control:
            base = embed(unit, features.degrees, unbiased, position_mode="none", use_degrees=False)
            reference = ga_forward(base, features.token_distances, unbiased, 0).array
            for _ in range(cfg.random_permutations):
                rho = rng.permutation(unit.num_tokens)
                moved_rows = np.empty_like(base.array)
                moved_rows[rho] = base.array
                expected = np.empty_like(reference)
                expected[rho] = reference
                actual = ga_forward(Activation(Tensor(moved_rows)), features.token_distances, unbiased, 0).array
                all_permutations.add(actual, expected)

    stack.details = {**checked, "programs": dict(sorted(coverage.items()))}
    for tracker in (embedding, layers, stack, token_heads, pooling, pairs):
        report.record(tracker.result())
    if not cfg.negative_control:
        report.record(all_permutations.result())
    else:
        fraction = broken_programs / nontrivial_programs if nontrivial_programs else 0.0
        control = DeviationTracker("negative_control_breaks_equivariance", cfg.negative_control_threshold)
        control.instances = nontrivial_programs
        control.details = {"broken_programs": broken_programs, "nontrivial_programs": nontrivial_programs,
                           "broken_fraction": fraction}
        report.record(control.result(passed=fraction >= cfg.negative_control_fraction))
    if group_orders:
        report.record(PropertyResult("automorphism_groups", len(group_orders), 0.0, 0.0, 0.0, True,
                                     {"max_order": int(max(group_orders)),
                                      "nontrivial": int(sum(o > 1 for o in group_orders))}))
    return _timed(report, start)


def audit_distance_invariance(cfg: AuditConfig, programs: Optional[int] = None,
                              seed: Optional[int] = None) -> AuditReport:
    """
    Exact integer checks of the distance matrix.

    For every enumerated automorphism: D permuted by σ equals D, and the
    permutation matrix commutes with both distance matrices (instruction and
    token level). For sampled reorderings: the rebuilt PDG and distance
    matrix equal the relabelled originals. Also checks the swap symmetry of
    entries and the group axioms.
    """
    start = time.perf_counter()
    seed = cfg.seed if seed is None else seed
    report = AuditReport("distance", seed, cfg.to_dict())
    invariance = DeviationTracker("distance_invariance", 0.0)
    commutation = DeviationTracker("distance_commutation", 0.0)
    token_commutation = DeviationTracker("token_distance_commutation", 0.0)
    swap = DeviationTracker("distance_swap_symmetry", 0.0)
    rebuild = DeviationTracker("pdg_rebuild_consistency", 0.0)
    axioms = DeviationTracker("group_axioms", 0.0)
    skipped: Counter = Counter()

    for k, unit in enumerate(audit_programs(cfg, programs, seed)):
        graph = build_pdg(unit)
        distances = distance_matrix(graph)
        swap.add_count(int(not np.array_equal(distances.positive.T, distances.negative)))

        for pi in _sampled_reorderings(unit, 4, seed + 1000 * k):
            rewritten = build_pdg(apply(pi, unit))
            violations = int(rewritten != graph.relabel(pi.mapping))
            violations += int(not distance_matrix(rewritten).equals(distances.permuted(pi.mapping)))
            rebuild.add_count(violations)

        if unit.n > cfg.enumeration_cap:
            skipped["above_cap"] += 1
            continue
        try:
            group = automorphisms(graph, cfg.enumeration_cap, cfg.max_group_order)
            group.verify_axioms(seed)
            axioms.add_count(0)
        except EnumerationCapError:
            skipped["group_too_large"] += 1
            continue
        except GroupAxiomError as e:
            logger.error(f"❌ group axioms failed on program {k}: {e}")
            axioms.add_count(1)
            continue

        token_distances = expand_to_tokens(distances, unit)
        for sigma in group.elements:
            invariance.add_count(int(not distances.permuted(sigma.mapping).equals(distances)))
            p = permutation_matrix(sigma)
            commutation.add_count(int(not (np.array_equal(p @ distances.positive, distances.positive @ p)
                                           and np.array_equal(p @ distances.negative, distances.negative @ p))))
            p_tok = permutation_matrix(sigma.with_blocks(unit.block_sizes))
            token_commutation.add_count(int(not (
                np.array_equal(p_tok @ token_distances.positive, token_distances.positive @ p_tok)
                and np.array_equal(p_tok @ token_distances.negative, token_distances.negative @ p_tok))))

    invariance.details = {"skipped": {"above_cap": skipped["above_cap"],
                                      "group_too_large": skipped["group_too_large"]}}
    for tracker in (invariance, commutation, token_commutation, swap, rebuild, axioms):
        report.record(tracker.result())
    return _timed(report, start)


def audit_semantics(cfg: AuditConfig, programs: Optional[int] = None, trials: Optional[int] = None,
                    seed: Optional[int] = None) -> AuditReport:
    """
    Interpreter oracle for every sampled reordering and enumerated automorphism.

    Programs whose group exceeds max_group_order are checked against sampled
    legal reorderings instead; the coverage of every program is recorded.
    Inconclusive runs (fuel exhaustion) are counted apart from violations.
    """
    start = time.perf_counter()
    seed = cfg.seed if seed is None else seed
    trials = cfg.trials if trials is None else trials
    report = AuditReport("semantics", seed, cfg.to_dict())
    sampler = DeviationTracker("sampler_semantics", 0.0)
    automorphic = DeviationTracker("automorphism_semantics", 0.0)
    legality = DeviationTracker("sampler_linear_extension", 0.0)
    inconclusive = 0
    coverage: Counter = Counter()
    rng = np.random.default_rng(seed)
    relationship = {"automorphisms": 0, "automorphisms_order_compatible": 0, "samples": 0,
                    "samples_distinct": 0, "samples_automorphisms": 0}

    def check(tracker: DeviationTracker, unit: CodeUnit, pi: BlockPermutation, check_seed: int):
        nonlocal inconclusive
        outcome = io_equivalent(unit, apply(pi, unit), trials, check_seed)
        if outcome.verdict is Verdict.INCONCLUSIVE:
            inconclusive += 1
            return
        if outcome.verdict is Verdict.INEQUIVALENT:
            logger.error(f"❌ reordering {pi.mapping} changed semantics: {outcome.detail}")
        tracker.add_count(int(outcome.verdict is Verdict.INEQUIVALENT))

    for k, unit in enumerate(audit_programs(cfg, programs, seed)):
        graph = build_pdg(unit)
        samples = [
            sample_reordering(graph, percent, seed + 1000 * k + r)
            for r, percent in enumerate(cfg.semantics_percents)
        ]
        for pi in samples:
            legality.add_count(int(not is_linear_extension(graph, pi)))
            check(sampler, unit, pi, seed + k)
        elements, group, status = automorphism_checks(unit, cfg, rng)
        coverage[status] += 1
        if status == "group_too_large":
            elements = _sampled_reorderings(unit, cfg.sampled_reorderings, seed + 1000 * k + 500)
        for sigma in elements:
            check(automorphic, unit, sigma, seed + k)
        if group is not None:
            for key, value in reordering_relationship(graph, group, samples).items():
                relationship[key] += value

    sampler.details = {"inconclusive": inconclusive, "trials": trials}
    automorphic.details = {"relationship": relationship, "programs": dict(sorted(coverage.items()))}
    for tracker in (sampler, automorphic, legality):
        report.record(tracker.result())
    return _timed(report, start)


def _gradient_inputs(cfg: AuditConfig, seed: int) -> List:
    generator = ProgramGenerator(replace(cfg.generator, min_instructions=3, max_instructions=6))
    rng = np.random.default_rng(seed)
    units = []
    while len(units) < 2:
        unit = generator.generate(rng)
        if unit.num_tokens:
            units.append(unit)
    return [featurize(unit) for unit in units]


def _combined_loss(model: GaModel, inputs: Sequence) -> Tensor:
    first, second = inputs
    e1, e2 = encode(first, model), encode(second, model)
    labels = [t % model.config.token_labels for t in range(first.unit.num_tokens)]
    loss = token_loss(token_head(e1, model), labels) + unit_loss(pool_head(e2, model), 1)
    cosine = pair_cosine(e1, e2, model)
    if cosine is not None:
        loss = loss + pair_loss(cosine, 1)
    return loss


def _coordinates(analytic: np.ndarray, count: Optional[int], rng: np.random.Generator) -> np.ndarray:
    if count is None or count >= analytic.size:
        return np.arange(analytic.size)
    flat = np.abs(analytic).ravel()
    strongest = np.argsort(-flat, kind="stable")[:count // 2]
    others = rng.choice(flat.size, size=min(count - len(strongest), flat.size), replace=False)
    return np.unique(np.concatenate([strongest, others]))


def _finite_difference(model: GaModel, inputs: Sequence, name: str, index: int, step: float) -> float:
    values = model.params[name].reshape(-1)
    original = values[index]
    values[index] = original + step
    upper = float(_combined_loss(model, inputs).data)
    values[index] = original - step
    lower = float(_combined_loss(model, inputs).data)
    values[index] = original
    return (upper - lower) / (2.0 * step)


def audit_gradients(cfg: AuditConfig, seed: Optional[int] = None) -> AuditReport:
    """
    Finite-difference check of every parameter tensor.

    Every coordinate of every tensor is compared (or, with
    gradient_coordinates set, its strongest and some random ones) by
    ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-6). Runs for
    the plain model and for the residual + layer-norm variant.
    """
    start = time.perf_counter()
    seed = cfg.seed if seed is None else seed
    report = AuditReport("gradients", seed, cfg.to_dict())
    rng = np.random.default_rng(seed)
    inputs = _gradient_inputs(cfg, seed)

    for variant, residual in (("plain", False), ("residual", True)):
        model = GaModel.initialize(replace(cfg.gradient_model, residual=residual, precision="wide", seed=seed))
        grads = backward(_combined_loss(model, inputs), model)
        tracker = DeviationTracker(f"finite_difference[{variant}]", cfg.gradient_tolerance)
        worst = {}
        coordinates = 0
        for name, analytic in grads.items():
            picked = _coordinates(analytic, cfg.gradient_coordinates, rng)
            numeric = np.array([_finite_difference(model, inputs, name, int(i), cfg.finite_difference_step)
                                for i in picked])
            exact = analytic.reshape(-1)[picked]
            coordinates += len(picked)
            error = float(np.linalg.norm(exact - numeric)
                          / max(np.linalg.norm(exact), np.linalg.norm(numeric), 1e-6))
            tracker.instances += 1
            tracker.max_abs = max(tracker.max_abs, error)
            tracker.max_rel = max(tracker.max_rel, error)
            worst[name] = error
        tracker.details = {"worst_tensor": max(worst, key=worst.get), "tensors": len(worst),
                           "coordinates": coordinates}
        report.record(tracker.result())

    model = GaModel.initialize(replace(cfg.gradient_model, precision="wide", seed=seed))
    first, second = inputs

    invariant = DeviationTracker("loss_invariant_direction", cfg.gradient_tolerance)
    unit_grads = backward(unit_loss(pool_head(encode(second, model), model), 1), model)
    invariant.add(np.asarray([unit_grads["head.pool.b2"].sum()]), np.asarray([0.0]))
    report.record(invariant.result())

    frozen = DeviationTracker("frozen_parameter_zero_gradient", 0.0)
    frozen_model = model.copy().freeze("emb.pos", "layer0.w_q")
    frozen_grads = backward(_combined_loss(frozen_model, inputs), frozen_model)
    for name in ("emb.pos", "layer0.w_q"):
        frozen.add(frozen_grads[name], np.zeros_like(frozen_grads[name]))
    report.record(frozen.result())

    unused = DeviationTracker("unused_bias_zero_gradient", 0.0)
    bucket_count = cfg.gradient_model.max_distance_bucket + 2
    used_p = set(np.unique(bias_buckets(first.token_distances.positive, cfg.gradient_model.max_distance_bucket)))
    used_n = set(np.unique(bias_buckets(first.token_distances.negative, cfg.gradient_model.max_distance_bucket)))
    token_grads = backward(token_loss(token_head(encode(first, model), model),
                                      [0] * first.unit.num_tokens), model)
    for layer in range(cfg.gradient_model.layers):
        for table, used in (("bias_p", used_p), ("bias_n", used_n)):
            idle = [b for b in range(bucket_count) if b not in used]
            grad = token_grads[f"layer{layer}.{table}"][:, idle]
            unused.add(grad, np.zeros_like(grad))
    report.record(unused.result())
    return _timed(report, start)


def run_audits(cfg: AuditConfig, suites: Iterable[str] = SUITES) -> AuditRun:
    """Run the requested suites in canonical order."""
    requested = set(suites)
    unknown = requested - set(SUITES)
    if unknown:
        raise ValueError(f"unknown audit suites: {sorted(unknown)}")
    run = AuditRun(cfg)
    logger.info(f"🔍 Running audits {[s for s in SUITES if s in requested]} with seed {cfg.seed}")
    if "equivariance" in requested:
        run.add(audit_equivariance(cfg))
    if "distance" in requested:
        run.add(audit_distance_invariance(cfg))
    if "semantics" in requested:
        run.add(audit_semantics(cfg))
    if "gradients" in requested:
        run.add(audit_gradients(cfg))
    return run
