"""
Main Script for the Symmetry Toolkit

Command-line entry point binding every module: parse and inspect programs,
emit PDGs, sample semantics-preserving reorderings, run the property audits,
generate synthetic corpora, and train/evaluate the distance-biased attention
model.

Exit codes: 0 ok, 1 property or verification failure, 2 usage or input error.

Author: Symmetry Toolkit Team
Date: 2026-10-18
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, Optional, Sequence

# Add src to path for imports
sys.path.append(os.path.join(os.path.dirname(__file__), 'src'))

from analysis.audit import SUITES, AuditConfig, run_audits
from analysis.metrics import evaluate
from data_manipulation.corpus_builder import TASK_KINDS, build_corpus, load_corpus
from data_manipulation.program_generator import GeneratorConfig
from learning.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from learning.ga_model import ModelConfig
from learning.trainer import EmptyCorpusError, LabelError, TrainingConfig, train
from program.ir import ParseError, Verdict, io_equivalent, parse
from program.pdg import build_pdg
from program.symmetry import CycleError, apply, sample_reordering

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
SEED_ENV = "SYMCODE_SEED"


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    """
    Resolved configuration of one invocation.

    Attributes:
        command: subcommand name
        seed: global seed (flag > config file > SYMCODE_SEED > 0)
        options: subcommand parameters after flag/file merging
        sections: nested config sections from the config file (model, training, audit, generator)
    """

    command: str
    seed: int = 0
    options: Dict[str, object] = field(default_factory=dict)
    sections: Dict[str, Dict[str, object]] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


def resolve_seed(flag: Optional[int], file_values: Dict[str, object]) -> int:
    if flag is not None:
        return int(flag)
    if "seed" in file_values:
        return int(file_values["seed"])
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError as e:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from e
    return 0


def resolve_run_config(args: argparse.Namespace) -> RunConfig:
    """Merge built-in defaults, the --config JSON file, the environment and explicit flags."""
    file_values: Dict[str, object] = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file {path} does not exist")
        try:
            file_values = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise UsageError(f"config file {path} is not valid JSON: {e}") from e

    sections = {name: dict(file_values.get(name, {})) for name in ("model", "training", "audit", "generator")}
    command_values = dict(file_values.get(args.command, {}))
    options = {}
    for key, value in vars(args).items():
        if key in ("command", "config", "seed", "log_level", "handler"):
            continue
        options[key] = value if value is not None else command_values.get(key)
    return RunConfig(args.command, resolve_seed(args.seed, file_values), options, sections)


def write_output(text: str, out: Optional[str]):
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        logger.info(f"💾 Wrote {path}")
    else:
        sys.stdout.write(text)


def read_program(path: str):
    source = Path(path)
    if not source.exists():
        raise UsageError(f"input file {source} does not exist")
    return source.read_bytes(), parse(source.read_text(encoding="utf-8"))


def cmd_parse(run: RunConfig) -> int:
    _, unit = read_program(run.options["input"])
    summary = {
        "config": run.to_dict(),
        "instructions": [
            {"index": ins.index, "kind": ins.kind.value, "text": ins.text(), "tokens": list(ins.tokens())}
            for ins in unit.instructions
        ],
        "tokens": unit.num_tokens,
        "variables": sorted(unit.variables),
    }
    write_output(json.dumps(summary, sort_keys=True, indent=2) + "\n", run.options.get("out"))
    return EXIT_OK


def cmd_pdg(run: RunConfig) -> int:
    _, unit = read_program(run.options["input"])
    graph = build_pdg(unit)
    if run.options.get("format") == "dot":
        text = graph.to_dot(comment=json.dumps(run.to_dict(), sort_keys=True))
    else:
        text = graph.to_json({"config": run.to_dict()})
    write_output(text, run.options.get("out"))
    return EXIT_OK


def cmd_perm(run: RunConfig) -> int:
    """Write `count` sampled reorderings plus a manifest; --verify aborts on any inequivalence."""
    source_bytes, unit = read_program(run.options["input"])
    percent = float(run.options.get("percent") or 0.0)
    count = int(run.options.get("count") or 1)
    out_dir = Path(run.options.get("out_dir") or "permutations")
    out_dir.mkdir(parents=True, exist_ok=True)
    graph = build_pdg(unit)

    variants = []
    for k in range(count):
        pi = sample_reordering(graph, percent, run.seed + k)
        path = out_dir / f"variant_{k:03d}.ir"
        if pi.is_identity:
            path.write_bytes(source_bytes)
        else:
            path.write_text(apply(pi, unit).render() + "\n", encoding="utf-8")
        entry = {"file": path.name, "mapping": list(pi.mapping), "identity": pi.is_identity}
        if run.options.get("verify"):
            outcome = io_equivalent(unit, apply(pi, unit), int(run.options.get("trials") or 50), run.seed + k)
            entry["verdict"] = outcome.verdict.value
            if outcome.verdict is Verdict.INEQUIVALENT:
                logger.error(f"❌ variant {k} is not equivalent: {outcome.detail}")
                print(f"❌ Verification failed for {path.name}")
                return EXIT_FAILURE
        variants.append(entry)

    manifest = {"config": run.to_dict(), "source": str(run.options["input"]), "variants": variants}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(f"✅ Wrote {count} variants to {out_dir}")
    return EXIT_OK


def _audit_config(run: RunConfig) -> AuditConfig:
    cfg = AuditConfig.from_dict(run.sections.get("audit", {}))
    overrides = {"seed": run.seed}
    if run.options.get("programs") is not None:
        overrides["programs"] = int(run.options["programs"])
    if run.options.get("negative_control"):
        overrides["negative_control"] = True
    if run.options.get("precision"):
        overrides["model"] = replace(cfg.model, precision=run.options["precision"])
    return replace(cfg, **overrides)


def cmd_audit(run: RunConfig) -> int:
    suite = run.options.get("suite") or "all"
    suites = SUITES if suite == "all" else (suite,)
    result = run_audits(_audit_config(run), suites)
    write_output(result.to_json(), run.options.get("out"))
    if not result.passed:
        print(f"❌ Failing properties: {', '.join(result.failed_properties)}", file=sys.stderr)
        return EXIT_FAILURE
    print("✅ All audited properties hold", file=sys.stderr)
    return EXIT_OK


def cmd_gen(run: RunConfig) -> int:
    task = run.options.get("task") or "parity"
    programs = int(run.options.get("programs") or 0)
    out_dir = run.options.get("out_dir") or f"corpus_{task}"
    generator = GeneratorConfig.from_dict(run.sections.get("generator", {}))
    fraction = run.options.get("test_fraction")
    manifest = build_corpus(
        out_dir, task, programs, run.seed,
        generator_config=generator,
        test_fraction=0.2 if fraction is None else float(fraction),
        run_config=run.to_dict(),
    )
    print(f"✅ Corpus written: {manifest}")
    return EXIT_OK


def _model_config(run: RunConfig) -> ModelConfig:
    values = dict(run.sections.get("model", {}))
    values["seed"] = run.seed
    return ModelConfig.from_dict(values)


def cmd_train(run: RunConfig) -> int:
    corpus = load_corpus(run.options["corpus"])
    training_values = dict(run.sections.get("training", {}))
    training_values["seed"] = run.seed
    for key in ("epochs", "batch_size", "learning_rate"):
        if run.options.get(key) is not None:
            training_values[key] = run.options[key]
    training = TrainingConfig.from_dict(training_values)
    cfg = _model_config(run)

    result = train(corpus.train, cfg, corpus.kind, training)
    out = Path(run.options.get("out") or "model.symc")
    save_checkpoint(out, result.model, {
        "task": corpus.kind,
        "corpus_task": corpus.task,
        "training": training.to_dict(),
        "config": run.to_dict(),
    })
    trace_path = out.with_suffix(".trace.csv")
    result.trace.to_csv(trace_path, index=False, lineterminator="\n")
    final = float(result.trace["loss"].iloc[-1]) if len(result.trace) else float("nan")
    print(f"✅ Trained {corpus.kind} model, final batch loss {final:.6f}; trace in {trace_path}")
    return EXIT_OK


def cmd_eval(run: RunConfig) -> int:
    corpus = load_corpus(run.options["corpus"])
    model, extra = load_checkpoint(run.options["checkpoint"])
    task = extra.get("task", corpus.kind)
    if task != corpus.kind:
        raise UsageError(f"checkpoint was trained for {task} but the corpus is {corpus.kind}")
    if run.options.get("precision"):
        model = model.with_precision(run.options["precision"])
    items = corpus.test or corpus.split("train")
    percents = run.options.get("percent") or [0.0]
    metrics = evaluate(model, items, task, [float(p) for p in percents], run.seed)
    metrics["config"] = run.to_dict()
    write_output(json.dumps(metrics, sort_keys=True, indent=2) + "\n", run.options.get("out"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="symcode", description="Symmetry-preserving code representation toolkit")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help=f"global seed (default: ${SEED_ENV} or 0)")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse a program and print its instructions and tokens")
    p.add_argument("input")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_parse)

    p = sub.add_parser("pdg", help="emit the program dependence graph")
    p.add_argument("input")
    p.add_argument("--format", choices=["json", "dot"], default="json")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_pdg)

    p = sub.add_parser("perm", help="sample semantics-preserving reorderings")
    p.add_argument("input")
    p.add_argument("--percent", type=float)
    p.add_argument("--count", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--verify", action="store_true", default=None)
    p.add_argument("--trials", type=int)
    p.set_defaults(handler=cmd_perm)

    p = sub.add_parser("audit", help="run the property audits")
    p.add_argument("--suite", choices=list(SUITES) + ["all"])
    p.add_argument("--programs", type=int)
    p.add_argument("--negative-control", action="store_true", default=None)
    p.add_argument("--precision", choices=["wide", "narrow"])
    p.add_argument("--out")
    p.set_defaults(handler=cmd_audit)

    p = sub.add_parser("gen", help="generate a labeled synthetic corpus")
    p.add_argument("--programs", type=int)
    p.add_argument("--task", choices=sorted(TASK_KINDS))
    p.add_argument("--out-dir")
    p.add_argument("--test-fraction", type=float)
    p.set_defaults(handler=cmd_gen)

    p = sub.add_parser("train", help="train a model on a corpus")
    p.add_argument("corpus")
    p.add_argument("--out")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on permuted test sets")
    p.add_argument("corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--percent", type=float, action="append")
    p.add_argument("--precision", choices=["wide", "narrow"])
    p.add_argument("--out")
    p.set_defaults(handler=cmd_eval)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one subcommand.

    Returns:
        process exit code
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    # Configure logging
    logging.basicConfig(level=getattr(logging, args.log_level), stream=sys.stderr, force=True)

    try:
        run = resolve_run_config(args)
        return args.handler(run)
    except ParseError as e:
        print(f"❌ Parse error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, CycleError, CheckpointError, EmptyCorpusError, LabelError, FileNotFoundError, ValueError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        print("\n\n⏹️ Process interrupted by user", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
