"""
Corpus Builder Module for the Symmetry Toolkit

This module generates labeled synthetic corpora and loads them back. Programs
are produced in shards of SHARD_SIZE on worker threads, each shard seeded from
its own child of one SeedSequence, and files are written concurrently with
aiofiles. The merged order is always the shard order, so the corpus bytes do
not depend on scheduling.

Tasks:
    parity      unit label: number of instructions writing `a`, mod 2
    regioncount token labels: 1 where the owning instruction touches memory
    pairs       pair label: 1 for a program and a sampled reordering of it,
                0 for two independently generated programs

Author: Symmetry Toolkit Team
Date: 2026-10-18
"""

import asyncio
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import aiofiles
import numpy as np
import pandas as pd

from data_manipulation.program_generator import GeneratorConfig, ProgramGenerator
from program.ir import MEMORY, CodeUnit, parse
from program.pdg import build_pdg
from program.symmetry import apply, sample_reordering

# Configure logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

SHARD_SIZE = 250
MAX_OPEN_FILES = 64
TASK_KINDS = {"parity": "unit", "regioncount": "token", "pairs": "pair"}


def write_parity(unit: CodeUnit, variable: str = "a") -> int:
    return sum(1 for ins in unit.instructions if variable in ins.writes()) % 2


def memory_token_labels(unit: CodeUnit) -> List[int]:
    touches = [int(MEMORY in ins.reads() | ins.writes()) for ins in unit.instructions]
    return [touches[owner] for owner in unit.token_owner]


@dataclass
class CorpusEntry:
    """One labeled example: one program, or two for the pairs task."""

    units: Tuple[CodeUnit, ...]
    label: Union[int, List[int]]
    split: str = "train"

    @property
    def item(self):
        return self.units if len(self.units) == 2 else self.units[0]


@dataclass
class Corpus:
    task: str
    kind: str
    entries: List[CorpusEntry]
    manifest: Dict[str, object] = field(default_factory=dict)

    def split(self, name: str) -> List[Tuple[object, object]]:
        return [(entry.item, entry.label) for entry in self.entries if entry.split == name]

    @property
    def train(self) -> List[Tuple[object, object]]:
        return self.split("train")

    @property
    def test(self) -> List[Tuple[object, object]]:
        return self.split("test")


class CorpusBuilder:
    """
    Builds a corpus directory: programs/*.ir, labels.csv and manifest.json.

    Attributes:
        output_dir: target directory
        task: parity, regioncount or pairs
        seed: root seed of the SeedSequence
        generator_config: random program shape
        test_fraction: share of entries (the last ones) forming the test split
    """

    def __init__(
        self,
        output_dir: Union[str, Path],
        task: str,
        seed: int = 0,
        generator_config: Optional[GeneratorConfig] = None,
        test_fraction: float = 0.2,
        run_config: Optional[Dict[str, object]] = None,
    ):
        if task not in TASK_KINDS:
            raise ValueError(f"task must be one of {sorted(TASK_KINDS)}")
        if not 0.0 <= test_fraction <= 1.0:
            raise ValueError("test_fraction must be within [0, 1]")
        self.output_dir = Path(output_dir)
        self.task = task
        self.seed = seed
        self.generator_config = generator_config or GeneratorConfig()
        self.test_fraction = test_fraction
        self.run_config = run_config or {}
        self._open_files: Optional[asyncio.Semaphore] = None

    def _make_entry(self, generator: ProgramGenerator, rng: np.random.Generator) -> CorpusEntry:
        unit = generator.generate(rng)
        if self.task == "parity":
            return CorpusEntry((unit,), write_parity(unit))
        if self.task == "regioncount":
            return CorpusEntry((unit,), memory_token_labels(unit))
        if rng.random() < 0.5:
            pi = sample_reordering(build_pdg(unit), 100.0, int(rng.integers(0, 2**31)))
            return CorpusEntry((unit, apply(pi, unit)), 1)
        return CorpusEntry((unit, generator.generate(rng)), 0)

    def generate_shard(self, count: int, seed_sequence: np.random.SeedSequence) -> List[CorpusEntry]:
        rng = np.random.default_rng(seed_sequence)
        generator = ProgramGenerator(self.generator_config)
        return [self._make_entry(generator, rng) for _ in range(count)]

    async def generate_entries(self, programs: int) -> List[CorpusEntry]:
        counts = [min(SHARD_SIZE, programs - start) for start in range(0, programs, SHARD_SIZE)]
        children = np.random.SeedSequence(self.seed).spawn(len(counts))
        shards = await asyncio.gather(
            *(asyncio.to_thread(self.generate_shard, count, child) for count, child in zip(counts, children))
        )
        entries = [entry for shard in shards for entry in shard]
        test_count = int(programs * self.test_fraction)
        for entry in entries[len(entries) - test_count:] if test_count else []:
            entry.split = "test"
        return entries

    @staticmethod
    def _file_names(index: int, entry: CorpusEntry) -> List[str]:
        if len(entry.units) == 2:
            return [f"programs/{index:06d}_a.ir", f"programs/{index:06d}_b.ir"]
        return [f"programs/{index:06d}.ir"]

    async def _write_text(self, relative: str, text: str):
        async with self._open_files:
            async with aiofiles.open(self.output_dir / relative, "w", encoding="utf-8", newline="\n") as f:
                await f.write(text)

    async def build(self, programs: int) -> Path:
        """
        Generate and write the corpus.

        Args:
            programs: number of entries

        Returns:
            path of the written manifest
        """
        if programs < 0:
            raise ValueError("programs must be non-negative")
        logger.info(f"🔍 Generating {programs} {self.task} entries with seed {self.seed}")
        entries = await self.generate_entries(programs)

        (self.output_dir / "programs").mkdir(parents=True, exist_ok=True)
        self._open_files = asyncio.Semaphore(MAX_OPEN_FILES)
        writes = []
        rows = []
        for index, entry in enumerate(entries):
            names = self._file_names(index, entry)
            for name, unit in zip(names, entry.units):
                writes.append(self._write_text(name, unit.render() + "\n"))
            label = " ".join(str(v) for v in entry.label) if isinstance(entry.label, list) else str(entry.label)
            rows.append({"id": index, "split": entry.split, "label": label, "files": ";".join(names)})
        await asyncio.gather(*writes)

        labels = pd.DataFrame(rows, columns=["id", "split", "label", "files"])
        labels.to_csv(self.output_dir / "labels.csv", index=False, lineterminator="\n")

        manifest = {
            "task": self.task,
            "kind": TASK_KINDS[self.task],
            "seed": self.seed,
            "programs": programs,
            "shard_size": SHARD_SIZE,
            "test_fraction": self.test_fraction,
            "generator": self.generator_config.to_dict(),
            "config": self.run_config,
            "entries": [{"id": row["id"], "split": row["split"], "files": row["files"].split(";")} for row in rows],
        }
        manifest_path = self.output_dir / "manifest.json"
        await self._write_text("manifest.json", json.dumps(manifest, sort_keys=True, indent=2) + "\n")
        logger.info(f"💾 Wrote {len(entries)} entries to {self.output_dir}")
        return manifest_path


def build_corpus(output_dir: Union[str, Path], task: str, programs: int, seed: int = 0, **kwargs) -> Path:
    return asyncio.run(CorpusBuilder(output_dir, task, seed, **kwargs).build(programs))


def _parse_label(text: str, kind: str) -> Union[int, List[int]]:
    if kind == "token":
        return [int(v) for v in str(text).split()] if str(text).strip() else []
    return int(text)


def load_corpus(path: Union[str, Path]) -> Corpus:
    """
    Load a corpus directory written by CorpusBuilder.

    Raises:
        FileNotFoundError: when the manifest or a program file is missing
    """
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest.json in {root}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    kind = manifest["kind"]
    entries = []
    if manifest["programs"]:
        labels = pd.read_csv(root / "labels.csv", dtype={"label": str}, keep_default_na=False)
        for row in labels.itertuples(index=False):
            units = tuple(parse((root / name).read_text(encoding="utf-8")) for name in row.files.split(";"))
            entries.append(CorpusEntry(units, _parse_label(row.label, kind), row.split))
    logger.info(f"📂 Loaded {len(entries)} {manifest['task']} entries from {root}")
    return Corpus(manifest["task"], kind, entries, manifest)

