"""
Unit tests for the corpus builder
"""

import pytest
import numpy as np
import pandas as pd
import os
import sys
import tempfile
import shutil
from pathlib import Path

# Add src to path
sys.path.append(os.path.join(os.path.dirname(__file__), '..', 'src'))

from data_manipulation.corpus_builder import (
    SHARD_SIZE,
    CorpusBuilder,
    build_corpus,
    load_corpus,
    memory_token_labels,
    write_parity,
)
from data_manipulation.program_generator import GeneratorConfig
from program.ir import io_equivalent, parse


SMALL_PROGRAMS = GeneratorConfig(min_instructions=2, max_instructions=8)


class TestLabels:
    """Test cases for label functions"""

    def test_write_parity(self):
        """Test counting writes of a"""
        assert write_parity(parse("a = 1; b = a; a = 2")) == 0
        assert write_parity(parse("a = load; b = 1")) == 1
        assert write_parity(parse("store a")) == 0

    def test_memory_token_labels(self):
        """Test that every token of a memory instruction is labeled"""
        assert memory_token_labels(parse("a = 1; store a")) == [0, 0, 0, 1, 1]


class TestCorpusBuilder:
    """Test cases for building and loading corpora"""

    def setup_method(self):
        """Setup test environment"""
        self.temp_dir = tempfile.mkdtemp()

    def teardown_method(self):
        """Cleanup test environment"""
        shutil.rmtree(self.temp_dir)

    def test_invalid_task(self):
        """Test task validation"""
        with pytest.raises(ValueError):
            CorpusBuilder(self.temp_dir, "sorting")

    @pytest.mark.asyncio
    async def test_build_parity(self):
        """Test files, labels and splits of a parity corpus"""
        builder = CorpusBuilder(self.temp_dir, "parity", seed=4, generator_config=SMALL_PROGRAMS)
        manifest_path = await builder.build(30)

        assert manifest_path == Path(self.temp_dir) / "manifest.json"
        assert (Path(self.temp_dir) / "programs" / "000000.ir").exists()
        corpus = load_corpus(self.temp_dir)
        assert corpus.kind == "unit"
        assert len(corpus.entries) == 30
        assert len(corpus.test) == 6
        for entry in corpus.entries:
            assert entry.label == write_parity(entry.units[0])

    @pytest.mark.asyncio
    async def test_build_regioncount(self):
        """Test one token label per token"""
        await CorpusBuilder(self.temp_dir, "regioncount", seed=1, generator_config=SMALL_PROGRAMS).build(10)
        corpus = load_corpus(self.temp_dir)
        for unit, labels in corpus.train + corpus.test:
            assert len(labels) == unit.num_tokens

    @pytest.mark.asyncio
    async def test_pair_positives_are_equivalent(self):
        """Test that positive pairs are semantically equivalent"""
        await CorpusBuilder(self.temp_dir, "pairs", seed=2, generator_config=SMALL_PROGRAMS).build(20)
        corpus = load_corpus(self.temp_dir)

        positives = [pair for pair, label in corpus.train + corpus.test if label == 1]
        assert positives
        for first, second in positives:
            assert first.n == second.n
            assert io_equivalent(first, second, trials=10).equivalent

    def test_deterministic_bytes(self):
        """Test byte-identical corpora from one seed"""
        first = os.path.join(self.temp_dir, "first")
        second = os.path.join(self.temp_dir, "second")
        build_corpus(first, "parity", 12, seed=9, generator_config=SMALL_PROGRAMS)
        build_corpus(second, "parity", 12, seed=9, generator_config=SMALL_PROGRAMS)

        for name in ("manifest.json", "labels.csv", "programs/000007.ir"):
            assert Path(first, name).read_bytes() == Path(second, name).read_bytes()

    @pytest.mark.asyncio
    async def test_entries_span_shards(self):
        """Test shard merging order and seeding"""
        builder = CorpusBuilder(self.temp_dir, "parity", seed=3, generator_config=SMALL_PROGRAMS)
        first = await builder.generate_entries(SHARD_SIZE + 10)
        second = await builder.generate_entries(SHARD_SIZE + 10)

        assert len(first) == SHARD_SIZE + 10
        assert [e.units[0].render() for e in first] == [e.units[0].render() for e in second]

    def test_empty_corpus(self):
        """Test that zero programs still writes a manifest"""
        build_corpus(self.temp_dir, "parity", 0)
        corpus = load_corpus(self.temp_dir)

        assert corpus.entries == []
        assert corpus.manifest["programs"] == 0

    def test_labels_csv(self):
        """Test the label table columns"""
        build_corpus(self.temp_dir, "regioncount", 5, seed=0, generator_config=SMALL_PROGRAMS)
        labels = pd.read_csv(Path(self.temp_dir) / "labels.csv")
        assert list(labels.columns) == ["id", "split", "label", "files"]
        assert np.array_equal(labels["id"].to_numpy(), np.arange(5))

    def test_missing_manifest(self):
        """Test loading a directory without a manifest"""
        with pytest.raises(FileNotFoundError):
            load_corpus(self.temp_dir)
