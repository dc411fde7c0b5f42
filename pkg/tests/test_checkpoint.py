"""
Unit tests for the checkpoint container
"""

import pytest
import numpy as np
import os
import sys
import tempfile
import shutil

# Add src to path
sys.path.append(os.path.join(os.path.dirname(__file__), '..', 'src'))

from learning.checkpoint import (
    MAGIC,
    CheckpointError,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from learning.ga_model import GaModel, ModelConfig


class TestCheckpoint:
    """Test cases for saving and loading models"""

    def setup_method(self):
        """Setup test environment"""
        self.temp_dir = tempfile.mkdtemp()
        config = ModelConfig(d_model=8, heads=2, layers=1, vocab_size=24, max_position=8,
                             max_degree=8, hidden=8, projection=4, residual=True, seed=5)
        self.model = GaModel.initialize(config).freeze("emb.pos")

    def teardown_method(self):
        """Cleanup test environment"""
        shutil.rmtree(self.temp_dir)

    def test_round_trip(self):
        """Test that every parameter survives bit-exactly"""
        path = save_checkpoint(os.path.join(self.temp_dir, "model.ckpt"), self.model, {"task": "unit"})
        model, extra = load_checkpoint(path)

        assert model.config == self.model.config
        assert model.vocabulary == self.model.vocabulary
        assert model.frozen == {"emb.pos"}
        assert extra == {"task": "unit"}
        for name, value in self.model.params.items():
            assert np.array_equal(model.params[name], value)

    def test_starts_with_magic(self):
        """Test the file preamble"""
        assert encode_checkpoint(self.model)[:4] == MAGIC

    def test_encoding_is_deterministic(self):
        """Test byte-identical encodings of one model"""
        assert encode_checkpoint(self.model) == encode_checkpoint(self.model.copy())

    def test_bad_magic(self):
        """Test rejection of foreign files"""
        payload = b"NOPE" + encode_checkpoint(self.model)[4:]
        with pytest.raises(CheckpointError):
            decode_checkpoint(payload)

    def test_unknown_version(self):
        """Test rejection of a newer format"""
        payload = bytearray(encode_checkpoint(self.model))
        payload[4] = 99
        with pytest.raises(CheckpointError):
            decode_checkpoint(bytes(payload))

    def test_truncated(self):
        """Test rejection of truncated files"""
        payload = encode_checkpoint(self.model)
        with pytest.raises(CheckpointError):
            decode_checkpoint(payload[:-16])
        with pytest.raises(CheckpointError):
            decode_checkpoint(payload[:6])

    def test_missing_file(self):
        """Test loading a path that does not exist"""
        with pytest.raises(CheckpointError):
            load_checkpoint(os.path.join(self.temp_dir, "absent.ckpt"))
