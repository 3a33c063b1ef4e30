"""Tests for the tensor container and checkpoints."""

import struct

import numpy as np
import pytest
import torch

from flowalign.checkpoint import (
    MAGIC,
    load_checkpoint,
    load_container,
    load_dataset,
    load_model,
    load_samples,
    restore_parameters,
    save_checkpoint,
    save_container,
    save_dataset,
    save_samples,
)
from flowalign.errors import CheckpointError
from flowalign.objective import FlowAlignModel
from flowalign.synthdata import gen_toy_dataset
from tests.helpers import random_conditions, random_latents, randomize_parameters, tiny_run


def _arrays():
    return {
        "weight": np.arange(6, dtype=np.float32).reshape(2, 3),
        "bias": np.array([0.5, -1.25], dtype=np.float32),
    }


class TestContainer:
    """Tests for the raw container format."""

    def test_round_trip(self, tmp_path):
        """Test arrays and metadata come back unchanged and in order."""
        path = tmp_path / "c.bin"
        save_container(path, _arrays(), {"note": "x", "step": 3})
        tensors, meta = load_container(path)
        assert list(tensors) == ["weight", "bias"]
        for name, array in _arrays().items():
            assert np.array_equal(tensors[name], array)
            assert tensors[name].dtype == np.float32
        assert meta == {"note": "x", "step": 3}

    def test_header(self, tmp_path):
        """Test the magic, version and manifest length prefix."""
        path = tmp_path / "c.bin"
        save_container(path, _arrays())
        raw = path.read_bytes()
        magic, version, length = struct.unpack_from("<8sII", raw)
        assert magic == MAGIC == b"FLOWALN1"
        assert version == 1
        assert len(raw) == 16 + length + 4 * 8

    def test_deterministic_bytes(self, tmp_path):
        """Test equal inputs give byte-identical files."""
        save_container(tmp_path / "a.bin", _arrays(), {"b": 1, "a": 2})
        save_container(tmp_path / "b.bin", _arrays(), {"a": 2, "b": 1})
        assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()

    def test_no_temporary_left(self, tmp_path):
        """Test only the target file remains after a write."""
        save_container(tmp_path / "c.bin", _arrays())
        assert [p.name for p in tmp_path.iterdir()] == ["c.bin"]

    def test_bad_magic(self, tmp_path):
        """Test a foreign file is rejected."""
        path = tmp_path / "c.bin"
        path.write_bytes(b"NOTAFILE" + bytes(32))
        with pytest.raises(CheckpointError) as info:
            load_container(path)
        assert info.value.code == "bad_magic"

    def test_unsupported_version(self, tmp_path):
        """Test a future format version is rejected."""
        path = tmp_path / "c.bin"
        save_container(path, _arrays())
        raw = bytearray(path.read_bytes())
        struct.pack_into("<I", raw, 8, 2)
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError) as info:
            load_container(path)
        assert info.value.code == "unsupported_version"

    @pytest.mark.parametrize("keep", [10, 40, -1])
    def test_truncated(self, tmp_path, keep):
        """Test files cut short in the header, manifest or payload."""
        path = tmp_path / "c.bin"
        save_container(path, _arrays())
        raw = path.read_bytes()
        path.write_bytes(raw[:keep])
        with pytest.raises(CheckpointError) as info:
            load_container(path)
        assert info.value.code == "truncated_file"

    def test_corrupted_payload(self, tmp_path):
        """Test a flipped payload byte fails the checksum."""
        path = tmp_path / "c.bin"
        save_container(path, _arrays())
        raw = bytearray(path.read_bytes())
        raw[-1] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError) as info:
            load_container(path)
        assert info.value.code == "checksum_mismatch"

    def test_corrupted_manifest(self, tmp_path):
        """Test an unparsable manifest is rejected."""
        path = tmp_path / "c.bin"
        save_container(path, _arrays())
        raw = bytearray(path.read_bytes())
        raw[16] = ord("#")
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError) as info:
            load_container(path)
        assert info.value.code == "invalid_manifest"


class TestCheckpoint:
    """Tests for model checkpoints."""

    def setup_method(self):
        """Set up test fixtures."""
        self.run = tiny_run()
        self.model = FlowAlignModel.build(self.run.model, 0)
        randomize_parameters(self.model)

    def test_round_trip(self, tmp_path):
        """Test a reloaded model predicts exactly what the saved one did."""
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, self.model, self.run, step=12)
        model, run, step = load_model(path)
        assert step == 12
        assert run == self.run
        x = random_latents(self.run.model, 2)
        cond = random_conditions(self.run.model, 2)
        with torch.no_grad():
            expected = self.model(x, 0.4, cond)[0]
            actual = model(x, 0.4, cond)[0]
        assert torch.equal(actual, expected)

    def test_stores_trainable_parameters(self, tmp_path):
        """Test the stored names are exactly the trainable parameters."""
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, self.model, self.run)
        params, _, _ = load_checkpoint(path)
        assert set(params) == set(self.model.trainable_names())

    def test_identical_bytes(self, tmp_path):
        """Test saving the same model twice gives identical files."""
        save_checkpoint(tmp_path / "a.ckpt", self.model, self.run, 1)
        save_checkpoint(tmp_path / "b.ckpt", self.model, self.run, 1)
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()

    def test_shape_mismatch(self, tmp_path):
        """Test restoring into a model of another width."""
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, self.model, self.run)
        params, _, _ = load_checkpoint(path)
        other = FlowAlignModel.build(self.run.replace(model={"hidden_dim": 32}).model, 0)
        with pytest.raises(CheckpointError) as info:
            restore_parameters(other, params)
        assert info.value.code == "parameter_mismatch"

    def test_missing_and_unexpected(self, tmp_path):
        """Test restoring across the alignment head switch."""
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, self.model, self.run)
        params, _, _ = load_checkpoint(path)
        without_head = FlowAlignModel.build(self.run.model, 0, use_tra=False)
        with pytest.raises(CheckpointError) as info:
            restore_parameters(without_head, params)
        assert info.value.code == "unexpected_parameters"
        trimmed = {k: v for k, v in params.items() if not k.startswith("align_head.")}
        with pytest.raises(CheckpointError) as info:
            restore_parameters(self.model, trimmed)
        assert info.value.code == "missing_parameters"

    def test_not_a_checkpoint(self, tmp_path):
        """Test a dataset file is not accepted as a checkpoint."""
        path = tmp_path / "data.bin"
        save_dataset(path, gen_toy_dataset(self.run.toy, 2))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)


class TestDataAndSamples:
    """Tests for dataset and sample files."""

    def test_dataset_round_trip(self, tmp_path):
        """Test a dataset file restores columns and metadata."""
        dataset = gen_toy_dataset(tiny_run().toy, 3, start=5)
        path = tmp_path / "data.bin"
        save_dataset(path, dataset)
        loaded = load_dataset(path)
        assert np.array_equal(loaded.x_star, dataset.x_star)
        assert np.array_equal(loaded.class_ids, dataset.class_ids)
        assert loaded.meta == dataset.meta

    def test_samples_round_trip(self, tmp_path):
        """Test a sample file keeps its configuration and onsets."""
        run = tiny_run()
        samples = np.random.default_rng(0).standard_normal((2, 1, 8, 8)).astype(np.float32)
        onsets = np.zeros((2, 8), dtype=np.float32)
        path = tmp_path / "samples.bin"
        save_samples(path, samples, run, onsets)
        arrays, loaded_run = load_samples(path)
        assert np.array_equal(arrays["samples"], samples)
        assert np.array_equal(arrays["reference_onsets"], onsets)
        assert loaded_run == run

    def test_samples_kind_checked(self, tmp_path):
        """Test a plain container is not a sample file."""
        path = tmp_path / "c.bin"
        save_container(path, _arrays(), {"kind": "other"})
        with pytest.raises(CheckpointError):
            load_samples(path)
