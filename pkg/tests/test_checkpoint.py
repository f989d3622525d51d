import struct

import numpy as np
import pytest
from numpy.testing import assert_allclose

from varcontext.core import VariationalContext
from varcontext.errors import DimensionError, ValidationError
from varcontext.training import ModelCheckpoint, encode_checkpoint, load_checkpoint, save_checkpoint

from conftest import tiny_params


def _checkpoint():
    return ModelCheckpoint(params={"a.W": np.arange(6, dtype=float).reshape(2, 3), "a.b": np.array([0.5, -1.0])},
                           iteration=42, baseline=1.25, momentum={"a.W": np.full((2, 3), 0.1)},
                           metadata={"seed": 3, "vocabulary": ["red"]})


class TestCheckpointFormat:
    """VCK1 layout and validation."""

    def test_header_and_tail(self):
        payload = encode_checkpoint(_checkpoint())
        assert payload[:4] == b"VCK1"
        assert struct.unpack("<II", payload[4:12]) == (1, 2)
        first_name_length = struct.unpack("<I", payload[12:16])[0]
        assert payload[16:16 + first_name_length] == b"a.W"
        assert payload.endswith(b'{"seed":3,"vocabulary":["red"]}')

    def test_save_and_load(self, tmp_path):
        path = save_checkpoint(tmp_path / "nested" / "ckpt.vck", _checkpoint())
        loaded = load_checkpoint(path)
        assert loaded.iteration == 42
        assert loaded.baseline == 1.25
        assert list(loaded.params) == ["a.W", "a.b"]
        assert_allclose(loaded.params["a.W"], np.arange(6).reshape(2, 3))
        assert loaded.params["a.b"].dtype == np.float64
        assert_allclose(loaded.momentum["a.W"], 0.1, rtol=1e-7)
        assert loaded.metadata == {"seed": 3, "vocabulary": ["red"]}
        assert not (tmp_path / "nested" / "ckpt.vck.tmp").exists()

    def test_values_stored_as_float32(self, tmp_path):
        checkpoint = ModelCheckpoint(params={"w": np.array([1.0 + 1e-12])})
        loaded = load_checkpoint(save_checkpoint(tmp_path / "c.vck", checkpoint))
        assert loaded.params["w"][0] == 1.0

    def test_truncated(self, tmp_path):
        path = save_checkpoint(tmp_path / "c.vck", _checkpoint())
        path.write_bytes(path.read_bytes()[:30])
        with pytest.raises(ValidationError, match="truncated"):
            load_checkpoint(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "c.vck"
        path.write_bytes(b"NOPE" + bytes(16))
        with pytest.raises(ValidationError):
            load_checkpoint(path)

    def test_unsupported_version(self, tmp_path):
        payload = bytearray(encode_checkpoint(_checkpoint()))
        payload[4:8] = struct.pack("<I", 9)
        path = tmp_path / "c.vck"
        path.write_bytes(bytes(payload))
        with pytest.raises(ValidationError, match="version 9"):
            load_checkpoint(path)


class TestModelRestore:

    def test_model_round_trip(self, tmp_path, tiny_generation_model, scene, toy_dataset):
        model = tiny_generation_model
        expression = toy_dataset.expressions[0]
        path = save_checkpoint(tmp_path / "m.vck", ModelCheckpoint(params=model.state_dict(),
                                                                   metadata=model.metadata()))
        loaded = load_checkpoint(path)
        restored = VariationalContext.from_metadata(loaded.metadata)
        restored.load_state_dict(loaded.params)
        assert restored.vocabulary.words() == model.vocabulary.words()
        assert restored.params == model.params
        assert_allclose(restored.posterior(scene, expression), model.posterior(scene, expression), atol=1e-5)

    def test_dimension_mismatch_names_block(self, tmp_path, tiny_model, toy_dataset):
        path = save_checkpoint(tmp_path / "m.vck", ModelCheckpoint(params=tiny_model.state_dict(),
                                                                   metadata=tiny_model.metadata()))
        loaded = load_checkpoint(path)
        wider = VariationalContext.from_metadata(loaded.metadata, params=tiny_params(embedding_dim=5))
        with pytest.raises(DimensionError, match="language.embedding"):
            wider.load_state_dict(loaded.params)
