"""MCTN tensors and MCKP checkpoints."""

import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from latentmotion.checkpoint import (
    Checkpoint,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
    tensors_digest,
)
from latentmotion.tensorio import FormatError, encode_tensor, load_tensor, read_tensor, save_tensor


class TestTensorFormat:
    def test_header_layout(self):
        raw = encode_tensor(np.zeros((2, 3), dtype=np.float32))
        assert raw[:4] == b"MCTN"
        code, rank = struct.unpack("<BI", raw[4:9])
        assert (code, rank) == (0, 2)
        assert struct.unpack("<2I", raw[9:17]) == (2, 3)
        assert len(raw) == 17 + 24

    def test_scalar_roundtrip(self, tmp_path):
        save_tensor(np.array(3.5), tmp_path / "s.mctn")
        assert load_tensor(tmp_path / "s.mctn") == 3.5

    def test_rejects_integer_arrays(self):
        with pytest.raises(TypeError):
            encode_tensor(np.arange(3))

    def test_bad_magic(self):
        with pytest.raises(FormatError, match="magic"):
            read_tensor(io.BytesIO(b"XXXX" + bytes(20)))

    def test_truncated(self):
        raw = encode_tensor(np.ones(4))
        with pytest.raises(FormatError, match="truncated"):
            read_tensor(io.BytesIO(raw[:-1]))

    def test_unknown_dtype_code(self):
        raw = bytearray(encode_tensor(np.ones(1)))
        raw[4] = 7
        with pytest.raises(FormatError, match="dtype"):
            read_tensor(io.BytesIO(bytes(raw)))

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "t.mctn"
        path.write_bytes(encode_tensor(np.ones(2)) + b"\0")
        with pytest.raises(FormatError):
            load_tensor(path)

    @settings(max_examples=50, deadline=None)
    @given(arrays(st.sampled_from([np.float32, np.float64]), array_shapes(min_dims=0, max_dims=4, max_side=5),
                  elements=st.floats(-1e6, 1e6, width=32)))
    def test_roundtrip_is_bit_exact(self, arr):
        back = read_tensor(io.BytesIO(encode_tensor(arr)))
        assert back.dtype == arr.dtype and back.shape == arr.shape
        assert back.tobytes() == arr.tobytes()


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        ck = Checkpoint({"a": np.ones((2, 2)), "b.c": np.arange(3, dtype=np.float32)}, "abc123", 42)
        save_checkpoint(ck, tmp_path / "c.mckp")
        back = load_checkpoint(tmp_path / "c.mckp")
        assert back.config_hash == "abc123" and back.step == 42
        assert list(back.tensors) == ["a", "b.c"]
        np.testing.assert_array_equal(back.tensors["b.c"], ck.tensors["b.c"])

    def test_encoding_is_deterministic(self):
        ck = Checkpoint({"x": np.ones(3), "y": np.zeros(2)}, "h", 1)
        assert encode_checkpoint(ck) == encode_checkpoint(Checkpoint(dict(ck.tensors), "h", 1))

    def test_metadata_block(self):
        raw = encode_checkpoint(Checkpoint({}, "hash", 7))
        assert raw[:4] == b"MCKP"
        assert raw[12:16] == b"META"
        assert struct.unpack("<Q", raw[-8:]) == (7,)

    def test_duplicate_names_on_write(self):
        with pytest.raises(ValueError, match="duplicate"):
            encode_checkpoint(Checkpoint({"a": np.ones(1)}), names_in_order=["a", "a"])

    def test_duplicate_names_on_read(self):
        rec = struct.pack("<H", 1) + b"a" + encode_tensor(np.ones(1))
        raw = b"MCKP" + struct.pack("<II", 1, 2) + rec + rec + b"META" + struct.pack("<H", 0) + struct.pack("<Q", 0)
        with pytest.raises(FormatError, match="duplicate"):
            decode_checkpoint(raw)

    @pytest.mark.parametrize("cut", [3, 10, 30, -3])
    def test_truncation_detected(self, cut):
        raw = encode_checkpoint(Checkpoint({"a": np.ones(4)}, "h", 2))
        with pytest.raises(FormatError):
            decode_checkpoint(raw[:cut])

    def test_version_checked(self):
        raw = bytearray(encode_checkpoint(Checkpoint({}, "", 0)))
        raw[4] = 9
        with pytest.raises(FormatError, match="version"):
            decode_checkpoint(bytes(raw))

    def test_write_is_atomic(self, tmp_path):
        path = tmp_path / "c.mckp"
        save_checkpoint(Checkpoint({"a": np.ones(1)}), path)
        assert not (tmp_path / "c.mckp.tmp").exists()

    def test_digest_filters_by_prefix(self):
        t = {"g.a": np.ones(2), "m.b": np.zeros(2)}
        assert tensors_digest(t, "g.") == tensors_digest({"g.a": np.ones(2)})
        assert tensors_digest(t, "g.") != tensors_digest(t)
