import struct

import numpy as np
import pytest

from eulernet.checkpoint import (
    MAGIC,
    BadMagicError,
    Checkpoint,
    IntegrityError,
    TruncatedCheckpointError,
    VersionMismatchError,
    load_checkpoint,
    save_checkpoint,
)
from eulernet.model import EulerNet, tiny_config
from eulernet.trainer import model_checkpoint, model_from_checkpoint


@pytest.fixture
def ckpt(rng):
    return Checkpoint(
        {"w": rng.standard_normal((3, 2, 3, 3)).astype(np.float32), "s": np.array(0.25), "i": np.arange(4)},
        {"model": {"x": 1}}, step=7,
    )


def test_round_trip_bit_identical(tmp_path, ckpt):
    save_checkpoint(tmp_path / "c", ckpt)
    back = load_checkpoint(tmp_path / "c")
    assert back.step == 7 and back.config == ckpt.config
    for k, v in ckpt.tensors.items():
        assert back.tensors[k].dtype == v.dtype
        assert back.tensors[k].tobytes() == v.tobytes()


def test_bytes_deterministic(tmp_path, ckpt):
    save_checkpoint(tmp_path / "a", ckpt)
    save_checkpoint(tmp_path / "b", ckpt)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_layout(tmp_path, ckpt):
    save_checkpoint(tmp_path / "c", ckpt)
    raw = (tmp_path / "c").read_bytes()
    assert raw[:8] == MAGIC == b"EULCKPT1"
    (hlen,) = struct.unpack("<Q", raw[8:16])
    assert raw[16:16 + hlen].decode("utf-8").startswith("{")


def test_corrupt_payload(tmp_path, ckpt):
    save_checkpoint(tmp_path / "c", ckpt)
    raw = bytearray((tmp_path / "c").read_bytes())
    raw[-5] ^= 0xFF
    (tmp_path / "c").write_bytes(bytes(raw))
    with pytest.raises(IntegrityError):
        load_checkpoint(tmp_path / "c")


def test_bad_magic(tmp_path):
    (tmp_path / "c").write_bytes(b"NOTACKPT" + bytes(16))
    with pytest.raises(BadMagicError):
        load_checkpoint(tmp_path / "c")


def test_truncated(tmp_path, ckpt):
    save_checkpoint(tmp_path / "c", ckpt)
    raw = (tmp_path / "c").read_bytes()
    (tmp_path / "c").write_bytes(raw[:-3])
    with pytest.raises(TruncatedCheckpointError):
        load_checkpoint(tmp_path / "c")


def test_version_mismatch(tmp_path, ckpt):
    ckpt.format_version = 99
    save_checkpoint(tmp_path / "c", ckpt)
    with pytest.raises(VersionMismatchError):
        load_checkpoint(tmp_path / "c")


def test_errors_are_distinct():
    kinds = {BadMagicError, VersionMismatchError, TruncatedCheckpointError, IntegrityError}
    assert len(kinds) == 4 and not any(issubclass(a, b) for a in kinds for b in kinds if a is not b)


def test_header_names_every_diirf_scalar(tmp_path):
    model = EulerNet.init(tiny_config())
    save_checkpoint(tmp_path / "m", model_checkpoint(model))
    names = set(load_checkpoint(tmp_path / "m").tensors)
    for lvl in (1, 2, 3):
        for c in ("b0", "b1", "b2", "a1", "a2"):
            assert f"level{lvl}.fcam.diirf.{c}" in names


def test_model_round_trip(tmp_path):
    model = EulerNet.init(tiny_config(), seed=3)
    save_checkpoint(tmp_path / "m", model_checkpoint(model))
    back = model_from_checkpoint(tmp_path / "m")
    for (k, a), (k2, b) in zip(model.named_parameters().items(), back.named_parameters().items()):
        assert k == k2 and a.data.tobytes() == b.data.tobytes()
