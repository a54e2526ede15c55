import struct

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from rconvmk.data.checkpoint import (
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    load_model,
    make_checkpoint,
    restore,
    save_checkpoint,
)
from rconvmk.engine.tensor import Tensor
from rconvmk.errors import CheckpointError, ChecksumError, SpecMismatchError, VersionError
from rconvmk.models.resnet import ModelSpec, build_model, evaluate
from rconvmk.nn.optim import SGD
from rconvmk.robustness.training import TrainSettings, train_model


@pytest.fixture
def trained(small_model, small_trainset):
    history = train_model(small_model, small_trainset, TrainSettings(epochs=1, batch_size=16), progress=False)
    return small_model, history


def test_save_load_save_is_byte_identical(tmp_path, trained):
    model, history = trained
    first = save_checkpoint(model, history.optimizer, tmp_path / "a.rcmk", rng=history.rng, step=2)
    ckpt = load_checkpoint(first)
    second = tmp_path / "b.rcmk"
    reloaded = build_model(ckpt.spec, ckpt.seed)
    opt = SGD(reloaded.parameters(), lr=1.0)
    restore(ckpt, reloaded, opt)
    save_checkpoint(reloaded, opt, second, rng=ckpt.rng(), step=ckpt.step)
    assert first.read_bytes() == second.read_bytes()


def test_reloaded_model_evaluates_identically(tmp_path, trained, small_testset):
    model, history = trained
    path = save_checkpoint(model, history.optimizer, tmp_path / "m.rcmk")
    reloaded, ckpt = load_model(path)
    assert reloaded.mode == "eval"
    assert ckpt.spec == model.spec
    x = Tensor(small_testset.pixels())
    model.eval()
    assert_array_equal(reloaded(x).data, model(x).data)
    assert evaluate(reloaded, small_testset) == evaluate(model, small_testset)


def test_optimizer_state_round_trip(tmp_path, trained):
    model, history = trained
    ckpt = load_checkpoint(save_checkpoint(model, history.optimizer, tmp_path / "o.rcmk", step=7))
    opt = SGD(model.parameters(), lr=0.5)
    restore(ckpt, model, opt)
    assert opt.step_count == history.optimizer.step_count
    assert opt.lr == history.optimizer.lr
    for a, b in zip(opt.velocities, history.optimizer.velocities):
        assert_array_equal(a, b.astype(np.float32))
    assert ckpt.step == 7


def test_rng_state_round_trip(small_model):
    rng = np.random.default_rng(11)
    rng.random(5)
    ckpt = decode_checkpoint(encode_checkpoint(make_checkpoint(small_model, rng=rng)))
    assert ckpt.rng().random() == rng.random()


def test_flipped_payload_byte_fails_checksum(small_model):
    blob = bytearray(encode_checkpoint(make_checkpoint(small_model)))
    blob[-40] ^= 0xFF
    with pytest.raises(ChecksumError):
        decode_checkpoint(bytes(blob))


def test_unknown_version_is_rejected(small_model):
    blob = bytearray(encode_checkpoint(make_checkpoint(small_model)))
    blob[4:6] = struct.pack("<H", 2)
    with pytest.raises(VersionError):
        decode_checkpoint(bytes(blob))


def test_bad_magic_and_truncation(small_model):
    blob = encode_checkpoint(make_checkpoint(small_model))
    with pytest.raises(CheckpointError, match="magic"):
        decode_checkpoint(b"NOPE" + blob[4:])
    with pytest.raises(CheckpointError):
        decode_checkpoint(blob[:10])


def test_spec_mismatch_names_the_field(small_model, small_spec):
    ckpt = make_checkpoint(small_model)
    other = build_model(ModelSpec(**{**small_spec.model_dump(), "widths": [4, 16]}))
    with pytest.raises(SpecMismatchError, match="'widths'"):
        restore(ckpt, other)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError, match="not found"):
        load_checkpoint(tmp_path / "absent.rcmk")


def test_write_leaves_no_temp_files(tmp_path, small_model):
    save_checkpoint(small_model, None, tmp_path / "sub" / "x.rcmk")
    assert [p.name for p in (tmp_path / "sub").iterdir()] == ["x.rcmk"]
