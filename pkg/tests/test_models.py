import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from pydantic import ValidationError

from tests.conftest import SMALL_CLASSES, SMALL_SHAPE
from rconvmk.blocks.rconv import RConvBlock
from rconvmk.data.datasets import Dataset
from rconvmk.engine.tensor import Tensor
from rconvmk.errors import ArgumentError, DatasetError, ShapeError
from rconvmk.models.resnet import (
    ModelSpec,
    build_model,
    conv_sites,
    count_model_params,
    evaluate,
    forward,
    preset_spec,
    site_seed,
)


def test_forward_shape(small_model, rng):
    x = Tensor(rng.random((3,) + SMALL_SHAPE).astype(np.float32))
    logits = forward(small_model, x, mode="eval")
    assert logits.shape == (3, SMALL_CLASSES)
    assert small_model.mode == "eval"
    with pytest.raises(ArgumentError):
        forward(small_model, x, mode="infer")


def test_wrong_input_shape(small_model):
    with pytest.raises(ShapeError):
        small_model(Tensor(np.zeros((2, 3, 8, 8), dtype=np.float32)))
    with pytest.raises(ShapeError):
        small_model(Tensor(np.zeros((1, 8, 8), dtype=np.float32)))


def test_identical_images_give_identical_logits(small_model, rng):
    image = rng.random((1,) + SMALL_SHAPE).astype(np.float32)
    logits = forward(small_model, Tensor(np.concatenate([image, image])), mode="eval").data
    assert_allclose(logits[0], logits[1], rtol=1e-5, atol=1e-6)


def test_permuting_the_batch_permutes_the_logits(small_model, rng):
    x = rng.random((6,) + SMALL_SHAPE).astype(np.float32)
    perm = rng.permutation(6)
    logits = forward(small_model, Tensor(x), mode="eval").data
    permuted = forward(small_model, Tensor(x[perm]), mode="eval").data
    assert_allclose(permuted, logits[perm], rtol=1e-5, atol=1e-6)


def test_eval_forward_is_pure(small_model, rng):
    pixels = rng.random((4,) + SMALL_SHAPE).astype(np.float32)
    x = Tensor(pixels.copy())
    first = forward(small_model, x, mode="eval").data.copy()
    assert_array_equal(forward(small_model, x, mode="eval").data, first)
    assert_array_equal(x.data, pixels)


@pytest.mark.parametrize("widths", [[16], [16, 32], [16, 32, 64]])
def test_multi_kernel_model_is_smaller_than_conv2d(widths):
    base = {"widths": widths, "num_classes": 10, "input_shape": (3, 32, 32)}
    mk = build_model(ModelSpec(**base))
    conv = build_model(ModelSpec(**base, variant="Conv2d"))
    assert mk.num_parameters() <= conv.num_parameters()


def test_conv2d_swap_changes_only_block_sites(small_spec):
    mk = build_model(small_spec, seed=5)
    conv = build_model(ModelSpec(**{**small_spec.model_dump(), "variant": "Conv2d"}), seed=5)
    block_sites = tuple(f"{name}." for name, site in conv_sites(mk).items() if isinstance(site, RConvBlock))
    mk_params = dict(mk.named_parameters())
    conv_params = dict(conv.named_parameters())

    changed = set(mk_params) ^ set(conv_params)
    assert changed
    assert all(name.startswith(block_sites) for name in changed)
    for name in set(mk_params) & set(conv_params):
        if not name.startswith(block_sites):
            assert_array_equal(mk_params[name].data, conv_params[name].data)
    assert conv.stages[0].blocks[0].conv1.variant.value == "Conv2d"


def test_same_seed_same_model(small_spec):
    a = build_model(small_spec, seed=3).state_dict()
    b = build_model(small_spec, seed=3).state_dict()
    assert list(a) == list(b)
    for key in a:
        assert_array_equal(a[key], b[key])


def test_site_seed_differs_per_site():
    assert site_seed(0, "stem") != site_seed(0, "head")
    assert site_seed(0, "stem") == site_seed(0, "stem")
    assert site_seed(1, "stem")[0] == 1


def test_evaluate_is_independent_of_workers(small_model, small_testset):
    one = evaluate(small_model, small_testset, batch_size=5, workers=1)
    two = evaluate(small_model, small_testset, batch_size=5, workers=2)
    assert one == two
    assert one["n"] == len(small_testset)
    assert 0.0 <= one["top1_error"] <= 100.0
    assert one["top5_error"] is None
    assert small_model.mode == "train"

    small_model.eval()
    evaluate(small_model, small_testset, batch_size=5)
    assert small_model.mode == "eval"


def test_evaluate_reports_top5_for_ten_classes():
    spec = ModelSpec(widths=[4], num_classes=10, input_shape=SMALL_SHAPE)
    model = build_model(spec)
    data = Dataset(np.zeros((6,) + SMALL_SHAPE, dtype=np.uint8), np.arange(6), 10)
    result = evaluate(model, data)
    assert result["top5_error"] is not None
    assert result["top5_error"] <= result["top1_error"]


def test_evaluate_empty_dataset(small_model):
    empty = Dataset(np.zeros((0,) + SMALL_SHAPE, dtype=np.uint8), np.zeros(0), SMALL_CLASSES)
    with pytest.raises(DatasetError):
        evaluate(small_model, empty)


def test_presets():
    tiny = preset_spec("tiny")
    assert tiny.widths == [8, 16, 32]
    assert tiny.input_shape == (1, 28, 28)
    small = preset_spec("small", variant="DMK")
    assert small.blocks_per_stage == 2
    assert small.variant.value == "DMK"
    with pytest.raises(ArgumentError):
        preset_spec("huge")


def test_spec_validation():
    with pytest.raises(ValidationError):
        ModelSpec(widths=[16, 8])
    with pytest.raises(ValidationError):
        ModelSpec(widths=[])
    with pytest.raises(ValidationError):
        ModelSpec(widths=[8], input_shape=(0, 8, 8))
    with pytest.raises(ValidationError):
        ModelSpec(widths=[8], depth=3)


def test_conv_sites(small_model):
    names = list(conv_sites(small_model))
    assert names == [
        "stem",
        "stages.0.blocks.0.conv1",
        "stages.0.blocks.0.conv2",
        "stages.1.blocks.0.conv1",
        "stages.1.blocks.0.conv2",
        "stages.1.blocks.0.shortcut",
        "head",
    ]
    assert isinstance(conv_sites(small_model)["stages.1.blocks.0.conv1"], RConvBlock)


def test_count_model_params(small_model):
    rows = count_model_params(small_model)
    assert rows[-1]["site"] == "total"
    assert rows[-1]["total"] == small_model.num_parameters()
    blocks = [r for r in rows if r["variant"] == "MK" and r["site"] != "total"]
    assert len(blocks) == 4
    assert all(r["extra_vs_lst"] == 104 for r in blocks)


def test_no_skip_model_has_no_shortcut(small_spec, rng):
    model = build_model(ModelSpec(**{**small_spec.model_dump(), "skip": False}))
    assert "stages.1.blocks.0.shortcut" not in conv_sites(model)
    x = Tensor(rng.random((2,) + SMALL_SHAPE).astype(np.float32))
    assert model(x).shape == (2, SMALL_CLASSES)
