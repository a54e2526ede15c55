"""
Shared fixtures: a small model spec that runs in milliseconds, synthetic
data matching it, and the MNIST root for the slow acceptance runs.
"""
import os

import numpy as np
import pytest

from rconvmk.data.datasets import synthetic_dataset
from rconvmk.data.idx import mnist_paths
from rconvmk.errors import DatasetError
from rconvmk.models.resnet import ModelSpec, build_model

SMALL_SHAPE = (1, 8, 8)
SMALL_CLASSES = 4


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_spec():
    return ModelSpec(widths=[4, 8], blocks_per_stage=1, num_classes=SMALL_CLASSES, input_shape=SMALL_SHAPE)


@pytest.fixture
def small_model(small_spec):
    return build_model(small_spec, seed=0)


@pytest.fixture
def small_trainset():
    return synthetic_dataset(32, SMALL_SHAPE, SMALL_CLASSES, seed=0, split="train")


@pytest.fixture
def small_testset():
    return synthetic_dataset(24, SMALL_SHAPE, SMALL_CLASSES, seed=1, split="test")


@pytest.fixture
def small_cli_args():
    """--set overrides that point the CLI at the small synthetic setup."""
    overrides = [
        "data.dataset=synthetic",
        "data.synthetic_train_n=32",
        "data.synthetic_test_n=24",
        "model.preset=custom",
        "model.widths=4,8",
        "model.input_shape=1,8,8",
        f"model.num_classes={SMALL_CLASSES}",
        "train.epochs=1",
        "train.batch_size=16",
        "attack.batch_size=16",
        "corruption.batch_size=16",
    ]
    args = []
    for item in overrides:
        args += ["--set", item]
    return args + ["--no-progress"]


@pytest.fixture(scope="session")
def mnist_root():
    root = os.environ.get("RCMK_DATA_DIR")
    if not root:
        pytest.skip("RCMK_DATA_DIR is not set")
    try:
        mnist_paths(root, "train")
        mnist_paths(root, "test")
    except DatasetError:
        pytest.skip(f"MNIST files not found under {root}")
    return root
