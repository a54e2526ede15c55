import gzip
import struct

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from rconvmk.data.cifar import IMAGE_BYTES, load_cifar
from rconvmk.data.datasets import Dataset, augment_batch, synthetic_dataset
from rconvmk.data.idx import IMAGES_MAGIC, LABELS_MAGIC, load_idx, load_mnist, read_idx
from rconvmk.errors import DatasetError


def idx_bytes(magic, array):
    array = np.asarray(array, dtype=np.uint8)
    return struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in array.shape) + array.tobytes()


TWO_IMAGES = np.array([[[0, 255], [128, 1]], [[10, 20], [30, 40]]], dtype=np.uint8)
TWO_LABELS = np.array([7, 3], dtype=np.uint8)


@pytest.fixture
def mnist_dir(tmp_path):
    (tmp_path / "t10k-images-idx3-ubyte").write_bytes(idx_bytes(IMAGES_MAGIC, TWO_IMAGES))
    (tmp_path / "t10k-labels-idx1-ubyte").write_bytes(idx_bytes(LABELS_MAGIC, TWO_LABELS))
    return tmp_path


# ============================================================
# IDX
# ============================================================
def test_handcrafted_idx(mnist_dir):
    data = load_idx(mnist_dir / "t10k-images-idx3-ubyte", mnist_dir / "t10k-labels-idx1-ubyte", split="test")
    assert data.images.shape == (2, 1, 2, 2)
    assert data.images.dtype == np.uint8
    assert_array_equal(data.labels, [7, 3])
    pixels = data.pixels()
    assert pixels.dtype == np.float32
    assert pixels[0, 0, 0, 0] == 0.0
    assert pixels[0, 0, 0, 1] == 1.0
    assert pixels[0, 0, 1, 0] == np.float32(128) / np.float32(255)


def test_gzipped_idx(tmp_path):
    path = tmp_path / "images.gz"
    with gzip.open(path, "wb") as fh:
        fh.write(idx_bytes(IMAGES_MAGIC, TWO_IMAGES))
    assert_array_equal(read_idx(path, IMAGES_MAGIC), TWO_IMAGES)


def test_bad_magic(tmp_path):
    path = tmp_path / "labels"
    path.write_bytes(idx_bytes(LABELS_MAGIC, TWO_LABELS))
    with pytest.raises(DatasetError, match="bad magic"):
        read_idx(path, IMAGES_MAGIC)


def test_truncated_payload(tmp_path):
    path = tmp_path / "images"
    path.write_bytes(idx_bytes(IMAGES_MAGIC, TWO_IMAGES)[:-3])
    with pytest.raises(DatasetError, match="truncated"):
        read_idx(path, IMAGES_MAGIC)
    path.write_bytes(b"\x00\x00")
    with pytest.raises(DatasetError, match="truncated"):
        read_idx(path, IMAGES_MAGIC)


def test_missing_idx_file(tmp_path):
    with pytest.raises(DatasetError):
        read_idx(tmp_path / "nope", IMAGES_MAGIC)


def test_image_label_count_mismatch(tmp_path):
    (tmp_path / "i").write_bytes(idx_bytes(IMAGES_MAGIC, TWO_IMAGES))
    (tmp_path / "l").write_bytes(idx_bytes(LABELS_MAGIC, TWO_LABELS[:1]))
    with pytest.raises(DatasetError):
        load_idx(tmp_path / "i", tmp_path / "l")


def test_load_mnist_finds_standard_names(mnist_dir):
    data = load_mnist(mnist_dir, "test")
    assert len(data) == 2
    assert data.split == "test"
    assert data.name == "mnist"
    with pytest.raises(DatasetError):
        load_mnist(mnist_dir, "train")


# ============================================================
# CIFAR
# ============================================================
def cifar_records(rng, n, label_bytes, num_classes):
    labels = rng.integers(0, num_classes, size=n)
    pixels = rng.integers(0, 256, size=(n, IMAGE_BYTES), dtype=np.uint8)
    rows = []
    for label, px in zip(labels, pixels):
        prefix = bytes([label // 5] * (label_bytes - 1) + [label])
        rows.append(prefix + px.tobytes())
    return b"".join(rows), labels, pixels


def test_cifar10_train_reads_all_five_files(tmp_path, rng):
    base = tmp_path / "cifar-10-batches-bin"
    base.mkdir()
    all_labels, all_pixels = [], []
    for i in range(1, 6):
        blob, labels, pixels = cifar_records(rng, 3, 1, 10)
        (base / f"data_batch_{i}.bin").write_bytes(blob)
        all_labels.append(labels)
        all_pixels.append(pixels)
    data = load_cifar(tmp_path, 10, "train")
    assert len(data) == 15
    assert_array_equal(data.labels, np.concatenate(all_labels))
    expected = np.concatenate(all_pixels).reshape(15, 3, 32, 32)
    assert_array_equal(data.images, expected)
    # red plane first, row-major
    assert data.images[0, 0, 0, 1] == all_pixels[0][0, 1]
    assert data.images[0, 1, 0, 0] == all_pixels[0][0, 1024]


def test_cifar100_uses_the_fine_label(tmp_path, rng):
    blob, labels, _ = cifar_records(rng, 4, 2, 100)
    (tmp_path / "test.bin").write_bytes(blob)
    data = load_cifar(tmp_path, 100, "test")
    assert_array_equal(data.labels, labels)
    assert data.num_classes == 100


def test_cifar_missing_files_are_named(tmp_path):
    with pytest.raises(DatasetError, match="data_batch_1.bin"):
        load_cifar(tmp_path, 10, "train")
    with pytest.raises(DatasetError):
        load_cifar(tmp_path, 20, "train")


def test_cifar_bad_record_length(tmp_path):
    (tmp_path / "test_batch.bin").write_bytes(b"\x01" * (IMAGE_BYTES + 5))
    with pytest.raises(DatasetError, match="record"):
        load_cifar(tmp_path, 10, "test")


# ============================================================
# Dataset
# ============================================================
def test_dataset_validation():
    images = np.zeros((2, 1, 2, 2), dtype=np.uint8)
    with pytest.raises(DatasetError):
        Dataset(images, [0, 5], 4)
    with pytest.raises(DatasetError):
        Dataset(images, [0], 4)
    with pytest.raises(DatasetError):
        Dataset(images.astype(np.float32) + 2.0, [0, 1], 4)
    with pytest.raises(DatasetError):
        Dataset(images[0], [0, 1], 4)
    with pytest.raises(DatasetError):
        Dataset(images, [0, 1], 4, split="val")


def test_subset_is_seeded_and_sorted():
    data = synthetic_dataset(50, (1, 4, 4), 5, seed=0)
    a = data.subset(10, seed=3)
    b = data.subset(10, seed=3)
    assert len(a) == 10
    assert_array_equal(a.images, b.images)
    assert data.subset(None) is data
    assert data.subset(100) is data
    with pytest.raises(DatasetError):
        data.subset(0)


def test_batches_cover_everything_once():
    data = synthetic_dataset(23, (1, 4, 4), 3, seed=0)
    seen = np.concatenate([y for _, y in data.batches(5, shuffle=True, seed=[1, 2])])
    assert sorted(seen.tolist()) == sorted(data.labels.tolist())
    sizes = [len(y) for _, y in data.batches(5)]
    assert sizes == [5, 5, 5, 5, 3]
    with pytest.raises(DatasetError):
        next(data.batches(0))


def test_augment_keeps_shape_and_range(rng):
    x = rng.random((4, 3, 6, 6)).astype(np.float32)
    out = augment_batch(x, np.random.default_rng(0), crop_padding=2)
    assert out.shape == x.shape
    assert out.dtype == np.float32
    assert 0.0 <= out.min() and out.max() <= 1.0
    assert_array_equal(augment_batch(x, np.random.default_rng(0), flip=False, crop_padding=0), x)


def test_synthetic_is_deterministic():
    a = synthetic_dataset(12, (1, 6, 6), 4, seed=2)
    b = synthetic_dataset(12, (1, 6, 6), 4, seed=2)
    c = synthetic_dataset(12, (1, 6, 6), 4, seed=3)
    assert_array_equal(a.images, b.images)
    assert not np.array_equal(a.images, c.images)
    assert np.bincount(a.labels).tolist() == [3, 3, 3, 3]
    with pytest.raises(DatasetError):
        synthetic_dataset(0)
