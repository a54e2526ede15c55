from rconvmk.data.checkpoint import (
    Checkpoint,
    load_checkpoint,
    load_model,
    restore,
    save_checkpoint,
)
from rconvmk.data.cifar import load_cifar
from rconvmk.data.datasets import Dataset, synthetic_dataset
from rconvmk.data.idx import load_idx, load_mnist

__all__ = [
    "Checkpoint", "Dataset", "load_checkpoint", "load_cifar", "load_idx", "load_mnist",
    "load_model", "restore", "save_checkpoint", "synthetic_dataset",
]
