"""
Helpers shared by the task modules: dataset resolution, model loading and
attack specs built from config sections.
"""

import logging
from pathlib import Path

from rconvmk.config import AttackSection, ExperimentConfig, settings
from rconvmk.data.checkpoint import load_checkpoint, restore
from rconvmk.data.cifar import load_cifar
from rconvmk.data.datasets import Dataset, synthetic_dataset
from rconvmk.data.idx import load_mnist
from rconvmk.errors import ConfigError
from rconvmk.models.resnet import Model, build_model
from rconvmk.robustness.attacks import AttackSpec
from rconvmk.tasks.context import RunContext

logger = logging.getLogger(__name__)


def data_root(cfg: ExperimentConfig) -> Path:
    """``data.root`` if set, else the ``RCMK_DATA_DIR`` setting."""
    return Path(cfg.data.root or settings.DATA_DIR)


def load_dataset(cfg: ExperimentConfig, split: str) -> Dataset:
    """
    Load the configured dataset split and apply ``subset_n`` (train) or
    ``test_subset_n`` (test). The images must match the model's input shape.
    """
    data = cfg.data
    spec = cfg.resolved_spec()
    if data.dataset == "synthetic":
        n = data.synthetic_train_n if split == "train" else data.synthetic_test_n
        seed = data.seed if split == "train" else data.seed + 1
        dataset = synthetic_dataset(n, spec.input_shape, spec.num_classes, seed=seed, split=split)
    elif data.dataset == "mnist":
        dataset = load_mnist(data_root(cfg), split)
    else:
        dataset = load_cifar(data_root(cfg), 10 if data.dataset == "cifar10" else 100, split)

    if tuple(dataset.image_shape) != tuple(spec.input_shape):
        raise ConfigError(
            f"model.input_shape: {tuple(spec.input_shape)} does not match "
            f"{data.dataset} images {tuple(dataset.image_shape)}"
        )
    if dataset.num_classes > spec.num_classes:
        raise ConfigError(
            f"model.num_classes: {spec.num_classes} is smaller than the "
            f"{dataset.num_classes} classes of {data.dataset}"
        )

    n = data.subset_n if split == "train" else data.test_subset_n
    dataset = dataset.subset(n, seed=data.seed)
    logger.info("Loaded %s/%s: %d samples of shape %s", data.dataset, split, len(dataset), dataset.image_shape)
    return dataset


def configured_model(ctx: RunContext) -> Model:
    """
    Model for eval-type tasks: the resolved spec, weights from
    ``model.checkpoint`` when set. The checkpoint spec must agree.
    """
    cfg = ctx.cfg
    model = build_model(cfg.resolved_spec(), ctx.seed)
    if cfg.model.checkpoint:
        restore(load_checkpoint(cfg.model.checkpoint), model)
        logger.info("Restored weights from %s", cfg.model.checkpoint)
    else:
        ctx.warn("model.checkpoint is not set; using freshly initialized weights")
    model.eval()
    return model


def attack_spec(section: AttackSection, kind: str) -> AttackSpec:
    """AttackSpec for ``kind`` from the attack section; FGSM always steps by epsilon."""
    step = {"FGSM": None, "FFGSM": section.ffgsm_step_size, "PGD": section.step_size}[kind]
    return AttackSpec(
        kind=kind,
        epsilon=section.epsilon,
        step_size=step,
        num_steps=section.num_steps,
        random_start=section.random_start,
        seed=section.seed,
    )
