"""
Training loops: standard and adversarial.

Adversarial training replaces each minibatch by its attack output before the
step. The attack runs in eval mode and draws from its own RNG, so an attack
that is the identity (eps = 0) reproduces standard training exactly.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from tqdm import tqdm

from rconvmk.data.datasets import Dataset
from rconvmk.engine.tensor import Tensor, backward
from rconvmk.errors import DatasetError, TrainingError
from rconvmk.models.resnet import Model
from rconvmk.nn.functional import cross_entropy
from rconvmk.nn.optim import SGD, MultiStepLR
from rconvmk.robustness.attacks import AttackSpec, attack

logger = logging.getLogger(__name__)


@dataclass
class TrainSettings:
    """Optimization hyperparameters (mirrors the ``train`` config section)."""

    epochs: int = 5
    batch_size: int = 64
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 0.0002
    milestones: List[int] = field(default_factory=list)
    gamma: float = 0.1
    augment: bool = False
    crop_padding: int = 4

    @classmethod
    def from_section(cls, section) -> "TrainSettings":
        return cls(**{name: getattr(section, name) for name in cls.__dataclass_fields__})


@dataclass
class TrainHistory:
    steps: List[Dict[str, float]] = field(default_factory=list)
    optimizer: Optional[SGD] = None
    rng: Optional[np.random.Generator] = None

    def record(self, step: int, epoch: int, loss: float, lr: float) -> None:
        self.steps.append({"step": step, "epoch": epoch, "loss": loss, "lr": lr})

    @property
    def losses(self) -> List[float]:
        return [row["loss"] for row in self.steps]

    @property
    def final_loss(self) -> Optional[float]:
        return self.steps[-1]["loss"] if self.steps else None


def train_model(
    model: Model,
    dataset: Dataset,
    settings: TrainSettings,
    attack_spec: Optional[AttackSpec] = None,
    seed: int = 0,
    optimizer: Optional[SGD] = None,
    progress: bool = True,
) -> TrainHistory:
    """
    SGD with momentum and weight decay under a multi-step schedule.

    Epoch e shuffles with an RNG keyed by (seed, e). With ``attack_spec`` each
    batch is replaced by its attack output first (adversarial training).
    """
    if len(dataset) == 0:
        raise DatasetError("cannot train on an empty dataset")
    opt = optimizer or SGD(model.parameters(), settings.lr, settings.momentum, settings.weight_decay)
    schedule = MultiStepLR(opt, settings.milestones, settings.gamma)
    attack_rng = np.random.default_rng([seed, 0xA77AC])
    history = TrainHistory(optimizer=opt, rng=attack_rng)
    step = opt.step_count

    for epoch in range(settings.epochs):
        lr = schedule.set_epoch(epoch)
        batches = dataset.batches(settings.batch_size, shuffle=True, seed=[seed, epoch],
                                  augment=settings.augment, crop_padding=settings.crop_padding)
        n_batches = math.ceil(len(dataset) / settings.batch_size)
        bar = tqdm(batches, total=n_batches, desc=f"epoch {epoch + 1}/{settings.epochs}",
                   disable=None if progress else True)
        for x, y in bar:
            if attack_spec is not None:
                x = attack(model, x, y, attack_spec, attack_rng)

            model.train()
            loss = cross_entropy(model(Tensor(x, dtype=model.dtype)), y)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss {value} at step {step} (epoch {epoch})")
            opt.zero_grad()
            backward(loss)
            opt.step()

            history.record(step, epoch, value, lr)
            step += 1
            bar.set_postfix(loss=f"{value:.4f}")
        logger.info("epoch %d/%d: mean loss %.4f (lr %.4g)", epoch + 1, settings.epochs,
                    float(np.mean([r["loss"] for r in history.steps if r["epoch"] == epoch])), lr)
    return history


def adversarial_train(
    model: Model,
    trainset: Dataset,
    attack_spec: AttackSpec,
    settings: TrainSettings,
    seed: int = 0,
    optimizer: Optional[SGD] = None,
    progress: bool = True,
) -> TrainHistory:
    """``train_model`` on attack-perturbed minibatches."""
    return train_model(model, trainset, settings, attack_spec, seed, optimizer, progress)
