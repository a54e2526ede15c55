from rconvmk.robustness.attacks import AttackKind, AttackSpec, attack, clean_accuracy, ffgsm, fgsm, pgd, robust_accuracy
from rconvmk.robustness.corruptions import SEVERITY_TABLES, CorruptionSpec, corrupt, corrupt_dataset
from rconvmk.robustness.metrics import ce_from_errors, corruption_error
from rconvmk.robustness.training import TrainHistory, TrainSettings, adversarial_train, train_model

__all__ = [
    "AttackKind", "AttackSpec", "CorruptionSpec", "SEVERITY_TABLES", "TrainHistory", "TrainSettings",
    "adversarial_train", "attack", "ce_from_errors", "clean_accuracy", "corrupt", "corrupt_dataset",
    "corruption_error", "ffgsm", "fgsm", "pgd", "robust_accuracy", "train_model",
]
