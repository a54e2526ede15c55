"""
Typed errors raised across rconvmk.

Every error carries a short ``code`` so the CLI can print a single
machine-parseable line (``rcmk-error[<code>]: <message>``).
"""


class RConvError(Exception):
    """Base class for all rconvmk errors."""

    code = "error"


# ============================================================
# Tensor engine
# ============================================================
class ShapeError(RConvError):
    code = "shape"


class DTypeError(RConvError):
    code = "dtype"


class TapeError(RConvError):
    """Backward on a non-scalar root, a missing tape, or a consumed tape."""

    code = "tape"


class GradcheckError(RConvError):
    code = "gradcheck"


class ArgumentError(RConvError, ValueError):
    """A scalar argument outside its valid range (negative tau, label id, ...)."""

    code = "argument"


# ============================================================
# Layers and blocks
# ============================================================
class PartitionError(RConvError):
    code = "partition"


class BlockConfigError(RConvError):
    code = "block-config"


# ============================================================
# Configuration / IO
# ============================================================
class ConfigError(RConvError):
    code = "config"


class DatasetError(RConvError):
    code = "dataset"


class CheckpointError(RConvError):
    code = "checkpoint"


class ChecksumError(CheckpointError):
    code = "checksum"


class VersionError(CheckpointError):
    code = "version"


class SpecMismatchError(CheckpointError):
    code = "spec-mismatch"


# ============================================================
# Robustness
# ============================================================
class AttackError(RConvError):
    code = "attack"


class CorruptionError(RConvError):
    code = "corruption"


class MetricError(RConvError):
    code = "metric"


class TrainingError(RConvError):
    """Non-finite loss during training."""

    code = "training"
