from rconvmk.nn.conv import Conv2d, Conv2dParams, conv2d, conv2d_forward, same_padding
from rconvmk.nn.functional import cross_entropy, global_avg_pool, linear_forward, relu, soft_threshold
from rconvmk.nn.linear import Linear, ReLU
from rconvmk.nn.module import Identity, Module, ModuleList, eval_mode, he_normal
from rconvmk.nn.norm import (
    BatchNorm2d,
    NSTState,
    SampleNorm,
    SoftThreshold,
    batch_norm,
    make_denoiser,
    nst_forward,
    sample_norm,
)
from rconvmk.nn.optim import SGD, MultiStepLR, sgd_step

__all__ = [
    "BatchNorm2d", "Conv2d", "Conv2dParams", "Identity", "Linear", "Module", "ModuleList",
    "MultiStepLR", "NSTState", "ReLU", "SGD", "SampleNorm", "SoftThreshold",
    "batch_norm", "conv2d", "conv2d_forward", "cross_entropy", "eval_mode", "global_avg_pool",
    "he_normal", "linear_forward", "make_denoiser", "nst_forward", "relu", "same_padding",
    "sample_norm", "sgd_step", "soft_threshold",
]
