from rconvmk.engine.tensor import (
    Function,
    Parameter,
    Tape,
    Tensor,
    backward,
    concat,
    elementwise,
    is_grad_enabled,
    matmul,
    no_grad,
    tensor,
)
from rconvmk.engine.gradcheck import GradcheckReport, gradcheck

__all__ = [
    "Function",
    "GradcheckReport",
    "Parameter",
    "Tape",
    "Tensor",
    "backward",
    "concat",
    "elementwise",
    "gradcheck",
    "is_grad_enabled",
    "matmul",
    "no_grad",
    "tensor",
]
