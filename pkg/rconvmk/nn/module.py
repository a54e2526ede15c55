"""
Module base class
-----------------
Parameter/buffer/submodule registry shared by every layer, block and model.

Parameters are ``Parameter`` tensors (trained); buffers are plain numpy
arrays registered with ``register_buffer`` (running statistics). Names are
dotted paths (``stages.0.blocks.1.conv1.t_c.weight``) in registration order,
which is also the order used by checkpoints.
"""

from collections import OrderedDict
from contextlib import contextmanager
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from rconvmk.engine.tensor import Parameter, Tensor, as_dtype
from rconvmk.errors import ShapeError


class Module:
    def __init__(self):
        object.__setattr__(self, "_parameters", OrderedDict())
        object.__setattr__(self, "_buffers", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if "_parameters" not in self.__dict__:
            raise AttributeError("Module.__init__() must run before assigning attributes")
        if isinstance(value, Parameter):
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        elif name in self._buffers:
            self._buffers[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def forward(self, *args, **kwargs):
        raise NotImplementedError(f"{type(self).__name__} does not implement forward")

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    # ---------- traversal ----------
    def named_modules(self, prefix: str = "") -> Iterator[Tuple[str, "Module"]]:
        yield prefix, self
        for name, module in self._modules.items():
            yield from module.named_modules(f"{prefix}.{name}" if prefix else name)

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for mod_name, module in self.named_modules(prefix):
            for name, param in module._parameters.items():
                yield (f"{mod_name}.{name}" if mod_name else name), param

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for mod_name, module in self.named_modules(prefix):
            for name, buf in module._buffers.items():
                yield (f"{mod_name}.{name}" if mod_name else name), buf

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    # ---------- mode ----------
    def train(self, mode: bool = True) -> "Module":
        for _, module in self.named_modules():
            object.__setattr__(module, "training", mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    @property
    def mode(self) -> str:
        return "train" if self.training else "eval"

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    # ---------- state ----------
    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        state: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for name, p in self.named_parameters():
            state[name] = p.data.copy()
        for name, buf in self.named_buffers():
            state[name] = np.array(buf, copy=True)
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        expected = set(self.state_dict().keys())
        missing = sorted(expected - set(state))
        unexpected = sorted(set(state) - expected)
        if missing or unexpected:
            raise ShapeError(f"state mismatch: missing={missing[:3]} unexpected={unexpected[:3]}")
        for mod_name, module in self.named_modules():
            for name, p in module._parameters.items():
                key = f"{mod_name}.{name}" if mod_name else name
                p.data = _checked_copy(key, state[key], p.data)
            for name, buf in list(module._buffers.items()):
                key = f"{mod_name}.{name}" if mod_name else name
                setattr(module, name, _checked_copy(key, state[key], buf))

    def to(self, dtype) -> "Module":
        dt = as_dtype(dtype)
        for _, module in self.named_modules():
            for p in module._parameters.values():
                p.data = p.data.astype(dt)
                p.grad = None
            for name, buf in list(module._buffers.items()):
                setattr(module, name, np.asarray(buf).astype(dt))
        return self

    @property
    def dtype(self) -> Optional[np.dtype]:
        for p in self.parameters():
            return p.dtype
        return None


def _checked_copy(key: str, value: np.ndarray, like: np.ndarray) -> np.ndarray:
    value = np.asarray(value)
    if value.shape != like.shape:
        raise ShapeError(f"{key}: shape {value.shape} does not match {like.shape}")
    return value.astype(like.dtype, copy=True)


class ModuleList(Module):
    """Ordered container; children are named "0", "1", ..."""

    def __init__(self, modules=()):
        super().__init__()
        for module in modules:
            self.append(module)

    def append(self, module: Module) -> None:
        setattr(self, str(len(self._modules)), module)

    def __getitem__(self, index: int) -> Module:
        return list(self._modules.values())[index]

    def __iter__(self):
        return iter(self._modules.values())

    def __len__(self) -> int:
        return len(self._modules)


class Identity(Module):
    def forward(self, x: Tensor) -> Tensor:
        return x


@contextmanager
def eval_mode(module: Module) -> Iterator[Module]:
    """Run the body with ``module`` in eval mode; each submodule gets its own mode back."""
    saved = [(m, m.training) for _, m in module.named_modules()]
    module.eval()
    try:
        yield module
    finally:
        for m, training in saved:
            object.__setattr__(m, "training", training)


# ============================================================
# Initializers
# ============================================================
def he_normal(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, dtype=np.float32) -> np.ndarray:
    """He (Kaiming) normal init: std = sqrt(2 / fan_in)."""
    return (rng.standard_normal(shape) * np.sqrt(2.0 / max(fan_in, 1))).astype(dtype)
