"""
Tensor Engine
=============
Dense numpy-backed tensors with define-by-run reverse-mode autodiff.

Architecture:
    Function.apply(*tensors)  -> forward on raw arrays, output remembers a Node
    backward(root)            -> Tape.from_root(root) (inputs before outputs)
                              -> backward rules run in reverse, grads accumulate

Every forward pass records a fresh graph. A graph can be walked backward
exactly once; the nodes are marked consumed and their saved arrays dropped.

Only float32 (training) and float64 (verification) are supported. Binary ops
never mix the two: mixing raises DTypeError instead of silently upcasting.
"""

import threading
from contextlib import contextmanager
from typing import Any, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from rconvmk.errors import DTypeError, ShapeError, TapeError

SUPPORTED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

Scalar = Union[int, float]
ArrayLike = Union["Tensor", np.ndarray, Sequence, Scalar]

# Grad mode is per thread: evaluation workers run under no_grad() without
# affecting a training thread.
_grad_mode = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording in the current thread."""
    previous = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


def as_dtype(dtype: Any) -> np.dtype:
    dt = np.dtype(dtype)
    if dt not in SUPPORTED_DTYPES:
        raise DTypeError(f"unsupported dtype {dt}; expected float32 or float64")
    return dt


# ============================================================
# Tensor
# ============================================================
class Tensor:
    """
    N-dimensional array with optional gradient tracking.

    Activations use NCHW layout. ``grad`` (when present) is a Tensor of the
    same shape and dtype as the value.
    """

    def __init__(self, data: ArrayLike, dtype: Any = None, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is None:
            dtype = arr.dtype if arr.dtype in SUPPORTED_DTYPES else np.float32
        self.data: np.ndarray = np.ascontiguousarray(arr, dtype=as_dtype(dtype))
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[Tensor] = None
        self._node: Optional[Node] = None

    # ---------- introspection ----------
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __len__(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # ---------- arithmetic ----------
    def __add__(self, other: ArrayLike) -> "Tensor":
        return Add.apply(self, _lift(other, self))

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return Add.apply(_lift(other, self), self)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return Sub.apply(self, _lift(other, self))

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return Sub.apply(_lift(other, self), self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return Mul.apply(self, _lift(other, self))

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return Mul.apply(_lift(other, self), self)

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        return Div.apply(self, _lift(other, self))

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return Div.apply(_lift(other, self), self)

    def __neg__(self) -> "Tensor":
        return Neg.apply(self)

    def __pow__(self, exponent: Scalar) -> "Tensor":
        return Pow.apply(self, exponent=float(exponent))

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        return GetItem.apply(self, index=index)

    # ---------- unary ----------
    def relu(self) -> "Tensor":
        return Relu.apply(self)

    def sign(self) -> "Tensor":
        return Sign.apply(self)

    def abs(self) -> "Tensor":
        return Abs.apply(self)

    def clamp(self, lo: Optional[float] = None, hi: Optional[float] = None) -> "Tensor":
        return Clamp.apply(self, lo=lo, hi=hi)

    def exp(self) -> "Tensor":
        return Exp.apply(self)

    def log(self) -> "Tensor":
        return Log.apply(self)

    # ---------- reductions / structure ----------
    def sum(self, axis: Union[None, int, Tuple[int, ...]] = None, keepdims: bool = False) -> "Tensor":
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Union[None, int, Tuple[int, ...]] = None, keepdims: bool = False) -> "Tensor":
        return Mean.apply(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: Union[int, Sequence[int]]) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=tuple(shape))

    def transpose(self, *axes: int) -> "Tensor":
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        return Transpose.apply(self, axes=tuple(axes))

    @property
    def T(self) -> "Tensor":
        return self.transpose()


class Parameter(Tensor):
    """A leaf tensor that always tracks gradients."""

    def __init__(self, data: ArrayLike, dtype: Any = None):
        super().__init__(data, dtype=dtype, requires_grad=True)

    def __repr__(self) -> str:
        return f"Parameter(shape={self.shape}, dtype={self.dtype})"


def _lift(value: ArrayLike, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype))


def tensor(data: ArrayLike, dtype: Any = None, requires_grad: bool = False) -> Tensor:
    return Tensor(data, dtype=dtype, requires_grad=requires_grad)


# ============================================================
# Graph recording
# ============================================================
class Node:
    """One recorded operation: the rule that produced a tensor and its inputs."""

    __slots__ = ("fn", "inputs", "consumed")

    def __init__(self, fn: "Function", inputs: Tuple[Tensor, ...]):
        self.fn = fn
        self.inputs = inputs
        self.consumed = False


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement ``forward`` on numpy arrays (keyword arguments are
    static configuration) and ``backward`` returning one gradient array (or
    None) per tensor input.
    """

    def __init__(self):
        self.saved: Tuple[Any, ...] = ()

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError

    def save(self, *values: Any) -> None:
        self.saved = values

    @classmethod
    def apply(cls, *inputs: Tensor, **kwargs: Any) -> Tensor:
        dtypes = {t.dtype for t in inputs}
        if len(dtypes) > 1:
            raise DTypeError(f"{cls.__name__}: mixed dtypes {sorted(str(d) for d in dtypes)}")
        fn = cls()
        out_data = fn.forward(*(t.data for t in inputs), **kwargs)
        track = is_grad_enabled() and any(t.requires_grad for t in inputs)
        out = Tensor(out_data, dtype=inputs[0].dtype, requires_grad=track)
        if track:
            out._node = Node(fn, tuple(inputs))
        return out


class Tape:
    """
    The operations reachable from a root, in topological order.

    ``tensors`` lists every reachable tensor with each tensor's inputs before
    it; ``nodes`` are the recorded operations in the same order.
    """

    def __init__(self, tensors: List[Tensor]):
        self.tensors = tensors

    @property
    def nodes(self) -> List[Node]:
        return [t._node for t in self.tensors if t._node is not None]

    @property
    def consumed(self) -> bool:
        return any(node.consumed for node in self.nodes)

    @classmethod
    def from_root(cls, root: Tensor) -> "Tape":
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(root, False)]
        while stack:
            t, expanded = stack.pop()
            if expanded:
                order.append(t)
                continue
            if id(t) in visited:
                continue
            visited.add(id(t))
            stack.append((t, True))
            if t._node is not None:
                for parent in t._node.inputs:
                    if id(parent) not in visited:
                        stack.append((parent, False))
        return cls(order)


def backward(root: Tensor, inputs: Optional[Sequence[Tensor]] = None) -> None:
    """
    Accumulate d(root)/d(t) into ``t.grad`` for every reachable tensor t that
    requires grad. Gradients add across fan-out and across calls.

    With ``inputs`` only those tensors receive ``.grad``; every other tensor
    (model parameters included) is left untouched.

    Raises:
        TapeError: root is not scalar-shaped, nothing was recorded, or the
            recorded graph was already walked backward.
    """
    if root.size != 1:
        raise TapeError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        raise TapeError("backward on a tensor with no tape (requires_grad=False)")

    tape = Tape.from_root(root)
    if tape.consumed:
        raise TapeError("backward on a consumed tape; run a new forward pass first")

    targets = None if inputs is None else {id(t) for t in inputs}
    grads = {id(root): np.ones_like(root.data)}
    for t in reversed(tape.tensors):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if t.requires_grad and (targets is None or id(t) in targets):
            t.grad = Tensor(g, dtype=t.dtype) if t.grad is None else Tensor(t.grad.data + g, dtype=t.dtype)
        node = t._node
        if node is None:
            continue
        input_grads = node.fn.backward(g)
        for parent, pg in zip(node.inputs, input_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg

    for node in tape.nodes:
        node.consumed = True
        node.fn.saved = ()


# ============================================================
# Broadcasting helpers
# ============================================================
def broadcast_shape(a: Tuple[int, ...], b: Tuple[int, ...]) -> Tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(a, b))
    except ValueError:
        raise ShapeError(f"shapes {a} and {b} are not broadcastable") from None


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ============================================================
# Elementwise ops
# ============================================================
class Add(Function):
    def forward(self, a, b):
        broadcast_shape(a.shape, b.shape)
        self.save(a.shape, b.shape)
        return a + b

    def backward(self, grad):
        sa, sb = self.saved
        return unbroadcast(grad, sa), unbroadcast(grad, sb)


class Sub(Function):
    def forward(self, a, b):
        broadcast_shape(a.shape, b.shape)
        self.save(a.shape, b.shape)
        return a - b

    def backward(self, grad):
        sa, sb = self.saved
        return unbroadcast(grad, sa), unbroadcast(-grad, sb)


class Mul(Function):
    def forward(self, a, b):
        broadcast_shape(a.shape, b.shape)
        self.save(a, b)
        return a * b

    def backward(self, grad):
        a, b = self.saved
        return unbroadcast(grad * b, a.shape), unbroadcast(grad * a, b.shape)


class Div(Function):
    def forward(self, a, b):
        broadcast_shape(a.shape, b.shape)
        self.save(a, b)
        return a / b

    def backward(self, grad):
        a, b = self.saved
        return unbroadcast(grad / b, a.shape), unbroadcast(-grad * a / (b * b), b.shape)


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class Pow(Function):
    def forward(self, a, exponent: float):
        self.save(a, exponent)
        return a ** exponent

    def backward(self, grad):
        a, exponent = self.saved
        return (grad * exponent * a ** (exponent - 1),)


class Exp(Function):
    def forward(self, a):
        out = np.exp(a)
        self.save(out)
        return out

    def backward(self, grad):
        (out,) = self.saved
        return (grad * out,)


class Log(Function):
    def forward(self, a):
        self.save(a)
        return np.log(a)

    def backward(self, grad):
        (a,) = self.saved
        return (grad / a,)


class Relu(Function):
    # relu'(0) = 0
    def forward(self, a):
        mask = a > 0
        self.save(mask)
        return np.where(mask, a, 0).astype(a.dtype, copy=False)

    def backward(self, grad):
        (mask,) = self.saved
        return (grad * mask,)


class Sign(Function):
    def forward(self, a):
        self.save(a.shape)
        return np.sign(a)

    def backward(self, grad):
        return (np.zeros(self.saved[0], dtype=grad.dtype),)


class Abs(Function):
    def forward(self, a):
        self.save(np.sign(a))
        return np.abs(a)

    def backward(self, grad):
        (sgn,) = self.saved
        return (grad * sgn,)


class Clamp(Function):
    # Gradient passes only strictly inside (lo, hi).
    def forward(self, a, lo: Optional[float] = None, hi: Optional[float] = None):
        inside = np.ones(a.shape, dtype=bool)
        if lo is not None:
            inside &= a > lo
        if hi is not None:
            inside &= a < hi
        self.save(inside)
        return np.clip(a, lo, hi)

    def backward(self, grad):
        (inside,) = self.saved
        return (grad * inside,)


def elementwise(op: str, a: Tensor, b: Optional[ArrayLike] = None,
                lo: Optional[float] = None, hi: Optional[float] = None) -> Tensor:
    """
    Named elementwise dispatch: add, sub, mul, relu, sign, abs, clamp.

    Raises:
        ShapeError: binary operands do not broadcast.
        DTypeError: binary operands have different dtypes.
    """
    binary = {"add": Add, "sub": Sub, "mul": Mul}
    unary = {"relu": Relu, "sign": Sign, "abs": Abs}
    if op in binary:
        if b is None:
            raise ShapeError(f"{op} needs two operands")
        return binary[op].apply(a, _lift(b, a))
    if op in unary:
        return unary[op].apply(a)
    if op == "clamp":
        return Clamp.apply(a, lo=lo, hi=hi)
    raise ValueError(f"unknown elementwise op {op!r}")


# ============================================================
# Linear algebra and structural ops
# ============================================================
class MatMul(Function):
    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2:
            raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
        self.save(a, b)
        return a @ b

    def backward(self, grad):
        a, b = self.saved
        return grad @ b.T, a.T @ grad


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return MatMul.apply(a, b)


def _normalize_axis(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


class Sum(Function):
    def forward(self, a, axis=None, keepdims: bool = False):
        axes = _normalize_axis(axis, a.ndim)
        self.save(a.shape, axes, keepdims)
        return np.sum(a, axis=axes, keepdims=keepdims)

    def backward(self, grad):
        shape, axes, keepdims = self.saved
        if not keepdims:
            grad = np.expand_dims(grad, axes)
        return (np.broadcast_to(grad, shape),)


class Mean(Function):
    def forward(self, a, axis=None, keepdims: bool = False):
        axes = _normalize_axis(axis, a.ndim)
        count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
        self.save(a.shape, axes, keepdims, count)
        return np.mean(a, axis=axes, keepdims=keepdims)

    def backward(self, grad):
        shape, axes, keepdims, count = self.saved
        if not keepdims:
            grad = np.expand_dims(grad, axes)
        return (np.broadcast_to(grad / count, shape),)


class Reshape(Function):
    def forward(self, a, shape: Tuple[int, ...]):
        self.save(a.shape)
        try:
            return a.reshape(shape)
        except ValueError:
            raise ShapeError(f"cannot reshape {a.shape} to {shape}") from None

    def backward(self, grad):
        return (grad.reshape(self.saved[0]),)


class Transpose(Function):
    def forward(self, a, axes: Tuple[int, ...]):
        self.save(axes)
        return np.transpose(a, axes)

    def backward(self, grad):
        (axes,) = self.saved
        return (np.transpose(grad, np.argsort(axes)),)


def _is_basic_index(index: Any) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, slice, type(Ellipsis), type(None))) for i in items)


class GetItem(Function):
    def forward(self, a, index: Any):
        self.save(a.shape, a.dtype, index)
        return a[index]

    def backward(self, grad):
        shape, dtype, index = self.saved
        out = np.zeros(shape, dtype=dtype)
        if _is_basic_index(index):
            out[index] = grad
        else:
            np.add.at(out, index, grad)
        return (out,)


class Concat(Function):
    def forward(self, *arrays, axis: int = 0):
        self.save(axis, [a.shape[axis] for a in arrays])
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        axis, sizes = self.saved
        cuts = np.cumsum(sizes)[:-1]
        return tuple(np.split(grad, cuts, axis=axis))


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat of an empty sequence")
    if len(tensors) == 1:
        return tensors[0]
    return Concat.apply(*tensors, axis=axis)
