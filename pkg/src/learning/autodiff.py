"""
Reverse-Mode Differentiation Module for the Symmetry Toolkit

A minimal array-valued autodiff engine covering exactly the operations the
distance-biased attention model needs: broadcasting arithmetic, matrix
products, reductions, softmax, advanced-index lookups (embedding tables and
bias buckets) and a fused cross-entropy.

Each operation records its parents and a closure that pushes the output
gradient back; `Tensor.backward` walks the recorded graph in reverse
topological order.

Author: Symmetry Toolkit Team
Date: 2026-10-18
"""

import logging
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int]


class NoForwardError(RuntimeError):
    """Raised when backward is requested on a value with no recorded forward pass."""


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """
    An array with an optional gradient and the graph that produced it.

    Attributes:
        data: the numpy array value
        grad: accumulated gradient after backward (None until then)
        requires_grad: whether gradients flow into this value
        name: parameter name for leaves created from a model
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_op")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: Optional[str] = None,
        _parents: Tuple["Tensor", ...] = (),
        _op: str = "",
    ):
        self.data = np.asarray(data)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self._op = _op

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, op={self._op or 'leaf'}{label})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def _accumulate(self, grad: np.ndarray):
        if not self.requires_grad:
            return
        grad = np.asarray(grad, dtype=self.data.dtype) if np.issubdtype(self.data.dtype, np.floating) else grad
        self.grad = grad.copy() if self.grad is None else self.grad + grad

    @staticmethod
    def _lift(value: Union["Tensor", ArrayLike], like: "Tensor") -> "Tensor":
        if isinstance(value, Tensor):
            return value
        return Tensor(np.asarray(value, dtype=like.data.dtype))

    def _result(self, data: np.ndarray, parents: Tuple["Tensor", ...], op: str, backward) -> "Tensor":
        out = Tensor(data, requires_grad=any(p.requires_grad for p in parents), _parents=parents, _op=op)
        if out.requires_grad:
            out._backward = backward
        return out

    # arithmetic

    def __add__(self, other) -> "Tensor":
        other = Tensor._lift(other, self)

        def backward(g):
            self._accumulate(_unbroadcast(g, self.shape))
            other._accumulate(_unbroadcast(g, other.shape))

        return self._result(self.data + other.data, (self, other), "add", backward)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return self._result(-self.data, (self,), "neg", lambda g: self._accumulate(-g))

    def __sub__(self, other) -> "Tensor":
        return self + (-Tensor._lift(other, self))

    def __rsub__(self, other) -> "Tensor":
        return Tensor._lift(other, self) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = Tensor._lift(other, self)

        def backward(g):
            self._accumulate(_unbroadcast(g * other.data, self.shape))
            other._accumulate(_unbroadcast(g * self.data, other.shape))

        return self._result(self.data * other.data, (self, other), "mul", backward)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = Tensor._lift(other, self)

        def backward(g):
            self._accumulate(_unbroadcast(g / other.data, self.shape))
            other._accumulate(_unbroadcast(-g * self.data / (other.data * other.data), other.shape))

        return self._result(self.data / other.data, (self, other), "div", backward)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ValueError("matmul expects two matrices")

        def backward(g):
            self._accumulate(g @ other.data.T)
            other._accumulate(self.data.T @ g)

        return self._result(self.data @ other.data, (self, other), "matmul", backward)

    @property
    def T(self) -> "Tensor":
        return self._result(self.data.T, (self,), "transpose", lambda g: self._accumulate(g.T))

    def reshape(self, *shape: int) -> "Tensor":
        original = self.shape
        return self._result(
            self.data.reshape(*shape), (self,), "reshape", lambda g: self._accumulate(g.reshape(original))
        )

    # reductions

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        original = self.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, original))

        return self._result(self.data.sum(axis=axis, keepdims=keepdims), (self,), "sum", backward)

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # elementwise

    def exp(self) -> "Tensor":
        value = np.exp(self.data)
        return self._result(value, (self,), "exp", lambda g: self._accumulate(g * value))

    def log(self) -> "Tensor":
        return self._result(np.log(self.data), (self,), "log", lambda g: self._accumulate(g / self.data))

    def tanh(self) -> "Tensor":
        value = np.tanh(self.data)
        return self._result(value, (self,), "tanh", lambda g: self._accumulate(g * (1.0 - value * value)))

    def relu(self) -> "Tensor":
        mask = self.data > 0
        return self._result(np.where(mask, self.data, 0), (self,), "relu", lambda g: self._accumulate(g * mask))

    def sqrt(self) -> "Tensor":
        value = np.sqrt(self.data)
        return self._result(value, (self,), "sqrt", lambda g: self._accumulate(g * 0.5 / value))

    def astype(self, dtype) -> "Tensor":
        """Cast to another float dtype; the gradient is cast back on the way in."""
        dtype = np.dtype(dtype)
        if self.data.dtype == dtype:
            return self
        return self._result(self.data.astype(dtype), (self,), "cast", lambda g: self._accumulate(g))

    def softmax(self, axis: int = -1) -> "Tensor":
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        exps = np.exp(shifted)
        value = exps / exps.sum(axis=axis, keepdims=True)

        def backward(g):
            self._accumulate(value * (g - (g * value).sum(axis=axis, keepdims=True)))

        return self._result(value, (self,), "softmax", backward)

    # indexing

    def __getitem__(self, index) -> "Tensor":
        """Basic or advanced indexing; repeated indices accumulate gradient."""

        def backward(g):
            full = np.zeros_like(self.data)
            np.add.at(full, index, g)
            self._accumulate(full)

        return self._result(self.data[index], (self,), "index", backward)

    # graph traversal

    def _topological(self) -> List["Tensor"]:
        order: List[Tensor] = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self):
        """
        Accumulate d(self)/d(leaf) into every leaf that requires a gradient.

        Raises:
            NoForwardError: when self is not a scalar produced by a recorded
                forward pass
        """
        if self.data.size != 1:
            raise NoForwardError("backward needs a scalar loss")
        if not self.requires_grad:
            raise NoForwardError("loss was not produced by a forward pass over trainable parameters")
        self.grad = np.ones_like(self.data)
        for node in reversed(self._topological()):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def leaves(self) -> List["Tensor"]:
        return [node for node in self._topological() if not node._parents]


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)
    first = tensors[0]

    def backward(g):
        for tensor, start, stop in zip(tensors, bounds[:-1], bounds[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(int(start), int(stop))
            tensor._accumulate(g[tuple(index)])

    return first._result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), "concat", backward)


def cross_entropy(logits: Tensor, targets: Sequence[int]) -> Tensor:
    """
    Mean negative log-likelihood of integer targets under row-wise softmax.

    Args:
        logits: (rows x classes) scores
        targets: one class index per row
    """
    targets = np.asarray(targets, dtype=np.int64)
    rows = logits.shape[0]
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    value = -log_probs[np.arange(rows), targets].mean()

    def backward(g):
        probs = np.exp(log_probs)
        probs[np.arange(rows), targets] -= 1.0
        logits._accumulate(g * probs / rows)

    return logits._result(np.asarray(value, dtype=logits.dtype), (logits,), "cross_entropy", backward)
