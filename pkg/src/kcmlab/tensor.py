"""Dense float64 tensors with reverse-mode automatic differentiation.

Every op that touches a tensor with ``requires_grad`` records a node holding
its parents and a closure mapping the output gradient to parent gradients.
:meth:`Tensor.backward` orders those nodes topologically (this ordering is
the tape) and visits each exactly once in reverse.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, ShapeError

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _as_array(value) -> np.ndarray:
    return np.array(value, dtype=np.float64, copy=True) if not isinstance(value, np.ndarray) \
        else np.ascontiguousarray(value, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.name = name

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- graph construction -----------------------------------------------
    @staticmethod
    def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.name = None
        out.requires_grad = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf that
        requires grad. ``self`` must be a scalar unless ``grad`` is given."""
        if grad is None:
            if self.data.size != 1:
                raise ContractError(f"backward() needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        if not self.requires_grad:
            raise ContractError("loss is not connected to any tensor that requires grad")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # -- arithmetic ---------------------------------------------------------
    def __add__(self, other) -> Tensor:
        other = ensure_tensor(other)
        a_shape, b_shape = self.shape, other.shape
        return Tensor._make(
            self.data + other.data, (self, other),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)),
        )

    __radd__ = __add__

    def __sub__(self, other) -> Tensor:
        other = ensure_tensor(other)
        a_shape, b_shape = self.shape, other.shape
        return Tensor._make(
            self.data - other.data, (self, other),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)),
        )

    def __rsub__(self, other) -> Tensor:
        return ensure_tensor(other) - self

    def __mul__(self, other) -> Tensor:
        other = ensure_tensor(other)
        a, b = self.data, other.data
        return Tensor._make(
            a * b, (self, other),
            lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other) -> Tensor:
        other = ensure_tensor(other)
        a, b = self.data, other.data
        return Tensor._make(
            a / b, (self, other),
            lambda g: (_unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)),
        )

    def __neg__(self) -> Tensor:
        return Tensor._make(-self.data, (self,), lambda g: (-g,))

    def __matmul__(self, other) -> Tensor:
        return matmul(self, other)

    # -- reductions / reshaping ------------------------------------------
    def sum(self, axis: int | None = None) -> Tensor:
        shape = self.shape
        if axis is None:
            return Tensor._make(np.asarray(self.data.sum()), (self,),
                                lambda g: (np.broadcast_to(g, shape).copy(),))
        axis = axis % self.ndim
        return Tensor._make(self.data.sum(axis=axis), (self,),
                            lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),))

    def mean(self, axis: int | None = None) -> Tensor:
        count = self.data.size if axis is None else self.shape[axis]
        shape = self.shape
        if axis is None:
            return Tensor._make(np.asarray(self.data.mean()), (self,),
                                lambda g: (np.broadcast_to(g / count, shape).copy(),))
        axis = axis % self.ndim
        return Tensor._make(self.data.mean(axis=axis), (self,),
                            lambda g: (np.broadcast_to(np.expand_dims(g / count, axis), shape).copy(),))

    def reshape(self, *shape) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return Tensor._make(self.data.reshape(shape), (self,), lambda g: (g.reshape(old),))

    @property
    def T(self) -> Tensor:
        return Tensor._make(self.data.T, (self,), lambda g: (g.T,))


def ensure_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = ensure_tensor(a), ensure_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data
    return Tensor._make(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def relu(a: Tensor) -> Tensor:
    a = ensure_tensor(a)
    mask = a.data > 0
    return Tensor._make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(a)), computed stably."""
    a = ensure_tensor(a)
    x = a.data
    sig = np.exp(-np.logaddexp(0.0, -x))
    return Tensor._make(np.logaddexp(0.0, x), (a,), lambda g: (g * sig,))


def minimum(a: Tensor, bound: float) -> Tensor:
    """Elementwise min with a constant; gradient 0 where clipped."""
    a = ensure_tensor(a)
    mask = a.data < bound
    return Tensor._make(np.where(mask, a.data, bound), (a,), lambda g: (g * mask,))


def log_softmax(a: Tensor) -> Tensor:
    """Row-wise log-softmax of a 2-d tensor."""
    a = ensure_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"log_softmax expects a 2-d tensor, got shape {a.shape}")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    soft = np.exp(out)
    return Tensor._make(out, (a,), lambda g: (g - soft * g.sum(axis=1, keepdims=True),))


def zero_grad(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None
