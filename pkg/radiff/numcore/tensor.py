"""
Tensor
======

Defines a dense 64-bit tensor with reverse-mode automatic differentiation.

Every differentiable operation records its parents and a closure computing the
vector-Jacobian product. :meth:`Tensor.backward` walks the recorded graph once
in reverse topological order and accumulates gradients into the leaves.

"""

from __future__ import annotations

import contextlib
import math
from collections.abc import Callable, Iterator, Sequence

import numpy as np
import numpy.typing as npt

from radiff.errors import ShapeError

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "Tensor",
    "Parameter",
    "as_tensor",
    "matmul",
    "no_grad",
    "is_grad_enabled",
    "concat",
    "stack",
    "where",
    "softmax",
    "gradcheck",
]

_GRAD_ENABLED = True

BackwardFunction = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """
    Disable graph recording inside the context, e.g. while sampling.
    """
    global _GRAD_ENABLED  # noqa: PLW0603
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def is_grad_enabled() -> bool:
    """Return whether operations currently record the graph."""
    return _GRAD_ENABLED


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` over the axes that were broadcast to reach its shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, operation: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(
            f"Cannot {operation} tensors of shapes {a.shape} and {b.shape}: "
            "shapes are not broadcast-compatible."
        ) from None


class Tensor:
    """
    Represents a dense row-major tensor of 64-bit floats.

    Parameters
    ----------
    data
        Values of the tensor, converted to a contiguous :class:`numpy.ndarray`
        of ``float64``.
    requires_grad
        Whether gradients are accumulated for this tensor when it is a leaf.

    Examples
    --------
    ```
    >>> from radiff.numcore import Tensor
    >>> x = Tensor([1.0, 2.0], requires_grad=True)
    >>> (x * x).sum().backward()
    >>> x.grad
    array([2., 4.])

    ```
    """

    __slots__ = ("_backward", "_parents", "data", "grad", "name", "requires_grad")

    __array_ufunc__ = None

    def __init__(
        self,
        data: npt.ArrayLike,
        requires_grad: bool = False,
        name: str | None = None,
    ) -> None:
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFunction | None = None

    @classmethod
    def _from_op(
        cls,
        data: np.ndarray,
        parents: tuple[Tensor, ...],
        backward: BackwardFunction,
    ) -> Tensor:
        out = object.__new__(Tensor)
        out.data = data
        out.grad = None
        out.name = None
        tracked = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out.requires_grad = tracked
        out._parents = parents if tracked else ()
        out._backward = backward if tracked else None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        """Extents of the tensor."""
        return self.data.shape

    @property
    def ndim(self) -> int:
        """Number of axes."""
        return self.data.ndim

    @property
    def size(self) -> int:
        """Number of values, the product of the extents."""
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        """Whether the tensor was not produced by a recorded operation."""
        return self._backward is None

    def numpy(self) -> np.ndarray:
        """Return the underlying values (not a copy)."""
        return self.data

    def item(self) -> float:
        """Return the value of a single-element tensor as :class:`float`."""
        if self.size != 1:
            raise ShapeError(
                f"Only single-element tensors convert to float, got {self.shape}"
            )
        return float(self.data.reshape(-1)[0])

    def detach(self) -> Tensor:
        """Return a tensor sharing the values but cut from the graph."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        """Reset the accumulated gradient."""
        self.grad = None

    def __repr__(self) -> str:
        suffix = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self.data, precision=6)}{suffix})"

    def __len__(self) -> int:
        return self.shape[0]

    # Graph traversal -----------------------------------------------------------

    def backward(self) -> None:
        """
        Accumulate the gradient of this scalar into every leaf that requires
        gradients.

        Raises
        ------
        :class:`ShapeError`
            If the tensor is not a scalar.
        """
        if self.size != 1:
            raise ShapeError(
                f"backward() needs a scalar loss, got a tensor of shape {self.shape}"
            )
        if not self.requires_grad:
            return

        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node._backward is None:
                node.grad = grad.copy() if node.grad is None else node.grad + grad
                continue
            for parent, parent_grad in zip(node._parents, node._backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + parent_grad
                else:
                    grads[key] = parent_grad

    # Arithmetic ------------------------------------------------------------------

    def __add__(self, other: npt.ArrayLike | Tensor) -> Tensor:
        other = as_tensor(other)
        _broadcast_shape(self, other, "add")
        a_shape, b_shape = self.shape, other.shape
        return Tensor._from_op(
            self.data + other.data,
            (self, other),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)),
        )

    __radd__ = __add__

    def __sub__(self, other: npt.ArrayLike | Tensor) -> Tensor:
        other = as_tensor(other)
        _broadcast_shape(self, other, "subtract")
        a_shape, b_shape = self.shape, other.shape
        return Tensor._from_op(
            self.data - other.data,
            (self, other),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)),
        )

    def __rsub__(self, other: npt.ArrayLike | Tensor) -> Tensor:
        return as_tensor(other) - self

    def __mul__(self, other: npt.ArrayLike | Tensor) -> Tensor:
        other = as_tensor(other)
        _broadcast_shape(self, other, "multiply")
        a, b = self.data, other.data
        return Tensor._from_op(
            a * b,
            (self, other),
            lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other: npt.ArrayLike | Tensor) -> Tensor:
        other = as_tensor(other)
        _broadcast_shape(self, other, "divide")
        a, b = self.data, other.data
        return Tensor._from_op(
            a / b,
            (self, other),
            lambda g: (
                _unbroadcast(g / b, a.shape),
                _unbroadcast(-g * a / (b * b), b.shape),
            ),
        )

    def __rtruediv__(self, other: npt.ArrayLike | Tensor) -> Tensor:
        return as_tensor(other) / self

    def __neg__(self) -> Tensor:
        return Tensor._from_op(-self.data, (self,), lambda g: (-g,))

    def __pow__(self, exponent: float) -> Tensor:
        a = self.data
        return Tensor._from_op(
            a**exponent,
            (self,),
            lambda g: (g * exponent * a ** (exponent - 1),),
        )

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, as_tensor(other))

    # Element-wise functions ------------------------------------------------------

    def exp(self) -> Tensor:
        """Return the element-wise exponential."""
        out = np.exp(self.data)
        return Tensor._from_op(out, (self,), lambda g: (g * out,))

    def log(self) -> Tensor:
        """Return the element-wise natural logarithm."""
        a = self.data
        return Tensor._from_op(np.log(a), (self,), lambda g: (g / a,))

    def sqrt(self) -> Tensor:
        """Return the element-wise square root."""
        out = np.sqrt(self.data)
        return Tensor._from_op(out, (self,), lambda g: (g * 0.5 / out,))

    def abs(self) -> Tensor:
        """Return the element-wise absolute value."""
        a = self.data
        return Tensor._from_op(np.abs(a), (self,), lambda g: (g * np.sign(a),))

    def tanh(self) -> Tensor:
        """Return the element-wise hyperbolic tangent."""
        out = np.tanh(self.data)
        return Tensor._from_op(out, (self,), lambda g: (g * (1.0 - out * out),))

    def sigmoid(self) -> Tensor:
        """Return the element-wise logistic sigmoid."""
        out = 0.5 * (1.0 + np.tanh(0.5 * self.data))
        return Tensor._from_op(out, (self,), lambda g: (g * out * (1.0 - out),))

    def relu(self) -> Tensor:
        """Return the element-wise rectified linear unit."""
        a = self.data
        return Tensor._from_op(np.maximum(a, 0.0), (self,), lambda g: (g * (a > 0),))

    def silu(self) -> Tensor:
        """Return the element-wise sigmoid-weighted linear unit."""
        a = self.data
        s = 0.5 * (1.0 + np.tanh(0.5 * a))
        return Tensor._from_op(
            a * s, (self,), lambda g: (g * (s + a * s * (1.0 - s)),)
        )

    def softplus(self) -> Tensor:
        """Return the element-wise ``log(1 + exp(x))``, computed stably."""
        a = self.data
        out = np.logaddexp(0.0, a)
        s = 0.5 * (1.0 + np.tanh(0.5 * a))
        return Tensor._from_op(out, (self,), lambda g: (g * s,))

    # Reductions ------------------------------------------------------------------

    def sum(
        self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False
    ) -> Tensor:
        """Return the sum over ``axis`` (all axes by default)."""
        shape = self.shape
        out = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g: np.ndarray) -> tuple[np.ndarray]:
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor._from_op(np.asarray(out, dtype=np.float64), (self,), backward)

    def mean(
        self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False
    ) -> Tensor:
        """Return the arithmetic mean over ``axis`` (all axes by default)."""
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            count = math.prod(self.shape[a] for a in axes)
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / max(count, 1))

    def max(self, axis: int, keepdims: bool = False) -> Tensor:
        """
        Return the maximum over ``axis``; the gradient flows to the first
        maximal element.
        """
        a = self.data
        index = np.expand_dims(np.argmax(a, axis=axis), axis)
        out = np.take_along_axis(a, index, axis=axis)
        if not keepdims:
            out = np.squeeze(out, axis=axis)

        def backward(g: np.ndarray) -> tuple[np.ndarray]:
            if not keepdims:
                g = np.expand_dims(g, axis)
            grad = np.zeros_like(a)
            np.put_along_axis(grad, index, g, axis=axis)
            return (grad,)

        return Tensor._from_op(out, (self,), backward)

    # Shape manipulation ----------------------------------------------------------

    def reshape(self, *shape: int) -> Tensor:
        """Return the tensor with a new shape of the same size."""
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.shape
        try:
            out = self.data.reshape(shape)
        except ValueError:
            raise ShapeError(
                f"Cannot reshape tensor of shape {original} into {shape}"
            ) from None
        return Tensor._from_op(out, (self,), lambda g: (g.reshape(original),))

    def transpose(self, *axes: int) -> Tensor:
        """Return the tensor with permuted axes."""
        axes_tuple = axes if axes else tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes_tuple))
        return Tensor._from_op(
            np.ascontiguousarray(self.data.transpose(axes_tuple)),
            (self,),
            lambda g: (g.transpose(inverse),),
        )

    def swapaxes(self, axis_a: int, axis_b: int) -> Tensor:
        """Return the tensor with two axes exchanged."""
        return Tensor._from_op(
            np.ascontiguousarray(np.swapaxes(self.data, axis_a, axis_b)),
            (self,),
            lambda g: (np.swapaxes(g, axis_a, axis_b),),
        )

    @property
    def T(self) -> Tensor:  # noqa: N802
        """Return the transpose of the last two axes."""
        return self.swapaxes(-1, -2)

    def __getitem__(self, index) -> Tensor:  # noqa: ANN001
        a = self.data
        if isinstance(index, Tensor):
            index = index.data.astype(np.int64)

        def backward(g: np.ndarray) -> tuple[np.ndarray]:
            grad = np.zeros_like(a)
            np.add.at(grad, index, g)
            return (grad,)

        return Tensor._from_op(np.array(a[index], dtype=np.float64), (self,), backward)

    def expand(self, *shape: int) -> Tensor:
        """Return the tensor broadcast to ``shape``."""
        original = self.shape
        try:
            out = np.broadcast_to(self.data, shape).copy()
        except ValueError:
            raise ShapeError(
                f"Cannot expand tensor of shape {original} to {shape}"
            ) from None
        return Tensor._from_op(out, (self,), lambda g: (_unbroadcast(g, original),))


class Parameter(Tensor):
    """
    Represents a trainable leaf tensor owned by a :class:`~radiff.numcore.Module`.
    """

    __slots__ = ()

    def __init__(self, data: npt.ArrayLike, name: str | None = None) -> None:
        super().__init__(data, requires_grad=True, name=name)


def as_tensor(value: npt.ArrayLike | Tensor) -> Tensor:
    """
    Return ``value`` unchanged if it is a :class:`Tensor`, otherwise wrap it as
    a constant.
    """
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Return the (batched) matrix product of ``a`` and ``b``.

    Raises
    ------
    :class:`ShapeError`
        If either operand has fewer than two axes or the inner extents differ.

    Examples
    --------
    ```
    >>> import numpy as np
    >>> from radiff.numcore import Tensor
    >>> (Tensor(np.ones((2, 3))) @ Tensor(np.ones((3, 2)))).data
    array([[3., 3.],
           [3., 3.]])

    ```
    """
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(
            f"Cannot multiply matrices of shapes {a.shape} and {b.shape}: "
            "inner extents must match."
        )
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(
            f"Cannot multiply matrices of shapes {a.shape} and {b.shape}: "
            "batch extents are not broadcast-compatible."
        ) from None
    x, y = a.data, b.data

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grad_a = g @ np.swapaxes(y, -1, -2)
        grad_b = np.swapaxes(x, -1, -2) @ g
        return _unbroadcast(grad_a, x.shape), _unbroadcast(grad_b, y.shape)

    return Tensor._from_op(x @ y, (a, b), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """
    Return the concatenation of ``tensors`` along ``axis``.
    """
    parts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in parts], axis=axis)
    except ValueError:
        shapes = ", ".join(str(t.shape) for t in parts)
        raise ShapeError(f"Cannot concatenate tensors of shapes {shapes}") from None
    bounds = np.cumsum([t.shape[axis] for t in parts])[:-1]

    def backward(g: np.ndarray) -> list[np.ndarray]:
        return np.split(g, bounds, axis=axis)

    return Tensor._from_op(out, tuple(parts), backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """
    Return ``tensors`` stacked along a new ``axis``.
    """
    parts = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in parts], axis=axis)
    except ValueError:
        shapes = ", ".join(str(t.shape) for t in parts)
        raise ShapeError(f"Cannot stack tensors of shapes {shapes}") from None

    def backward(g: np.ndarray) -> list[np.ndarray]:
        return [np.take(g, i, axis=axis) for i in range(len(parts))]

    return Tensor._from_op(out, tuple(parts), backward)


def where(
    condition: npt.ArrayLike, a: Tensor | npt.ArrayLike, b: Tensor | npt.ArrayLike
) -> Tensor:
    """
    Select from ``a`` where ``condition`` holds and from ``b`` elsewhere.
    """
    a, b = as_tensor(a), as_tensor(b)
    mask = np.asarray(condition, dtype=bool)
    out = np.where(mask, a.data, b.data)
    return Tensor._from_op(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(np.where(mask, g, 0.0), a.shape),
            _unbroadcast(np.where(mask, 0.0, g), b.shape),
        ),
    )


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """
    Return the softmax of ``x`` along ``axis``.

    Examples
    --------
    ```
    >>> from radiff.numcore import Tensor, softmax
    >>> softmax(Tensor([[0.0, 0.0, 0.0, 0.0]])).data
    array([[0.25, 0.25, 0.25, 0.25]])

    ```
    """
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._from_op(out, (x,), backward)


def gradcheck(
    function: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    step: float = 1e-5,
    floor: float = 1e-3,
) -> float:
    """
    Compare reverse-mode gradients of a scalar function with central finite
    differences and return the maximum relative deviation.

    Parameters
    ----------
    function
        Callable re-evaluating the scalar from the current values of
        ``inputs``.
    inputs
        Leaf tensors to differentiate with respect to; their values are
        perturbed in place and restored.
    step
        Finite-difference step ``h``.
    floor
        Lower bound of the denominator of the relative deviation, avoiding a
        division by vanishing gradients.

    Returns
    -------
    :class:`float`
        ``max |g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|, floor)``.
    """
    for tensor in inputs:
        tensor.grad = None
    function().backward()
    analytic = [
        np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs
    ]
    worst = 0.0
    with no_grad():
        for tensor, grad in zip(inputs, analytic):
            flat = tensor.data.reshape(-1)
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + step
                upper = function().item()
                flat[i] = original - step
                lower = function().item()
                flat[i] = original
                numeric = (upper - lower) / (2.0 * step)
                exact = grad.reshape(-1)[i]
                scale = max(abs(exact), abs(numeric), floor)
                worst = max(worst, abs(exact - numeric) / scale)
    return worst
