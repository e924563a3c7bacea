"""Reverse-mode automatic differentiation over float64 numpy arrays.

A deliberately small tape: just the operations the attention losses need
(elementwise arithmetic, exp/log/sqrt, reductions, per-pixel softmax, a
token-embedding projection, and Gaussian smoothing with reflect padding).
Gradients are exact; every operation is validated against central finite
differences in the test suite.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.signal import convolve2d


class NonFiniteLossError(ArithmeticError):
    """A loss or gradient evaluated to NaN/Inf."""


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce ``grad`` back to ``shape`` by summing broadcast axes."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A node in the computation graph.

    ``value`` is always a float64 ndarray (0-d for scalars).  Calling
    :meth:`backward` on a scalar node fills ``grad`` on every node that
    contributed to it; detached nodes are graph leaves and absorb no
    gradient paths.
    """

    __slots__ = ("value", "grad", "_parents", "_backward")

    def __init__(self, value, _parents: tuple = (), _backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward = _backward

    # -- graph bookkeeping -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def detach(self) -> "Tensor":
        """Same value, no history: gradient flow stops here."""
        return Tensor(self.value)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    def backward(self) -> None:
        """Backpropagate from this scalar node."""
        if self.value.ndim != 0:
            raise ValueError("backward() requires a scalar node")
        if not np.isfinite(self.value):
            raise NonFiniteLossError(f"cannot differentiate non-finite value {self.value!r}")

        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))

        self.grad = np.ones_like(self.value)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out = Tensor(self.value + other.value, (self, other))

        def back(g):
            self._accumulate(_unbroadcast(g, self.shape))
            other._accumulate(_unbroadcast(g, other.shape))

        out._backward = back
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.value, (self,))
        out._backward = lambda g: self._accumulate(-g)
        return out

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.value * other.value, (self, other))

        def back(g):
            self._accumulate(_unbroadcast(g * other.value, self.shape))
            other._accumulate(_unbroadcast(g * self.value, other.shape))

        out._backward = back
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        out = Tensor(self.value / other.value, (self, other))

        def back(g):
            self._accumulate(_unbroadcast(g / other.value, self.shape))
            other._accumulate(
                _unbroadcast(-g * self.value / (other.value * other.value), other.shape)
            )

        out._backward = back
        return out

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, exponent: float):
        out = Tensor(self.value ** exponent, (self,))
        out._backward = lambda g: self._accumulate(
            g * exponent * self.value ** (exponent - 1)
        )
        return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- elementwise functions ---------------------------------------------------


def exp(x: Tensor) -> Tensor:
    out = Tensor(np.exp(x.value), (x,))
    out._backward = lambda g: x._accumulate(g * out.value)
    return out


def log(x: Tensor) -> Tensor:
    out = Tensor(np.log(x.value), (x,))
    out._backward = lambda g: x._accumulate(g / x.value)
    return out


def sqrt(x: Tensor) -> Tensor:
    out = Tensor(np.sqrt(x.value), (x,))
    out._backward = lambda g: x._accumulate(g * 0.5 / out.value)
    return out


# -- reductions ---------------------------------------------------------------


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(x.value.sum(axis=axis, keepdims=keepdims), (x,))

    def back(g):
        if axis is None:
            x._accumulate(np.broadcast_to(g, x.shape).copy())
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            x._accumulate(np.broadcast_to(g, x.shape).copy())

    out._backward = back
    return out


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Flattened inner product of two same-shape tensors."""
    if a.shape != b.shape:
        raise ValueError(f"dot shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(np.vdot(a.value, b.value), (a, b))

    def back(g):
        a._accumulate(g * b.value)
        b._accumulate(g * a.value)

    out._backward = back
    return out


# -- structured operations -----------------------------------------------------


def project_tokens(z: Tensor, embeddings: np.ndarray) -> Tensor:
    """Per-pixel logits ``out[x, y, j] = <z[x, y, :], embeddings[j, :]>``.

    The embedding matrix is a run constant, so no gradient flows into it.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    out = Tensor(np.einsum("hwd,nd->hwn", z.value, emb), (z,))
    out._backward = lambda g: z._accumulate(np.einsum("hwn,nd->hwd", g, emb))
    return out


def softmax_last(x: Tensor) -> Tensor:
    """Softmax over the trailing axis, max-shifted for stability."""
    shifted = x.value - x.value.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(s, (x,))

    def back(g):
        inner = (g * s).sum(axis=-1, keepdims=True)
        x._accumulate(s * (g - inner))

    out._backward = back
    return out


def channel(x: Tensor, index: int) -> Tensor:
    """Select one trailing-axis channel: ``x[..., index]``."""
    out = Tensor(x.value[..., index], (x,))

    def back(g):
        full = np.zeros_like(x.value)
        full[..., index] = g
        x._accumulate(full)

    out._backward = back
    return out


def smooth2d(x: Tensor, kernel: np.ndarray) -> Tensor:
    """Correlate a 2-D map with ``kernel`` under reflect padding.

    Reflect padding mirrors interior rows/columns without repeating the
    edge, so the pad radius must satisfy ``(k - 1) / 2 <= side - 1``.
    The backward pass is the exact adjoint: a full convolution followed
    by scatter-adding padded cells onto their source cells.
    """
    from .maps import smooth_array

    kernel = np.asarray(kernel, dtype=np.float64)
    if x.value.ndim != 2:
        raise ValueError("smooth2d expects a 2-D map")
    k = kernel.shape[0]
    if kernel.shape != (k, k) or k % 2 == 0:
        raise ValueError("kernel must be square with odd side")
    if k == 1:
        return x * float(kernel[0, 0])
    pad = k // 2
    h, w = x.shape
    out = Tensor(smooth_array(x.value, kernel), (x,))

    # Each padded cell mirrors exactly one source cell; padding an index
    # grid the same way recovers that correspondence.
    source = np.pad(np.arange(h * w).reshape(h, w), pad, mode="reflect")

    def back(g):
        g_padded = convolve2d(g, kernel, mode="full")
        x._accumulate(
            np.bincount(source.ravel(), weights=g_padded.ravel(), minlength=h * w).reshape(h, w)
        )

    out._backward = back
    return out


# -- similarity ----------------------------------------------------------------


def norm(x: Tensor) -> Tensor:
    return sqrt(dot(x, x))


def cosine(a: Tensor, b: Tensor) -> Tensor:
    """Cosine similarity of two same-shape tensors, flattened."""
    return dot(a, b) / (norm(a) * norm(b))


# -- gradient utilities ---------------------------------------------------------


def differentiate(
    loss_fn: Callable[..., Tensor], inputs: Sequence[np.ndarray]
) -> tuple[float, list[np.ndarray]]:
    """Evaluate ``loss_fn`` on fresh leaves and return (value, partials).

    Each input array becomes a leaf tensor; the returned partials are
    shape-matched to the inputs, with zeros where no gradient path exists
    (including paths severed by ``detach``).
    """
    leaves = [Tensor(np.asarray(x, dtype=np.float64)) for x in inputs]
    loss = loss_fn(*leaves)
    loss.backward()
    value = float(loss.value)
    grads = []
    for leaf in leaves:
        grads.append(np.zeros_like(leaf.value) if leaf.grad is None else leaf.grad)
        if leaf.grad is not None and not np.all(np.isfinite(leaf.grad)):
            raise NonFiniteLossError("gradient contains non-finite entries")
    return value, grads


def finite_difference(
    fn: Callable[..., float], inputs: Sequence[np.ndarray], h: float = 1e-4
) -> list[np.ndarray]:
    """Central finite differences of a scalar function, entry by entry."""
    arrays = [np.asarray(x, dtype=np.float64).copy() for x in inputs]
    grads = []
    for i, base in enumerate(arrays):
        g = np.zeros_like(base)
        flat = base.ravel()
        gflat = g.ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            hi = fn(*arrays)
            flat[idx] = orig - h
            lo = fn(*arrays)
            flat[idx] = orig
            gflat[idx] = (hi - lo) / (2.0 * h)
        grads.append(g)
    return grads


def worst_relative_error(
    analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8
) -> float:
    """Largest elementwise relative error over entries above ``floor``.

    Entries where both gradients sit at or below the floor are treated as
    numerically zero and skipped; returns 0.0 when nothing is comparable.
    """
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = np.maximum(np.abs(a), np.abs(n))
    mask = scale > floor
    if not mask.any():
        return 0.0
    return float((np.abs(a - n)[mask] / scale[mask]).max())
