"""Reverse-mode automatic differentiation over shaped numpy tensors.

Backward rules are themselves written with these same tensor ops, so a
gradient can be re-differentiated: backward(..., create_graph=True) yields
gradient tensors that stay connected to the graph.  That is exactly what the
WGAN-GP penalty needs (a loss built from a gradient norm, differentiated
again with respect to critic parameters).

Float32 is the working dtype; float64 inputs are respected for
gradient-check runs.
"""

from __future__ import annotations

import contextlib

import numpy as np

from ..errors import NonFiniteValue, NonScalarOutput, ShapeMismatch

_GRAD_ENABLED = True
_CHECK_FINITE = True


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


@contextlib.contextmanager
def enable_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = True
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def set_check_finite(flag: bool) -> None:
    global _CHECK_FINITE
    _CHECK_FINITE = flag


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=""):
        self.data = np.asarray(data, dtype=np.float32 if np.asarray(data).dtype.kind != "f" else None)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float32)
        self.requires_grad = requires_grad
        self.grad: Tensor | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, grad={self.requires_grad}{tag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return add(self, neg(_wrap(other, self)))

    def __rsub__(self, other):
        return add(_wrap(other, self), neg(self))

    def __truediv__(self, other):
        return div(self, other)

    def __pow__(self, c):
        return pow_const(self, c)


def _wrap(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else np.float32
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    if _CHECK_FINITE and not np.all(np.isfinite(data)):
        raise NonFiniteValue("op produced NaN or Inf")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = ""
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Reduce a broadcast gradient back to `shape`."""
    if g.shape == shape:
        return g
    extra = g.data.ndim - len(shape)
    axes = tuple(range(extra)) + tuple(
        i + extra for i, s in enumerate(shape) if s == 1 and g.shape[i + extra] != 1
    )
    out = tsum(g, axis=axes, keepdims=False) if axes else g
    return reshape(out, shape)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def add(a, b):
    a, b = _wrap(a), _wrap(b, a)
    data = a.data + b.data

    def backward(g):
        return [(a, _unbroadcast(g, a.shape)), (b, _unbroadcast(g, b.shape))]

    return _make(data, (a, b), backward)


def neg(a):
    a = _wrap(a)

    def backward(g):
        return [(a, neg(g))]

    return _make(-a.data, (a,), backward)


def mul(a, b):
    a, b = _wrap(a), _wrap(b, a)
    data = a.data * b.data

    def backward(g):
        return [(a, _unbroadcast(mul(g, b), a.shape)), (b, _unbroadcast(mul(g, a), b.shape))]

    return _make(data, (a, b), backward)


def div(a, b):
    a, b = _wrap(a), _wrap(b, a)
    data = a.data / b.data

    def backward(g):
        ga = _unbroadcast(div(g, b), a.shape)
        gb = _unbroadcast(neg(div(mul(g, a), mul(b, b))), b.shape)
        return [(a, ga), (b, gb)]

    return _make(data, (a, b), backward)


def pow_const(a, c: float):
    a = _wrap(a)
    data = a.data**c

    def backward(g):
        return [(a, mul(g, mul(c, pow_const(a, c - 1))))]

    return _make(data, (a,), backward)


def texp(a):
    a = _wrap(a)
    out_holder = []

    def backward(g):
        return [(a, mul(g, out_holder[0]))]

    out = _make(np.exp(a.data), (a,), backward)
    out_holder.append(out)
    return out


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        return [(a, matmul(g, transpose(b))), (b, matmul(transpose(a), g))]

    return _make(data, (a, b), backward)


def transpose(a):
    a = _wrap(a)

    def backward(g):
        return [(a, transpose(g))]

    return _make(a.data.T, (a,), backward)


def permute(a, axes: tuple[int, ...]):
    a = _wrap(a)
    inv = tuple(np.argsort(axes))

    def backward(g):
        return [(a, permute(g, inv))]

    return _make(np.transpose(a.data, axes), (a,), backward)


def reshape(a, shape):
    a = _wrap(a)
    old = a.shape

    def backward(g):
        return [(a, reshape(g, old))]

    return _make(a.data.reshape(shape), (a,), backward)


def broadcast_to(a, shape):
    a = _wrap(a)
    old = a.shape

    def backward(g):
        return [(a, _unbroadcast(g, old))]

    return _make(np.broadcast_to(a.data, shape).copy(), (a,), backward)


def tsum(a, axis=None, keepdims=False):
    a = _wrap(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)
    old = a.shape

    def backward(g):
        gg = g
        if axis is not None and not keepdims:
            kd_shape = list(old)
            axes = (axis,) if isinstance(axis, int) else axis
            for ax in axes:
                kd_shape[ax] = 1
            gg = reshape(gg, tuple(kd_shape))
        elif axis is None and not keepdims:
            gg = reshape(gg, (1,) * len(old))
        return [(a, broadcast_to(gg, old))]

    return _make(np.asarray(data), (a,), backward)


def tmean(a, axis=None, keepdims=False):
    a = _wrap(a)
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def tsqrt(a):
    return pow_const(a, 0.5)


def l2_norm(a, axis=None, eps: float = 0.0):
    """sqrt(sum(a^2, axis) + eps)."""
    sq = tsum(mul(a, a), axis=axis)
    return tsqrt(add(sq, eps) if eps else sq)


def leaky_relu(a, slope: float = 0.2):
    a = _wrap(a)
    mask = np.where(a.data > 0, 1.0, slope).astype(a.data.dtype)

    def backward(g):
        return [(a, mul(g, Tensor(mask)))]

    return _make(np.where(a.data > 0, a.data, a.data * slope), (a,), backward)


def tanh(a):
    a = _wrap(a)
    out_holder = []

    def backward(g):
        y = out_holder[0]
        return [(a, mul(g, add(1.0, neg(mul(y, y)))))]

    out = _make(np.tanh(a.data), (a,), backward)
    out_holder.append(out)
    return out


def concat(tensors, axis: int):
    tensors = [_wrap(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)

    def backward(g):
        grads = []
        start = 0
        for t, s in zip(tensors, sizes):
            grads.append((t, slice_axis(g, axis, start, start + s)))
            start += s
        return grads

    return _make(data, tuple(tensors), backward)


def slice_axis(a, axis: int, start: int, stop: int):
    a = _wrap(a)
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, stop)
    old = a.shape

    def backward(g):
        pieces = []
        if start > 0:
            before = list(old)
            before[axis] = start
            pieces.append(Tensor(np.zeros(before, dtype=a.data.dtype)))
        pieces.append(g)
        if stop < old[axis]:
            after = list(old)
            after[axis] = old[axis] - stop
            pieces.append(Tensor(np.zeros(after, dtype=a.data.dtype)))
        return [(a, concat(pieces, axis) if len(pieces) > 1 else g)]

    return _make(a.data[tuple(idx)].copy(), (a,), backward)


def linear_map(a, fwd, bwd):
    """Record an arbitrary linear operator given its forward and transpose.

    `fwd`/`bwd` act on raw arrays and must be exact transposes of each other;
    the backward of the backward is then `fwd` again, so second-order
    differentiation is automatic.
    """
    a = _wrap(a)

    def backward(g):
        return [(a, linear_map(g, bwd, fwd))]

    return _make(fwd(a.data), (a,), backward)


# ---------------------------------------------------------------------------
# backward passes
# ---------------------------------------------------------------------------


def _toposort(root: Tensor) -> list[Tensor]:
    seen: set[int] = set()
    order: list[Tensor] = []
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(out: Tensor, create_graph: bool = False) -> dict[int, Tensor]:
    """Reverse accumulation from a scalar output.

    Returns {id(tensor): grad} for every requires_grad tensor reached, and
    stores grads on graph leaves (.grad).  With create_graph=True the grad
    tensors remain differentiable.
    """
    if out.size != 1:
        raise NonScalarOutput(f"output has shape {out.shape}")
    topo = _toposort(out)
    grads: dict[int, Tensor] = {id(out): Tensor(np.ones(out.shape, dtype=out.data.dtype))}
    results: dict[int, Tensor] = {}
    ctx = enable_grad() if create_graph else no_grad()
    with ctx:
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None or not node.requires_grad:
                continue
            results[id(node)] = g
            if node._backward is not None:
                for parent, pg in node._backward(g):
                    if not parent.requires_grad:
                        continue
                    prev = grads.get(id(parent))
                    grads[id(parent)] = pg if prev is None else add(prev, pg)
            else:  # leaf
                node.grad = g if node.grad is None else add(node.grad, g)
    return results


def grad_graph(out: Tensor, wrt: Tensor) -> Tensor:
    """Differentiable gradient of a scalar w.r.t. one tensor in its graph."""
    results = backward(out, create_graph=True)
    g = results.get(id(wrt))
    if g is None:
        return Tensor(np.zeros_like(wrt.data))
    return g


def zero_grads(params) -> None:
    for p in params:
        p.grad = None
