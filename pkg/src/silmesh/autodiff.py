"""Minimal float32 reverse-mode autodiff on dense numpy arrays.

Every operation builds a new ``Tensor`` and, when a differentiable input
is involved, records a backward closure on it.  ``Graph.from_output``
walks the recorded structure into a topological order and ``backward``
replays it in reverse, returning a gradient map for the leaf tensors.

Conventions kept deliberately strict:

* all values are float32; inputs are cast on construction,
* binary ops require equal shapes, or a scalar () on either side
  (no implicit broadcasting),
* tensors are treated as immutable while a graph referencing them is
  alive; optimizers rebind ``.data`` between iterations only,
* everything runs single threaded (BLAS aside), so repeated runs on
  identical inputs are bit-identical.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor", "Graph", "backward", "finite_difference_check",
    "as_tensor", "add", "sub", "mul", "div", "neg", "square", "sqrt",
    "exp", "log", "cos", "sigmoid", "relu", "maximum", "matmul",
    "add_bias", "conv2d", "softmax", "sum", "mean", "concat", "reshape",
    "slice_rows", "gather_rows", "take_per_row", "scale_rows", "cross3",
    "detach",
]

_f32 = np.float32


class Tensor:
    """A dense float32 array plus an optional backward closure."""

    __slots__ = ("data", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=_f32)
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple = ()
        # maps upstream grad -> sequence of (parent, local grad) pairs
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return detach(self)

    def reshape(self, shape) -> "Tensor":
        return reshape(self, shape)

    def sum(self, axis=None) -> "Tensor":
        return sum(self, axis)

    def mean(self, axis=None) -> "Tensor":
        return mean(self, axis)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad}{tag})"


def as_tensor(value) -> Tensor:
    """Wrap a number or array as a constant Tensor (pass through Tensors)."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _check_binary(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape and a.data.shape != () and b.data.shape != ():
        raise ValueError(
            f"{op}: shapes {a.data.shape} and {b.data.shape} do not match "
            "(only equal shapes or scalars are allowed)")


def _fit(g: np.ndarray, shape: tuple) -> np.ndarray:
    # reduce an upstream gradient onto a scalar operand
    if shape == () and np.shape(g) != ():
        return np.asarray(g.sum(), dtype=_f32)
    return g


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "add")

    def bw(g):
        return ((a, _fit(g, a.data.shape)), (b, _fit(g, b.data.shape)))

    return _make(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "sub")

    def bw(g):
        return ((a, _fit(g, a.data.shape)), (b, _fit(-g, b.data.shape)))

    return _make(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "mul")

    def bw(g):
        return ((a, _fit(g * b.data, a.data.shape)),
                (b, _fit(g * a.data, b.data.shape)))

    return _make(a.data * b.data, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "div")

    def bw(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return ((a, _fit(ga, a.data.shape)), (b, _fit(gb, b.data.shape)))

    return _make(a.data / b.data, (a, b), bw)


def neg(a) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        return ((a, -g),)

    return _make(-a.data, (a,), bw)


def square(a) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        return ((a, g * (2.0 * a.data)),)

    return _make(a.data * a.data, (a,), bw)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.sqrt(a.data)

    def bw(g):
        return ((a, g / (2.0 * out_data)),)

    return _make(out_data, (a,), bw)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def bw(g):
        return ((a, g * out_data),)

    return _make(out_data, (a,), bw)


def log(a) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        return ((a, g / a.data),)

    return _make(np.log(a.data), (a,), bw)


def cos(a) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        return ((a, -g * np.sin(a.data)),)

    return _make(np.cos(a.data), (a,), bw)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    # stable two-sided form
    out_data = np.where(a.data >= 0,
                        1.0 / (1.0 + np.exp(-a.data)),
                        np.exp(a.data) / (1.0 + np.exp(a.data))).astype(_f32)

    def bw(g):
        return ((a, g * out_data * (1.0 - out_data)),)

    return _make(out_data, (a,), bw)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0

    def bw(g):
        return ((a, g * mask),)

    return _make(np.where(mask, a.data, 0.0).astype(_f32), (a,), bw)


def maximum(a, b) -> Tensor:
    """Elementwise max; on ties the gradient goes to the first operand."""
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "maximum")
    take_a = a.data >= b.data

    def bw(g):
        return ((a, _fit(g * take_a, a.data.shape)),
                (b, _fit(g * ~take_a, b.data.shape)))

    return _make(np.where(take_a, a.data, b.data).astype(_f32), (a, b), bw)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects 2-d operands")

    def bw(g):
        return ((a, g @ b.data.T), (b, a.data.T @ g))

    return _make(a.data @ b.data, (a, b), bw)


def add_bias(x, b) -> Tensor:
    """(N, D) + (D,) row-broadcast bias."""
    x, b = as_tensor(x), as_tensor(b)
    if x.data.ndim != 2 or b.data.shape != (x.data.shape[1],):
        raise ValueError("add_bias expects (N, D) and (D,)")

    def bw(g):
        return ((x, g), (b, g.sum(axis=0)))

    return _make(x.data + b.data, (x, b), bw)


def conv2d(x, w, b) -> Tensor:
    """5x5 convolution, stride 2, pad 2, NHWC layout.

    Implemented as im2col + one sgemm; the backward pass scatters the
    column gradient back through 25 strided slice adds.
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.data.ndim != 4:
        raise ValueError("conv2d expects NHWC input")
    n, h, wd, cin = x.data.shape
    if h % 2 or wd % 2:
        raise ValueError("conv2d expects even spatial dims")
    if w.data.shape[:3] != (5, 5, cin):
        raise ValueError(f"conv2d kernel must be (5, 5, {cin}, Cout)")
    cout = w.data.shape[3]
    if b.data.shape != (cout,):
        raise ValueError("conv2d bias must be (Cout,)")
    ho, wo = h // 2, wd // 2

    xp = np.zeros((n, h + 4, wd + 4, cin), dtype=_f32)
    xp[:, 2:h + 2, 2:wd + 2, :] = x.data
    cols = np.empty((n, ho, wo, 5, 5, cin), dtype=_f32)
    for ki in range(5):
        for kj in range(5):
            cols[:, :, :, ki, kj, :] = xp[:, ki:ki + 2 * ho - 1:2,
                                          kj:kj + 2 * wo - 1:2, :]
    cols2 = cols.reshape(n * ho * wo, 25 * cin)
    w2 = w.data.reshape(25 * cin, cout)
    out_data = (cols2 @ w2 + b.data).reshape(n, ho, wo, cout)

    def bw(g):
        g2 = np.ascontiguousarray(g).reshape(n * ho * wo, cout)
        gw = (cols2.T @ g2).reshape(w.data.shape)
        gb = g2.sum(axis=0)
        gcols = (g2 @ w2.T).reshape(n, ho, wo, 5, 5, cin)
        gxp = np.zeros_like(xp)
        for ki in range(5):
            for kj in range(5):
                gxp[:, ki:ki + 2 * ho - 1:2, kj:kj + 2 * wo - 1:2, :] += \
                    gcols[:, :, :, ki, kj, :]
        return ((x, gxp[:, 2:h + 2, 2:wd + 2, :]), (w, gw), (b, gb))

    return _make(out_data, (x, w, b), bw)


def softmax(x) -> Tensor:
    """Row softmax of a (N, K) tensor."""
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise ValueError("softmax expects (N, K)")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = (e / e.sum(axis=1, keepdims=True)).astype(_f32)

    def bw(g):
        dot = (g * p).sum(axis=1, keepdims=True)
        return ((x, p * (g - dot)),)

    return _make(p, (x,), bw)


# ---------------------------------------------------------------------------
# reductions and shape ops


def sum(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    shape = a.data.shape

    def bw(g):
        if axis is None:
            return ((a, np.full(shape, g, dtype=_f32)),)
        gexp = np.expand_dims(g, axis)
        return ((a, np.ascontiguousarray(np.broadcast_to(gexp, shape))),)

    return _make(a.data.sum(axis=axis, dtype=_f32), (a,), bw)


def mean(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    shape = a.data.shape
    count = a.data.size if axis is None else shape[axis]

    def bw(g):
        if axis is None:
            return ((a, np.full(shape, g / count, dtype=_f32)),)
        gexp = np.expand_dims(g / count, axis)
        return ((a, np.ascontiguousarray(np.broadcast_to(gexp, shape)).astype(_f32)),)

    return _make(a.data.mean(axis=axis, dtype=_f32).astype(_f32), (a,), bw)


def concat(parts: Iterable, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        sl = [slice(None)] * g.ndim
        out = []
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            sl[axis] = slice(lo, hi)
            out.append((p, np.ascontiguousarray(g[tuple(sl)])))
        return tuple(out)

    return _make(np.concatenate([p.data for p in parts], axis=axis), parts, bw)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.data.shape

    def bw(g):
        return ((a, g.reshape(old)),)

    return _make(a.data.reshape(shape), (a,), bw)


def slice_rows(a, start: int, stop: int) -> Tensor:
    """Contiguous row slice of a 2-d tensor."""
    a = as_tensor(a)
    if a.data.ndim < 1:
        raise ValueError("slice_rows needs at least 1-d input")

    def bw(g):
        buf = np.zeros_like(a.data)
        buf[start:stop] = g
        return ((a, buf),)

    return _make(a.data[start:stop].copy(), (a,), bw)


def gather_rows(a, idx: np.ndarray) -> Tensor:
    """Select rows by integer index; repeated indices accumulate in backward."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)

    def bw(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        return ((a, buf),)

    return _make(a.data[idx].copy(), (a,), bw)


def take_per_row(a, col_idx: np.ndarray) -> Tensor:
    """out[i] = a[i, col_idx[i]] for a (N, K) tensor."""
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ValueError("take_per_row expects (N, K)")
    col_idx = np.asarray(col_idx, dtype=np.int64)
    rows = np.arange(a.data.shape[0])

    def bw(g):
        buf = np.zeros_like(a.data)
        buf[rows, col_idx] = g
        return ((a, buf),)

    return _make(a.data[rows, col_idx].copy(), (a,), bw)


def scale_rows(a, s) -> Tensor:
    """Multiply each row of (M, k) by the matching entry of (M,)."""
    a, s = as_tensor(a), as_tensor(s)
    if a.data.ndim != 2 or s.data.shape != (a.data.shape[0],):
        raise ValueError("scale_rows expects (M, k) and (M,)")

    def bw(g):
        return ((a, g * s.data[:, None]), (s, (g * a.data).sum(axis=1)))

    return _make(a.data * s.data[:, None], (a, s), bw)


def cross3(a, b) -> Tensor:
    """Rowwise 3-d cross product of two (M, 3) tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape != b.data.shape or a.data.shape[-1] != 3:
        raise ValueError("cross3 expects matching (M, 3) operands")

    def bw(g):
        # g.(da x b) = da.(b x g);  g.(a x db) = db.(g x a)
        return ((a, np.cross(b.data, g).astype(_f32)),
                (b, np.cross(g, a.data).astype(_f32)))

    return _make(np.cross(a.data, b.data).astype(_f32), (a, b), bw)


def detach(a) -> Tensor:
    """A constant view of a tensor's value; gradients stop here."""
    a = as_tensor(a)
    return Tensor(a.data, requires_grad=False)


# ---------------------------------------------------------------------------
# graph traversal and reverse pass


class Graph:
    """Topologically ordered record of the tensors reachable from an output.

    Tensors are immutable once created, so the structure is acyclic by
    construction.  Distinct Graph instances share no mutable state and can
    be evaluated on distinct workers.
    """

    def __init__(self, nodes: list):
        self.nodes = nodes

    @classmethod
    def from_output(cls, output: Tensor) -> "Graph":
        nodes: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                nodes.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        return cls(nodes)


def backward(graph: Graph, output: Tensor,
             params: Iterable[Tensor] | None = None) -> dict[int, np.ndarray]:
    """Reverse-mode gradients of a scalar output.

    Returns a map from ``id(tensor)`` to the gradient array for every
    differentiable leaf in the graph.  Tensors passed via ``params`` that
    do not lie on a path to the output get explicit zero gradients.
    """
    if output.data.shape != ():
        raise ValueError("backward requires a scalar output")
    grads: dict[int, np.ndarray] = {id(output): np.ones((), dtype=_f32)}
    for node in reversed(graph.nodes):
        g = grads.get(id(node))
        if g is None or node._backward is None:
            continue
        for parent, pg in node._backward(g):
            if not parent.requires_grad:
                continue
            pid = id(parent)
            if pid in grads:
                grads[pid] = grads[pid] + pg
            else:
                grads[pid] = pg
    result: dict[int, np.ndarray] = {}
    for node in graph.nodes:
        if node._backward is None and node.requires_grad:
            result[id(node)] = np.asarray(
                grads.get(id(node), np.zeros_like(node.data)), dtype=_f32)
    if params is not None:
        for p in params:
            result.setdefault(id(p), np.zeros_like(p.data))
    return result


def finite_difference_check(f: Callable[[Tensor], Tensor], x, h: float = 1e-3,
                            coords: Iterable[int] | None = None) -> float:
    """Max relative error between reverse-mode and central-difference grads.

    ``f`` must be a pure scalar-valued function of one tensor.  ``coords``
    selects flat indices to probe (all of them by default).  Relative
    error uses max(1, |fd|) as the scale so tiny gradients do not blow
    up the ratio.  Non-finite function values raise ValueError naming the
    offending coordinate.
    """
    x0 = np.array(x.data if isinstance(x, Tensor) else x, dtype=_f32)
    xt = Tensor(x0, requires_grad=True)
    y = f(xt)
    if y.data.shape != ():
        raise ValueError("finite_difference_check needs a scalar-valued f")
    ga = backward(Graph.from_output(y), y, params=[xt])[id(xt)].ravel()

    if coords is None:
        coords = range(x0.size)
    worst = 0.0
    for c in coords:
        for sgn in (+1.0, -1.0):
            xp = x0.copy()
            xp.flat[c] += sgn * h
            val = float(f(Tensor(xp)).data)
            if not np.isfinite(val):
                raise ValueError(f"non-finite value at coordinate {c}")
            if sgn > 0:
                fp = val
            else:
                fm = val
        fd = (fp - fm) / (2.0 * h)
        err = abs(float(ga[c]) - fd) / max(1.0, abs(fd))
        worst = max(worst, err)
    return worst
