"""Reverse-mode automatic differentiation over dense float64 arrays.

Define-by-run: applying an op computes the result eagerly with numpy and
records a node holding the op kind, its parents, and a VJP closure over the
saved activations. ``backward`` on a scalar walks the recorded graph once in
reverse topological order and accumulates gradients into every tensor that
requires them.

Only the operations the planner architecture needs exist here: linear maps,
layer normalization, softmax, GELU/softplus nonlinearities, reductions, and
the reshaping plumbing around them. Everything is float64; there is no GPU
path, no dynamic shapes beyond leading batch extents, and no in-place
mutation of tensors that participate in a graph.

Graphs hang off their root tensors and share no module state, so distinct
forward/backward passes are safe to run on separate threads.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ShapeError",
    "Tensor",
    "as_tensor",
    "backward",
    "graph_nodes",
    "add",
    "sub",
    "mul",
    "neg",
    "matmul",
    "transpose",
    "reshape",
    "concat",
    "narrow",
    "tsum",
    "tmean",
    "gelu",
    "softplus",
    "softmax",
    "layernorm",
    "grad_check",
    "LAYERNORM_EPS",
]

LAYERNORM_EPS = 1e-6

# GELU tanh approximation, fixed coefficients.
_GELU_C = float(np.sqrt(2.0 / np.pi))
_GELU_A = 0.044715


class ShapeError(ValueError):
    """Raised when an op receives operands with inconsistent extents."""


class Tensor:
    """Dense float64 array plus the graph record that produced it.

    ``parents`` and ``_vjp`` are the op record: ``_vjp(grad_out)`` returns one
    gradient per parent (``None`` for parents that do not need one). Leaf
    tensors have ``op == "leaf"`` and no VJP.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf",
                 parents: tuple = (), vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = op
        self.parents = parents
        self._vjp = vjp

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(op={self.op!r}, shape={self.data.shape})"

    # operator sugar; everything routes through the module-level ops
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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    """Wrap a numpy array or python scalar as a constant leaf."""
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(op: str, data: np.ndarray, parents: tuple, vjp) -> Tensor:
    requires = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=requires, op=op, parents=parents,
                  vjp=vjp if requires else None)


def graph_nodes(root: Tensor, grad_only: bool = True) -> list:
    """Return the op records reachable from ``root`` in topological order.

    Every parent precedes its consumer. With ``grad_only`` the walk prunes
    subgraphs that carry no gradient (constant inputs).
    """
    order: list = []
    seen: set = set()
    stack: list = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen and (p.requires_grad or not grad_only):
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(tensor) into ``.grad`` of every ancestor.

    ``loss`` must be scalar; callers reset ``.grad`` to None between passes.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    if not loss.requires_grad:
        raise ShapeError("backward: loss does not depend on any differentiable tensor")
    order = graph_nodes(loss, grad_only=True)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._vjp is None or node.grad is None:
            continue
        for parent, g in zip(node.parents, node._vjp(node.grad)):
            if g is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = g
            else:
                parent.grad = parent.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: cannot broadcast {a.data.shape} with {b.data.shape}")

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _node("add", out, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: cannot broadcast {a.data.shape} with {b.data.shape}")

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _node("sub", out, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: cannot broadcast {a.data.shape} with {b.data.shape}")

    def vjp(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _node("mul", out, (a, b), vjp)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node("neg", -a.data, (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    """Matrix product with numpy batch broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-D, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul: inner extents differ, {a.data.shape} @ {b.data.shape}")

    if a.data.ndim > 2 and b.data.ndim == 2:
        # batched activations against one weight matrix: run a single GEMM on
        # the flattened rows instead of a python loop over the batch
        ashape = a.data.shape
        k, n = b.data.shape
        a2 = np.ascontiguousarray(a.data).reshape(-1, k)
        out = (a2 @ b.data).reshape(ashape[:-1] + (n,))

        def vjp(g):
            g2 = np.ascontiguousarray(g).reshape(-1, n)
            ga = (g2 @ b.data.T).reshape(ashape)
            gb = a2.T @ g2
            return ga, gb

        return _node("matmul", out, (a, b), vjp)

    out = a.data @ b.data

    def vjp(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)
        return ga, gb

    return _node("matmul", out, (a, b), vjp)


# ---------------------------------------------------------------------------
# shape plumbing


def transpose(a, axes: tuple) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    if sorted(axes) != list(range(a.data.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for shape {a.data.shape}")
    inv = tuple(int(i) for i in np.argsort(axes))
    return _node("transpose", np.transpose(a.data, axes), (a,),
                 lambda g: (np.transpose(g, inv),))


def reshape(a, shape: tuple) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.data.shape} as {shape}")
    old = a.data.shape
    return _node("reshape", out, (a,), lambda g: (g.reshape(old),))


def concat(parts, axis: int) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[p.data.shape for p in parts]} on axis {axis}")
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        grads = []
        for i in range(len(parts)):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
            grads.append(g[tuple(idx)])
        return tuple(grads)

    return _node("concat", out, tuple(parts), vjp)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice ``[start, start+length)`` along ``axis``."""
    a = as_tensor(a)
    if not (0 <= start and start + length <= a.data.shape[axis]):
        raise ShapeError(
            f"narrow: [{start}, {start + length}) outside extent {a.data.shape[axis]} of axis {axis}")
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def vjp(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _node("narrow", a.data[idx].copy(), (a,), vjp)


# ---------------------------------------------------------------------------
# reductions


def _expand_reduced(g: np.ndarray, shape: tuple, axis) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape).copy() if np.ndim(g) == 0 else np.full(shape, g)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = tuple(a % len(shape) for a in axes)
    full = g
    if full.ndim != len(shape):
        for a in sorted(axes):
            full = np.expand_dims(full, a)
    return np.broadcast_to(full, shape).copy()


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)
    shape = a.data.shape

    def vjp(g):
        if keepdims or axis is None:
            if axis is None and np.ndim(g) == 0:
                return (np.full(shape, g),)
            return (np.broadcast_to(g, shape).copy(),)
        return (_expand_reduced(g, shape, axis),)

    return _node("sum", out, (a,), vjp)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    shape = a.data.shape
    count = a.data.size if axis is None else np.prod(
        [shape[ax % len(shape)] for ax in ((axis,) if isinstance(axis, int) else axis)])

    def vjp(g):
        g = g / count
        if keepdims or axis is None:
            if axis is None and np.ndim(g) == 0:
                return (np.full(shape, g),)
            return (np.broadcast_to(g, shape).copy(),)
        return (_expand_reduced(g, shape, axis),)

    return _node("mean", out, (a,), vjp)


# ---------------------------------------------------------------------------
# nonlinearities and normalizations


def gelu(a) -> Tensor:
    """GELU via the tanh approximation (fixed coefficients, reproducible)."""
    a = as_tensor(a)
    x = a.data
    x2 = x * x
    inner = x2 * _GELU_A
    inner += 1.0
    inner *= x
    inner *= _GELU_C
    th = np.tanh(inner)
    out = th + 1.0
    out *= x
    out *= 0.5

    def vjp(g):
        sech2 = th * th
        np.subtract(1.0, sech2, out=sech2)
        d = x2 * (3.0 * _GELU_A)
        d += 1.0
        d *= sech2
        d *= x
        d *= _GELU_C
        d += 1.0
        d += th
        d *= 0.5
        return (g * d,)

    return _node("gelu", out, (a,), vjp)


def softplus(a) -> Tensor:
    """log(1 + exp(x)), computed stably; derivative is the logistic sigmoid."""
    a = as_tensor(a)
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    sig = 1.0 / (1.0 + np.exp(-x))

    def vjp(g):
        return (g * sig,)

    return _node("softplus", out, (a,), vjp)


def softmax(a) -> Tensor:
    """Row softmax over the last axis with max subtraction for stability."""
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - dot),)

    return _node("softmax", y, (a,), vjp)


def layernorm(a, eps: float = LAYERNORM_EPS) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, no affine part.

    Epsilon sits inside the square root, so constant rows map to zero.
    """
    a = as_tensor(a)
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv
    n = x.shape[-1]

    def vjp(g):
        gm = g.mean(axis=-1, keepdims=True)
        gy = (g * y).mean(axis=-1, keepdims=True)
        return ((g - gm - y * gy) * inv,)

    return _node("layernorm", y, (a,), vjp)


# ---------------------------------------------------------------------------
# numerical gradient verification


def grad_check(f, x: Tensor, eps: float = 1e-5, coords=None) -> float:
    """Max relative disagreement between analytic and central-difference grads.

    ``f`` maps a tensor to a scalar tensor and must be pure. ``coords`` limits
    the check to the given flat indices (all coordinates when omitted). The
    relative error per coordinate is |analytic - numeric| divided by
    (|analytic| + |numeric| + 1e-12).
    """
    if eps <= 0:
        raise ValueError("grad_check: eps must be positive")
    probe = Tensor(x.data.copy(), requires_grad=True)
    out = f(probe)
    backward(out)
    analytic = np.zeros_like(probe.data) if probe.grad is None else probe.grad

    flat = x.data.reshape(-1)
    if coords is None:
        coords = range(flat.size)
    worst = 0.0
    for i in coords:
        bumped = flat.copy()
        bumped[i] += eps
        hi = float(f(Tensor(bumped.reshape(x.data.shape))).data)
        bumped[i] -= 2 * eps
        lo = float(f(Tensor(bumped.reshape(x.data.shape))).data)
        numeric = (hi - lo) / (2 * eps)
        a = float(analytic.reshape(-1)[i])
        rel = abs(a - numeric) / (abs(a) + abs(numeric) + 1e-12)
        worst = max(worst, rel)
    return worst
