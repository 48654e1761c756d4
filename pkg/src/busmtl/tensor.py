"""Float64 n-d tensors with reverse-mode automatic differentiation.

Small, numpy-backed, and strict about shapes: every operation either returns
the documented shape or raises DimensionError; elementwise ops accept equal
shapes or a size-1 operand, nothing fancier. Differentiable ops attach a
GraphNode whose closure maps the upstream gradient to per-parent gradients;
Tensor.backward() walks the graph once in reverse topological order and
accumulates into .grad of every requires_grad tensor it reaches. Arrays that
take part in a graph are never mutated in place, so a graph can be
back-propagated repeatedly and gradients add up.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, ParameterError

Array = np.ndarray


class GraphNode:
    """Backward record of one op: kind, parent tensors, and a closure that
    turns the upstream gradient into per-parent gradients (None entries for
    parents that need none)."""

    __slots__ = ("op", "parents", "grad_fn")

    def __init__(self, op: str, parents: tuple["Tensor", ...],
                 grad_fn: Callable[[Array], Sequence[Optional[Array]]]):
        self.op = op
        self.parents = parents
        self.grad_fn = grad_fn


class Tensor:
    """N-dimensional float64 array plus an optional autograd graph node."""

    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[Array] = None
        self.node: Optional[GraphNode] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a one-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- arithmetic sugar ---------------------------------------------------

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

    def __pow__(self, exponent):
        return power(self, exponent)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)

    # -- backward pass ------------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into .grad of every reachable
        requires_grad tensor. self must hold exactly one element."""
        if self.data.size != 1:
            raise DimensionError(
                f"backward() needs a scalar loss, got shape {self.shape}")
        order = _topo_order(self)
        grads: dict[int, Array] = {id(self): np.ones_like(self.data)}
        for t in reversed(order):
            g = grads.pop(id(t), None)
            if g is None:
                continue
            if t.requires_grad:
                t.grad = g if t.grad is None else t.grad + g
            if t.node is None:
                continue
            parent_grads = t.node.grad_fn(g)
            for p, pg in zip(t.node.parents, parent_grads):
                if pg is None or not (p.requires_grad or p.node is not None):
                    continue
                acc = grads.get(id(p))
                grads[id(p)] = pg if acc is None else acc + pg


def _topo_order(root: Tensor) -> list[Tensor]:
    """Parents-before-children ordering via iterative post-order DFS."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t.node is not None:
            for p in t.node.parents:
                stack.append((p, False))
    return order


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _make(data: Array, op: str, parents: tuple[Tensor, ...], grad_fn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad or p.node is not None for p in parents):
        out.requires_grad = True
        out.node = GraphNode(op, parents, grad_fn)
    return out


def _check_elementwise(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    """Equal shapes, or one operand of size 1; anything else is an error."""
    if a.shape == b.shape:
        return a.shape
    if a.size == 1:
        return b.shape
    if b.size == 1:
        return a.shape
    raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(grad: Array, shape: tuple[int, ...]) -> Array:
    if grad.shape == shape:
        return grad
    return np.sum(grad).reshape(shape)  # size-1 operand was broadcast


# -- elementwise ops ---------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise("add", a, b)
    out = a.data + b.data
    return _make(out, "add", (a, b),
                 lambda g: (_reduce_to(g, a.shape), _reduce_to(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise("sub", a, b)
    out = a.data - b.data
    return _make(out, "sub", (a, b),
                 lambda g: (_reduce_to(g, a.shape), _reduce_to(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise("mul", a, b)
    out = a.data * b.data
    return _make(out, "mul", (a, b),
                 lambda g: (_reduce_to(g * b.data, a.shape),
                            _reduce_to(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise("div", a, b)
    out = a.data / b.data
    return _make(out, "div", (a, b),
                 lambda g: (_reduce_to(g / b.data, a.shape),
                            _reduce_to(-g * a.data / (b.data * b.data), b.shape)))


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _make(-a.data, "neg", (a,), lambda g: (-g,))


def power(a, exponent: float) -> Tensor:
    """a ** exponent for a scalar exponent. Fractional exponents require a
    non-negative base; the gradient at base 0 is forced finite (0) so eps
    guards upstream cannot inject NaN."""
    a = _as_tensor(a)
    k = float(exponent)
    out = a.data ** k

    def grad_fn(g):
        if k == 0.0:
            return (np.zeros_like(a.data),)
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = k * np.power(a.data, k - 1.0)
        coef = np.where(np.isfinite(coef), coef, 0.0)
        return (g * coef,)

    return _make(out, "pow", (a,), grad_fn)


def log(a) -> Tensor:
    """Natural log; the caller is responsible for keeping a positive
    (clip() exists for exactly that)."""
    a = _as_tensor(a)
    return _make(np.log(a.data), "log", (a,), lambda g: (g / a.data,))


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient passes through wherever the input already
    lies inside the (closed) interval."""
    a = _as_tensor(a)
    out = np.clip(a.data, lo, hi)
    mask = (a.data >= lo) & (a.data <= hi)
    return _make(out, "clip", (a,), lambda g: (g * mask,))


# -- reductions ---------------------------------------------------------------

def _normalize_axes(axis, ndim: int) -> Optional[tuple[int, ...]]:
    if axis is None:
        return None
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def tsum(a, axis=None) -> Tensor:
    a = _as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    out = a.data.sum(axis=axes)

    def grad_fn(g):
        gg = np.asarray(g)
        if axes is not None:
            for ax in axes:
                gg = np.expand_dims(gg, ax)
        return (np.broadcast_to(gg, a.shape).copy(),)

    return _make(out, "sum", (a,), grad_fn)


def tmean(a, axis=None) -> Tensor:
    a = _as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    out = a.data.mean(axis=axes)
    count = a.data.size if axes is None else int(np.prod([a.shape[ax] for ax in axes]))

    def grad_fn(g):
        gg = np.asarray(g) / count
        if axes is not None:
            for ax in axes:
                gg = np.expand_dims(gg, ax)
        return (np.broadcast_to(gg, a.shape).copy(),)

    return _make(out, "mean", (a,), grad_fn)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ParameterError("concat needs at least one tensor")
    ref = tensors[0].shape
    ax = axis % tensors[0].ndim
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(
                i != ax and t.shape[i] != ref[i] for i in range(t.ndim)):
            raise DimensionError(
                f"concat: shapes {[t.shape for t in tensors]} differ outside axis {ax}")
    out = np.concatenate([t.data for t in tensors], axis=ax)
    offsets = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def grad_fn(g):
        return tuple(np.split(g, offsets, axis=ax))

    return _make(out, "concat", tuple(tensors), grad_fn)


# -- activations --------------------------------------------------------------

def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), "relu", (a,), lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    d = a.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _make(out, "sigmoid", (a,), lambda g: (g * out * (1.0 - out),))


def softmax(a, axis: int = -1) -> Tensor:
    """Max-subtracted stable softmax along one axis."""
    a = _as_tensor(a)
    d = a.data
    z = d - d.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return ((g - inner) * out,)

    return _make(out, "softmax", (a,), grad_fn)


# -- neural-network ops --------------------------------------------------------

def linear(x, weight, bias) -> Tensor:
    """x[N,F] @ weight[F,K] + bias[K]."""
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    if x.ndim != 2 or weight.ndim != 2:
        raise DimensionError(
            f"linear: need 2-d input and weight, got {x.shape} and {weight.shape}")
    n, f = x.shape
    fw, k = weight.shape
    if f != fw:
        raise DimensionError(
            f"linear: input features {x.shape} do not match weight {weight.shape}")
    if bias.shape != (k,):
        raise DimensionError(f"linear: bias shape {bias.shape} != ({k},)")
    out = x.data @ weight.data + bias.data

    def grad_fn(g):
        return (g @ weight.data.T, x.data.T @ g, g.sum(axis=0))

    return _make(out, "linear", (x, weight, bias), grad_fn)


def conv2d(x, weight, bias, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of x[N,Cin,H,W] with weight[Cout,Cin,kh,kw] plus a
    per-channel bias. im2col + GEMM, exact gradients for all three inputs."""
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError(
            f"conv2d: need 4-d input and weight, got {x.shape} and {weight.shape}")
    if stride < 1:
        raise ParameterError(f"conv2d: stride must be >= 1, got {stride}")
    if padding < 0:
        raise ParameterError(f"conv2d: padding must be >= 0, got {padding}")
    n, cin, h, w = x.shape
    cout, cin_w, kh, kw = weight.shape
    if cin != cin_w:
        raise DimensionError(
            f"conv2d: input channels of {x.shape} do not match weight {weight.shape}")
    if bias.shape != (cout,):
        raise DimensionError(f"conv2d: bias shape {bias.shape} != ({cout},)")
    hp, wp = h + 2 * padding, w + 2 * padding
    if kh > hp or kw > wp:
        raise DimensionError(
            f"conv2d: kernel {kh}x{kw} larger than padded input {hp}x{wp}")
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1

    xp = (np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
          if padding else x.data)
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, cin * kh * kw)
    wmat = weight.data.reshape(cout, -1)
    out = (cols @ wmat.T).reshape(n, ho, wo, cout).transpose(0, 3, 1, 2)
    out = out + bias.data[None, :, None, None]

    def grad_fn(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, cout)
        gbias = g.sum(axis=(0, 2, 3))
        gweight = (g2.T @ cols).reshape(weight.shape)
        gwin = (g2 @ wmat).reshape(n, ho, wo, cin, kh, kw).transpose(0, 3, 1, 2, 4, 5)
        gxp = np.zeros((n, cin, hp, wp))
        for u in range(kh):
            for v in range(kw):
                gxp[:, :, u:u + stride * ho:stride,
                    v:v + stride * wo:stride] += gwin[..., u, v]
        gx = gxp[:, :, padding:padding + h, padding:padding + w] if padding else gxp
        return (gx, gweight, gbias)

    return _make(out, "conv2d", (x, weight, bias), grad_fn)


def maxpool2d(x, k: int, stride: int) -> Tensor:
    """Non-overlapping max pooling (k == stride only). Backward routes the
    gradient to each window's argmax, first occurrence in row-major order."""
    x = _as_tensor(x)
    if k != stride:
        raise ParameterError(
            f"maxpool2d: only k == stride is supported, got k={k} stride={stride}")
    if k < 1:
        raise ParameterError(f"maxpool2d: window must be >= 1, got {k}")
    if x.ndim != 4:
        raise DimensionError(f"maxpool2d: need 4-d input, got {x.shape}")
    n, c, h, w = x.shape
    if h % k or w % k:
        raise DimensionError(
            f"maxpool2d: spatial dims of {x.shape} not divisible by {k}")
    ho, wo = h // k, w // k
    win = x.data.reshape(n, c, ho, k, wo, k).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(n, c, ho, wo, k * k)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def grad_fn(g):
        gwin = np.zeros((n, c, ho, wo, k * k))
        np.put_along_axis(gwin, idx[..., None], g[..., None], axis=-1)
        gx = gwin.reshape(n, c, ho, wo, k, k).transpose(0, 1, 2, 4, 3, 5)
        return (gx.reshape(n, c, h, w),)

    return _make(out, "maxpool2d", (x,), grad_fn)


def upsample_nearest2d(x, factor: int) -> Tensor:
    """Replicate each pixel into a factor x factor block."""
    x = _as_tensor(x)
    if factor < 1:
        raise ParameterError(f"upsample factor must be >= 1, got {factor}")
    if x.ndim != 4:
        raise DimensionError(f"upsample_nearest2d: need 4-d input, got {x.shape}")
    n, c, h, w = x.shape
    out = x.data.repeat(factor, axis=2).repeat(factor, axis=3)

    def grad_fn(g):
        return (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),)

    return _make(out, "upsample", (x,), grad_fn)


def group_norm(x, groups: int, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Standardize over (channels/groups, H, W) per sample and group, then
    apply the per-channel affine transform."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    if x.ndim != 4:
        raise DimensionError(f"group_norm: need 4-d input, got {x.shape}")
    n, c, h, w = x.shape
    if groups < 1 or c % groups:
        raise ParameterError(
            f"group_norm: channels {c} not divisible by groups {groups}")
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(
            f"group_norm: affine params {gamma.shape}/{beta.shape} != ({c},)")
    m = (c // groups) * h * w
    xg = x.data.reshape(n, groups, m)
    mu = xg.mean(axis=2, keepdims=True)
    var = ((xg - mu) ** 2).mean(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xg - mu) * inv
    xhat_full = xhat.reshape(n, c, h, w)
    out = xhat_full * gamma.data[None, :, None, None] + beta.data[None, :, None, None]

    def grad_fn(g):
        ggamma = (g * xhat_full).sum(axis=(0, 2, 3))
        gbeta = g.sum(axis=(0, 2, 3))
        dxhat = (g * gamma.data[None, :, None, None]).reshape(n, groups, m)
        t1 = dxhat.mean(axis=2, keepdims=True)
        t2 = (dxhat * xhat).mean(axis=2, keepdims=True)
        gx = (inv * (dxhat - t1 - xhat * t2)).reshape(n, c, h, w)
        return (gx, ggamma, gbeta)

    return _make(out, "group_norm", (x, gamma, beta), grad_fn)


def dropout(x, p: float, training: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout: zero with probability p and scale survivors by
    1/(1-p) during training; exact identity otherwise."""
    x = _as_tensor(x)
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ParameterError("dropout in training mode needs an rng")
    scale = 1.0 / (1.0 - p)
    keep = (rng.random(x.shape) >= p) * scale
    return _make(x.data * keep, "dropout", (x,), lambda g: (g * keep,))
