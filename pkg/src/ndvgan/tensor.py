"""Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable op builds its output through ``_result``, which attaches
the parents and a closure mapping the output gradient to parent gradients.
``backward`` orders the graph into a :class:`Tape` and replays it in reverse.
"""
from __future__ import annotations

import contextlib
import itertools
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, NumericError, ShapeError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording the graph (finite differences, sampling)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled():
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "__weakref__")

    def __init__(self, data, requires_grad=False):
        self.data = np.array(data, dtype=np.float64)
        if not np.isfinite(self.data).all():
            raise NumericError("tensor constructed from non-finite values")
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None

    # --- construction helpers -------------------------------------------------
    @staticmethod
    def _result(data, parents, backward_fn):
        data = np.asarray(data, dtype=np.float64)
        if not np.isfinite(data).all():
            raise NumericError("non-finite value produced by forward op")
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        track = _grad_enabled and any(p.requires_grad for p in parents)
        out.requires_grad = track
        if track:
            out._parents = tuple(parents)
            out._backward = backward_fn
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self):
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.requires_grad = False
        out._parents = ()
        out._backward = None
        return out

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self):
        backward(self)

    # --- arithmetic -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ContractError("division by a tensor is not supported")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes)

    def sum(self, axis=None):
        return tensor_sum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def tanh(self):
        return apply_activation(self, "tanh")

    def relu(self):
        return apply_activation(self, "relu")

    def sigmoid(self):
        return apply_activation(self, "sigmoid")


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data):
    return Tensor(data, requires_grad=True)


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


# --- elementwise ----------------------------------------------------------------
def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._result(a.data + b.data, (a, b), bw)


def neg(a):
    return Tensor._result(-a.data, (a,), lambda g: (-g,))


def mul(a, b):
    if not isinstance(b, Tensor):
        c = float(b)
        return Tensor._result(a.data * c, (a,), lambda g: (g * c,))
    a = as_tensor(a)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._result(a.data * b.data, (a, b), bw)


ACTIVATIONS = ("tanh", "relu", "sigmoid")


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def apply_activation(x, kind):
    """Elementwise tanh, relu or sigmoid."""
    if kind == "tanh":
        y = np.tanh(x.data)
        return Tensor._result(y, (x,), lambda g: (g * (1.0 - y * y),))
    if kind == "relu":
        mask = x.data > 0
        return Tensor._result(x.data * mask, (x,), lambda g: (g * mask,))
    if kind == "sigmoid":
        y = _sigmoid(x.data)
        return Tensor._result(y, (x,), lambda g: (g * y * (1.0 - y),))
    raise ContractError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def leaky_relu(x, slope=0.2):
    scale = np.where(x.data > 0, 1.0, slope)
    return Tensor._result(x.data * scale, (x,), lambda g: (g * scale,))


def softplus(x):
    """log(1 + exp(x)), stable for large |x|."""
    y = np.logaddexp(0.0, x.data)
    return Tensor._result(y, (x,), lambda g: (g * _sigmoid(x.data),))


def log_softmax(x, axis=-1):
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse

    def bw(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return Tensor._result(y, (x,), bw)


# --- linear algebra and shape ops -------------------------------------------------
def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")

    def bw(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor._result(a.data @ b.data, (a, b), bw)


def concat_features(a, b):
    """Concatenate along the last axis, ``a``'s features first."""
    if a.shape[:-1] != b.shape[:-1]:
        raise ShapeError(f"leading dimensions differ: {a.shape} vs {b.shape}")
    return concat([a, b], axis=-1)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    ax = axis % data.ndim
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def bw(g):
        return tuple(
            np.take(g, np.arange(lo, hi), axis=ax) for lo, hi in zip(bounds[:-1], bounds[1:])
        )

    return Tensor._result(data, tensors, bw)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    data = np.stack([t.data for t in tensors], axis=axis)
    ax = axis % data.ndim

    def bw(g):
        return tuple(np.take(g, i, axis=ax) for i in range(len(tensors)))

    return Tensor._result(data, tensors, bw)


def getitem(x, idx):
    data = x.data[idx]

    def bw(g):
        out = np.zeros_like(x.data)
        if _is_fancy(idx):
            np.add.at(out, idx, g)
        else:
            out[idx] += g
        return (out,)

    return Tensor._result(data, (x,), bw)


def _is_fancy(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def reshape(x, shape):
    return Tensor._result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes):
    axes = tuple(axes) if axes else tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))
    return Tensor._result(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def tensor_sum(x, axis=None):
    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return Tensor._result(x.data.sum(axis=axis), (x,), bw)


def mean(x, axis=None):
    if axis is None:
        n = x.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([x.shape[a] for a in axes]))
    return tensor_sum(x, axis) * (1.0 / n)


def sqrt(x):
    y = np.sqrt(x.data)

    def bw(g):
        return (g * 0.5 / y,)

    return Tensor._result(y, (x,), bw)


# --- convolutions -----------------------------------------------------------------
def _tup(v, nd):
    return tuple(v) if isinstance(v, (tuple, list)) else (v,) * nd


def _windows(xp, kernel, stride):
    """(B, C, *S) -> strided view (B, C, *O, *K)."""
    nd = len(kernel)
    v = sliding_window_view(xp, kernel, axis=tuple(range(2, 2 + nd)))
    return v[(slice(None), slice(None)) + tuple(slice(None, None, s) for s in stride)]


def _col2im(cols, full_shape, kernel, stride):
    """Adjoint of ``_windows``: scatter-add (B, C, *O, *K) into (B, C, *full)."""
    nd = len(kernel)
    out = np.zeros(full_shape)
    osz = cols.shape[2 : 2 + nd]
    for kk in itertools.product(*(range(k) for k in kernel)):
        sl = tuple(slice(k, k + s * (o - 1) + 1, s) for k, s, o in zip(kk, stride, osz))
        out[(slice(None), slice(None)) + sl] += cols[(Ellipsis,) + kk]
    return out


def _crop(a, pad):
    return a[(slice(None), slice(None)) + tuple(slice(p, a.shape[2 + i] - p) for i, p in enumerate(pad))]


def conv(x, w, stride=1, padding=0):
    """N-d cross-correlation. x: (B, Cin, *S), w: (Cout, Cin, *K)."""
    nd = w.ndim - 2
    if x.ndim != nd + 2 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv shape mismatch: input {x.shape}, weight {w.shape}")
    kernel, stride, pad = w.shape[2:], _tup(stride, nd), _tup(padding, nd)
    xp = np.pad(x.data, [(0, 0), (0, 0)] + [(p, p) for p in pad])
    if any(xp.shape[2 + i] < kernel[i] for i in range(nd)):
        raise ShapeError(f"conv kernel {kernel} larger than padded input {xp.shape[2:]}")
    win = _windows(xp, kernel, stride)
    red = list(range(2 + nd, 2 + 2 * nd))
    out = np.tensordot(win, w.data, axes=([1] + red, [1] + list(range(2, 2 + nd))))
    out = np.moveaxis(out, -1, 1)

    def bw(g):
        gw = np.tensordot(g, win, axes=([0] + list(range(2, 2 + nd)), [0] + list(range(2, 2 + nd))))
        gcols = np.moveaxis(np.tensordot(g, w.data, axes=([1], [0])), 1 + nd, 1)
        gx = _crop(_col2im(gcols, xp.shape, kernel, stride), pad)
        return gx, gw

    return Tensor._result(out, (x, w), bw)


def conv_transpose(x, w, stride=1, padding=0):
    """Adjoint of ``conv`` w.r.t. its input. x: (B, Cin, *I), w: (Cin, Cout, *K).

    Output length per axis is (I - 1) * stride - 2 * padding + K.
    """
    nd = w.ndim - 2
    if x.ndim != nd + 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"conv_transpose shape mismatch: input {x.shape}, weight {w.shape}")
    kernel, stride, pad = w.shape[2:], _tup(stride, nd), _tup(padding, nd)
    isz = x.shape[2:]
    full = tuple((i - 1) * s + k for i, s, k in zip(isz, stride, kernel))
    if any(f - 2 * p < 1 for f, p in zip(full, pad)):
        raise ShapeError(f"conv_transpose padding {pad} too large for output {full}")
    cols = np.moveaxis(np.tensordot(x.data, w.data, axes=([1], [0])), 1 + nd, 1)
    out = _crop(_col2im(cols, (x.shape[0], w.shape[1]) + full, kernel, stride), pad)

    def bw(g):
        gp = np.pad(g, [(0, 0), (0, 0)] + [(p, p) for p in pad])
        win = _windows(gp, kernel, stride)
        red = list(range(2 + nd, 2 + 2 * nd))
        gx = np.moveaxis(np.tensordot(win, w.data, axes=([1] + red, [1] + list(range(2, 2 + nd)))), -1, 1)
        sp = list(range(2, 2 + nd))
        gw = np.tensordot(x.data, win, axes=([0] + sp, [0] + sp))
        return gx, gw

    return Tensor._result(out, (x, w), bw)


# --- reverse pass -------------------------------------------------------------------
@dataclass
class Tape:
    """Operations reachable from a root, inputs before the ops that consume them."""

    nodes: list = field(default_factory=list)

    @classmethod
    def from_root(cls, root):
        order, seen = [], set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        return cls(order)

    def leaves(self):
        return [n for n in self.nodes if not n._parents]


def backward(loss, params=None):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every requires_grad leaf.

    ``params`` lists leaves that should end up with a gradient buffer even when
    they are unreachable from ``loss`` (they receive zeros).
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = Tape.from_root(loss) if loss.requires_grad else Tape()
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if not node._parents:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for p, pg in zip(node._parents, node._backward(g)):
            if not p.requires_grad:
                continue
            pid = id(p)
            grads[pid] = pg if pid not in grads else grads[pid] + pg
    for p in params or ():
        if p.grad is None:
            p.grad = np.zeros_like(p.data)
    return tape


def grad_check(f, params, eps=1e-5, analytic_hook=None, report=False):
    """Compare reverse-mode gradients of scalar ``f()`` with central differences.

    Returns max |analytic - numeric| / (|numeric| + 1e-12) over every entry of
    every parameter. With ``report=True`` returns a list of
    ``(max_error, flat_index)`` per parameter instead.
    ``analytic_hook(grads)`` may mutate the analytic gradients before comparison.
    """
    if eps <= 0:
        raise ContractError("eps must be positive")
    for p in params:
        p.grad = None
    loss = f()
    backward(loss, params)
    analytic = [p.grad.copy() for p in params]
    if analytic_hook is not None:
        analytic_hook(analytic)
    per_param = []
    with no_grad():
        for p, ga in zip(params, analytic):
            base = p.data
            flat = base.reshape(-1)
            worst, worst_idx = 0.0, -1
            for i in range(flat.size):
                vals = []
                for sign in (1.0, -1.0):
                    pert = flat.copy()
                    pert[i] += sign * eps
                    p.data = pert.reshape(base.shape)
                    try:
                        v = f().item()
                    except NumericError as exc:
                        p.data = base
                        raise NumericError(f"non-finite f during finite differences: {exc}") from exc
                    if not np.isfinite(v):
                        p.data = base
                        raise NumericError("non-finite f during finite differences")
                    vals.append(v)
                p.data = base
                num = (vals[0] - vals[1]) / (2.0 * eps)
                err = abs(ga.reshape(-1)[i] - num) / (abs(num) + 1e-12)
                if err > worst:
                    worst, worst_idx = err, i
            per_param.append((worst, worst_idx))
    if report:
        return per_param
    return max((e for e, _ in per_param), default=0.0)


# --- optimizer ----------------------------------------------------------------------
@dataclass
class AdamState:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state):
    """One bias-corrected Adam update, in place on ``params[i].data``."""
    if state.lr <= 0:
        raise ContractError("learning rate must be positive")
    if len(params) != len(grads):
        raise ContractError("params and grads differ in length")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.shape or state.m[i].shape != p.shape:
            raise ContractError(f"shape mismatch in adam_step: param {p.shape}, grad {g.shape}")
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        mhat = state.m[i] / c1
        vhat = state.v[i] / c2
        p.data = p.data - state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return params, state


class Adam:
    def __init__(self, params, lr=2e-4, betas=(0.5, 0.999), eps=1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step(self.params, grads, self.state)
