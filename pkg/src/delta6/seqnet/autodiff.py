"""Minimal reverse-mode autodiff over numpy arrays.

A :class:`Tensor` records the op that produced it and a closure that pushes
its gradient to the parents.  ``backward`` walks the graph in reverse
topological order.  Recurrent layers are fused into single sequence ops
with hand-written BPTT so the graph stays small.
"""
from __future__ import annotations

import contextlib

import numpy as np


class NonFiniteError(FloatingPointError):
    """A forward value or gradient became NaN/inf."""


class ShapeError(ValueError):
    pass


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype or np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every leaf's ``grad``."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            stack.extend((p, False) for p in node._parents if id(p) not in seen)
        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise NonFiniteError("non-finite gradient during backward")
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                grads[id(p)] = grads[id(p)] + pg if id(p) in grads else pg

    # operator sugar
    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(_t(o), self)

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, o):
        return matmul(self, o)

    def __getitem__(self, idx):
        return getitem(self, idx)


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward) -> Tensor:
    out = Tensor(data, dtype=data.dtype)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"cannot broadcast {a.shape} with {b.shape}") from exc


# -- elementwise -----------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    _check_broadcast(a, b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    _check_broadcast(a, b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    _check_broadcast(a, b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def sigmoid(x) -> Tensor:
    x = _t(x)
    y = _sigmoid(x.data)
    return _make(y, (x,), lambda g: (g * y * (1 - y),))


def tanh(x) -> Tensor:
    x = _t(x)
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1 - y * y),))


def relu(x) -> Tensor:
    x = _t(x)
    m = x.data > 0
    return _make(x.data * m, (x,), lambda g: (g * m,))


def gelu(x) -> Tensor:
    """tanh approximation."""
    x = _t(x)
    c = np.sqrt(2 / np.pi)
    u = c * (x.data + 0.044715 * x.data**3)
    th = np.tanh(u)
    y = 0.5 * x.data * (1 + th)

    def back(g):
        du = c * (1 + 3 * 0.044715 * x.data**2)
        return (g * (0.5 * (1 + th) + 0.5 * x.data * (1 - th * th) * du),)
    return _make(y, (x,), back)


def dropout(x, p: float, rng: np.random.Generator | None, training: bool = True) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""
    x = _t(x)
    if not training or p == 0.0:
        return x
    if not 0 <= p < 1:
        raise ValueError("dropout probability must lie in [0, 1)")
    mask = (rng.random(x.shape) >= p).astype(x.data.dtype) / (1 - p)
    return _make(x.data * mask, (x,), lambda g: (g * mask,))


def _sigmoid(z):
    return 0.5 * (1 + np.tanh(0.5 * z))


# -- linear algebra and shape ----------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"matmul shapes {a.shape} @ {b.shape}")
    y = a.data @ b.data

    def back(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        if a.ndim >= 2 and b.ndim == 2:
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return _unbroadcast(ga, a.shape), gb
    return _make(y, (a, b), back)


def reshape(x, shape) -> Tensor:
    x = _t(x)
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes) -> Tensor:
    x = _t(x)
    inv = np.argsort(axes)
    return _make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def getitem(x, idx) -> Tensor:
    x = _t(x)

    def back(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g) if _fancy(idx) else full.__setitem__(idx, g)
        return (full,)
    return _make(x.data[idx], (x,), back)


def _fancy(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(xs, axis: int = -1) -> Tensor:
    xs = [_t(x) for x in xs]
    sizes = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return _make(np.concatenate([x.data for x in xs], axis=axis), tuple(xs),
                 lambda g: tuple(np.split(g, sizes, axis=axis)))


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = _t(x)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)
    return _make(np.sum(x.data, axis=axis, keepdims=keepdims), (x,), back)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _t(x)
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis, keepdims), 1.0 / n)


def softmax(x, axis: int = -1) -> Tensor:
    x = _t(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    return _make(y, (x,), lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then scale and shift."""
    x, gamma, beta = _t(x), _t(gamma), _t(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xh = xc * inv
    y = xh * gamma.data + beta.data

    def back(g):
        n = x.shape[-1]
        gx_h = g * gamma.data
        gx = inv / n * (n * gx_h - gx_h.sum(-1, keepdims=True)
                        - xh * (gx_h * xh).sum(-1, keepdims=True))
        return gx, _unbroadcast(g * xh, gamma.shape), _unbroadcast(g, beta.shape)
    return _make(y, (x, gamma, beta), back)


def mse_loss(pred, target) -> Tensor:
    pred, target = _t(pred), _t(target)
    if pred.shape != target.shape:
        raise ShapeError(f"loss shapes {pred.shape} vs {target.shape}")
    d = pred.data - target.data
    n = d.size
    out = np.asarray(np.mean(d * d), dtype=pred.data.dtype)
    if not np.isfinite(out):
        raise NonFiniteError("non-finite loss")
    return _make(out, (pred, target), lambda g: (g * 2 * d / n, -g * 2 * d / n))


# -- fused recurrent sequence ops ------------------------------------------------

def gru_sequence(x, w_ih, w_hh, b_ih, b_hh) -> Tensor:
    """GRU over a (B, T, I) sequence from a zero state; returns (B, T, H).

    Gate layout along the last axis of the weights is (reset, update, new);
    the new-gate hidden term sits inside the reset product.
    """
    x, w_ih, w_hh, b_ih, b_hh = map(_t, (x, w_ih, w_hh, b_ih, b_hh))
    B, T, _ = x.shape
    H = w_hh.shape[0]
    if w_ih.shape != (x.shape[2], 3 * H) or w_hh.shape != (H, 3 * H):
        raise ShapeError("GRU weight shapes do not match input/hidden sizes")
    gi = x.data @ w_ih.data + b_ih.data
    h = np.zeros((B, H), dtype=x.data.dtype)
    hs = np.empty((B, T, H), dtype=x.data.dtype)
    cache = []
    for t in range(T):
        gh = h @ w_hh.data + b_hh.data
        r = _sigmoid(gi[:, t, :H] + gh[:, :H])
        z = _sigmoid(gi[:, t, H:2 * H] + gh[:, H:2 * H])
        n = np.tanh(gi[:, t, 2 * H:] + r * gh[:, 2 * H:])
        cache.append((h, r, z, n, gh[:, 2 * H:]))
        h = (1 - z) * n + z * h
        hs[:, t] = h

    def back(g):
        dgi = np.empty_like(gi)
        dw_hh = np.zeros_like(w_hh.data)
        db_hh = np.zeros_like(b_hh.data)
        dh = np.zeros((B, H), dtype=g.dtype)
        for t in range(T - 1, -1, -1):
            hp, r, z, n, ghn = cache[t]
            dh = dh + g[:, t]
            dn = dh * (1 - z)
            dz = dh * (hp - n)
            dn_pre = dn * (1 - n * n)
            dr_pre = dn_pre * ghn * r * (1 - r)
            dz_pre = dz * z * (1 - z)
            dgi[:, t, :H] = dr_pre
            dgi[:, t, H:2 * H] = dz_pre
            dgi[:, t, 2 * H:] = dn_pre
            dgh = np.concatenate([dr_pre, dz_pre, dn_pre * r], axis=1)
            dw_hh += hp.T @ dgh
            db_hh += dgh.sum(0)
            dh = dh * z + dgh @ w_hh.data.T
        flat = dgi.reshape(B * T, -1)
        return (dgi @ w_ih.data.T, x.data.reshape(B * T, -1).T @ flat,
                dw_hh, flat.sum(0), db_hh)
    return _make(hs, (x, w_ih, w_hh, b_ih, b_hh), back)


def lstm_sequence(x, w_ih, w_hh, b_ih, b_hh) -> Tensor:
    """LSTM over a (B, T, I) sequence from zero states; returns (B, T, H).

    Gate layout is (input, forget, cell, output).
    """
    x, w_ih, w_hh, b_ih, b_hh = map(_t, (x, w_ih, w_hh, b_ih, b_hh))
    B, T, _ = x.shape
    H = w_hh.shape[0]
    if w_ih.shape != (x.shape[2], 4 * H) or w_hh.shape != (H, 4 * H):
        raise ShapeError("LSTM weight shapes do not match input/hidden sizes")
    gx = x.data @ w_ih.data + (b_ih.data + b_hh.data)
    h = np.zeros((B, H), dtype=x.data.dtype)
    c = np.zeros_like(h)
    hs = np.empty((B, T, H), dtype=x.data.dtype)
    cache = []
    for t in range(T):
        a = gx[:, t] + h @ w_hh.data
        i = _sigmoid(a[:, :H])
        f = _sigmoid(a[:, H:2 * H])
        gg = np.tanh(a[:, 2 * H:3 * H])
        o = _sigmoid(a[:, 3 * H:])
        c_new = f * c + i * gg
        tc = np.tanh(c_new)
        cache.append((h, c, i, f, gg, o, tc))
        h, c = o * tc, c_new
        hs[:, t] = h

    def back(g):
        da_all = np.empty_like(gx)
        dw_hh = np.zeros_like(w_hh.data)
        dh = np.zeros((B, H), dtype=g.dtype)
        dc = np.zeros_like(dh)
        for t in range(T - 1, -1, -1):
            hp, cp, i, f, gg, o, tc = cache[t]
            dh = dh + g[:, t]
            dc = dc + dh * o * (1 - tc * tc)
            da = np.concatenate([dc * gg * i * (1 - i), dc * cp * f * (1 - f),
                                 dc * i * (1 - gg * gg), dh * tc * o * (1 - o)], axis=1)
            da_all[:, t] = da
            dw_hh += hp.T @ da
            dc = dc * f
            dh = da @ w_hh.data.T
        flat = da_all.reshape(B * T, -1)
        db = flat.sum(0)
        return (da_all @ w_ih.data.T, x.data.reshape(B * T, -1).T @ flat, dw_hh, db, db.copy())
    return _make(hs, (x, w_ih, w_hh, b_ih, b_hh), back)


# -- checking --------------------------------------------------------------------

def gradcheck(fn, inputs, eps: float = 1e-5) -> float:
    """Max relative error between backprop and central differences.

    ``fn`` maps the list of input tensors to a scalar tensor.  For each
    input the error is ``max|a - n| / max(max|a|, max|n|)``, i.e. relative
    to that tensor's gradient scale, so exactly-zero entries (such as an
    attention key bias) do not divide finite-difference noise by zero.
    """
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    fn(inputs).backward()
    worst = 0.0
    for t in inputs:
        ana = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        num = np.empty(flat.size)
        with no_grad():
            for j in range(flat.size):
                old = flat[j]
                flat[j] = old + eps
                fp = float(fn(inputs).data)
                flat[j] = old - eps
                fm = float(fn(inputs).data)
                flat[j] = old
                num[j] = (fp - fm) / (2 * eps)
        a = ana.reshape(-1)
        scale = max(np.abs(a).max(), np.abs(num).max(), 1e-12)
        worst = max(worst, float(np.abs(a - num).max() / scale))
    return worst
