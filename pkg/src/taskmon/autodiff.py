"""Minimal reverse-mode differentiation over numpy arrays.

A Tensor records its parents and a backward closure; backward() replays the
tape in reverse topological order. Everything is float64. The op set is
exactly what the goal predictor needs: a few dense primitives plus fused
steps (gated recurrent cell, masked softmax, cross-entropy) that keep the
tape short, since graph length dominates runtime in pure Python.
"""

from __future__ import annotations

import contextlib
from typing import Optional

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable tape construction inside the block (inference mode)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad and _GRAD_ENABLED
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() starts from a scalar")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            t, expanded = stack.pop()
            if expanded:
                order.append(t)
                continue
            if id(t) in seen:
                continue
            seen.add(id(t))
            stack.append((t, True))
            for p in t._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for t in reversed(order):
            if t._backward is not None and t.grad is not None:
                t._backward(t.grad)


def param(data, rng: Optional[np.random.Generator] = None, scale: float = 0.08) -> Tensor:
    """A trainable leaf. Pass an int/tuple shape with an rng to draw uniform
    values in [-scale, scale], or a ready array."""
    if rng is not None:
        shape = (data,) if isinstance(data, int) else tuple(data)
        data = rng.uniform(-scale, scale, size=shape)
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def const(data) -> Tensor:
    return Tensor(data)


def _acc(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    t.grad = g.copy() if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _node(data, parents, backward) -> Tensor:
    req = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, parents=tuple(parents), backward=backward)


# --- dense primitives -----------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def back(g):
        _acc(a, _unbroadcast(g, a.data.shape))
        _acc(b, _unbroadcast(g, b.data.shape))

    return _node(out_data, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def back(g):
        _acc(a, _unbroadcast(g * b.data, a.data.shape))
        _acc(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(out_data, (a, b), back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data @ b.data

    def back(g):
        _acc(a, g @ b.data.T)
        _acc(b, a.data.T @ g)

    return _node(out_data, (a, b), back)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def back(g):
        _acc(x, g * (1.0 - y * y))

    return _node(y, (x,), back)


def sigmoid(x: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-x.data))

    def back(g):
        _acc(x, g * y * (1.0 - y))

    return _node(y, (x,), back)


def concat(parts: list[Tensor], axis: int = 1) -> Tensor:
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]

    def back(g):
        offset = 0
        for p, s in zip(parts, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offset, offset + s)
            _acc(p, g[tuple(sl)])
            offset += s

    return _node(out_data, tuple(parts), back)


def narrow(x: Tensor, axis: int, start: int, size: int) -> Tensor:
    sl = [slice(None)] * x.data.ndim
    sl[axis] = slice(start, start + size)
    sl = tuple(sl)
    out_data = x.data[sl]

    def back(g):
        full = np.zeros_like(x.data)
        full[sl] = g
        _acc(x, full)

    return _node(out_data, (x,), back)


def reshape(x: Tensor, shape: tuple) -> Tensor:
    out_data = x.data.reshape(shape)

    def back(g):
        _acc(x, g.reshape(x.data.shape))

    return _node(out_data, (x,), back)


def repeat_rows(x: Tensor, k: int) -> Tensor:
    """(B, D) -> (B*k, D), each row repeated k times consecutively."""
    out_data = np.repeat(x.data, k, axis=0)

    def back(g):
        _acc(x, g.reshape(x.data.shape[0], k, -1).sum(axis=1))

    return _node(out_data, (x,), back)


def stack_time(steps: list[Tensor]) -> Tensor:
    """T tensors of (B, D) -> (B, T, D)."""
    out_data = np.stack([s.data for s in steps], axis=1)

    def back(g):
        for t, s in enumerate(steps):
            _acc(s, g[:, t, :])

    return _node(out_data, tuple(steps), back)


def sum_tensors(parts: list[Tensor]) -> Tensor:
    out_data = np.array(sum(float(p.data) for p in parts))

    def back(g):
        for p in parts:
            _acc(p, g.reshape(p.data.shape))

    return _node(out_data, tuple(parts), back)


# --- gathered / segmented ops ------------------------------------------------------


def embedding(W: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup; ids is an int array of any shape, output gains a trailing
    embedding axis. Backward scatter-adds into W."""
    ids = np.asarray(ids)
    out_data = W.data[ids]

    def back(g):
        if not W.requires_grad:
            return
        gw = np.zeros_like(W.data)
        np.add.at(gw, ids.reshape(-1), g.reshape(-1, W.data.shape[1]))
        _acc(W, gw)

    return _node(out_data, (W,), back)


def seg_mix(M: np.ndarray, X: Tensor) -> Tensor:
    """Constant per-example mixing matrix M (B, K, T) applied to X (B, T, D):
    rows of M average token vectors into segment vectors."""
    out_data = np.einsum("bkt,btd->bkd", M, X.data)

    def back(g):
        _acc(X, np.einsum("bkt,bkd->btd", M, g))

    return _node(out_data, (X,), back)


def row_mix(P: np.ndarray, X: Tensor) -> Tensor:
    """Constant weights P (B, T) over X (B, T, D) -> (B, D)."""
    out_data = np.einsum("bt,btd->bd", P, X.data)

    def back(g):
        _acc(X, P[:, :, None] * g[:, None, :])

    return _node(out_data, (X,), back)


def weighted_ctx(p: Tensor, S: Tensor) -> Tensor:
    """Attention expectation: p (B, K) over segment vectors S (B, K, D)."""
    out_data = np.einsum("bk,bkd->bd", p.data, S.data)

    def back(g):
        _acc(p, np.einsum("bd,bkd->bk", g, S.data))
        _acc(S, p.data[:, :, None] * g[:, None, :])

    return _node(out_data, (p, S), back)


def masked_softmax(scores: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax over axis 1 restricted to mask==1 entries; masked entries get
    probability exactly 0. Every row must have at least one valid entry."""
    m = np.asarray(mask, dtype=bool)
    if not m.any(axis=1).all():
        raise ValueError("softmax over a fully masked row")
    z = np.where(m, scores.data, -np.inf)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)

    def back(g):
        inner = (g * p).sum(axis=1, keepdims=True)
        _acc(scores, p * (g - inner))

    return _node(p, (scores,), back)


# --- fused steps --------------------------------------------------------------------


def lstm_step(x: Tensor, hc: Tensor, Wx: Tensor, Wh: Tensor, b: Tensor, mask: np.ndarray) -> Tensor:
    """One gated-cell step. hc packs [h | c] as (B, 2H); mask (B, 1) freezes
    finished rows (their state passes through unchanged). Gate order i,f,g,o."""
    B, twoH = hc.data.shape
    H = twoH // 2
    h, c = hc.data[:, :H], hc.data[:, H:]
    m = np.asarray(mask, dtype=np.float64).reshape(B, 1)

    z = x.data @ Wx.data + h @ Wh.data + b.data
    zi, zf, zg, zo = z[:, :H], z[:, H : 2 * H], z[:, 2 * H : 3 * H], z[:, 3 * H :]
    i = 1.0 / (1.0 + np.exp(-zi))
    f = 1.0 / (1.0 + np.exp(-zf))
    g_ = np.tanh(zg)
    o = 1.0 / (1.0 + np.exp(-zo))
    c_new = f * c + i * g_
    tc = np.tanh(c_new)
    h_new = o * tc
    out_data = np.concatenate([m * h_new + (1.0 - m) * h, m * c_new + (1.0 - m) * c], axis=1)

    def back(grad):
        gh_out, gc_out = grad[:, :H], grad[:, H:]
        gh_new = gh_out * m
        gc_new = gc_out * m + gh_new * o * (1.0 - tc * tc)
        go = gh_new * tc
        gi = gc_new * g_
        gf = gc_new * c
        gg = gc_new * i
        gz = np.concatenate(
            [gi * i * (1.0 - i), gf * f * (1.0 - f), gg * (1.0 - g_ * g_), go * o * (1.0 - o)],
            axis=1,
        )
        _acc(x, gz @ Wx.data.T)
        gh_prev = gz @ Wh.data.T + gh_out * (1.0 - m)
        gc_prev = gc_new * f + gc_out * (1.0 - m)
        _acc(hc, np.concatenate([gh_prev, gc_prev], axis=1))
        _acc(Wx, x.data.T @ gz)
        _acc(Wh, h.T @ gz)
        _acc(b, gz.sum(axis=0))

    return _node(out_data, (x, hc, Wx, Wh, b), back)


def ce_sum(logits: Tensor, targets: np.ndarray, mask: np.ndarray) -> tuple[Tensor, int]:
    """Summed categorical cross-entropy over the rows where mask==1; returns
    (scalar loss-sum tensor, number of counted rows)."""
    t = np.asarray(targets, dtype=np.int64)
    m = np.asarray(mask, dtype=bool)
    n = int(m.sum())
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(len(t))
    nll = lse - z[rows, t]
    out_data = np.array(float(nll[m].sum()))

    def back(g):
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        p[rows, t] -= 1.0
        p[~m] = 0.0
        _acc(logits, float(g) * p)

    return _node(out_data, (logits,), back), n


def log_softmax_np(logits: np.ndarray) -> np.ndarray:
    """Inference-side log distribution (no tape)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


# --- optimizer ------------------------------------------------------------------------


class Adam:
    """Adaptive-moment gradient descent with bias correction."""

    def __init__(self, params: list[Tensor], lr: float = 0.01, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
