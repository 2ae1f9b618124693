"""Reverse-mode automatic differentiation over a recorded operation tape.

Covers exactly the primitives the classifier graph needs: dense products,
elementwise nonlinearities, softmax, attention-style pooling, concatenation,
broadcast multiply, and a fused LSTM layer whose backward pass runs
backpropagation through time in one step.  Everything is float64.

Values live in ``Var`` nodes; trainable leaves are ``Param``.  Each op
appends a closure to the tape; ``Tape.backward`` seeds the output gradient
and replays the closures in reverse.  Sequence tensors are batch-first
(B, T, F).
"""

from __future__ import annotations

import numpy as np


class ShapeMismatchError(ValueError):
    pass


class NonFiniteActivationError(FloatingPointError):
    pass


class TapeConsumedError(RuntimeError):
    pass


class Var:
    """A value in the computation graph with a gradient slot."""

    __slots__ = ("value", "grad", "requires_grad")

    def __init__(self, value: np.ndarray, requires_grad: bool = True):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad


class Param(Var):
    """Named trainable leaf with persistent gradient storage."""

    __slots__ = ("name",)

    def __init__(self, name: str, value: np.ndarray):
        super().__init__(value)
        self.name = name
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


class Tape:
    """Ordered record of backward closures for one forward pass."""

    def __init__(self):
        self._steps = []
        self._consumed = False

    def record(self, backward_fn) -> None:
        self._steps.append(backward_fn)

    def backward(self, out: Var, seed: float = 1.0) -> None:
        """Seed d(out) and propagate gradients back to every reachable leaf."""
        if self._consumed:
            raise TapeConsumedError("tape already replayed; rerun the forward pass")
        self._consumed = True
        out.grad = np.full_like(out.value, seed)
        for step in reversed(self._steps):
            step()


def _acc(var: Var, grad: np.ndarray) -> None:
    if not var.requires_grad:
        return
    if var.grad is None:
        var.grad = grad
    else:
        var.grad = var.grad + grad


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to the shape it was broadcast up from."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def leaf(value: np.ndarray) -> Var:
    """Wrap input data; no gradient is accumulated for it."""
    return Var(value, requires_grad=False)


def add(tape: Tape, a: Var, b: Var) -> Var:
    out = Var(a.value + b.value)

    def back():
        _acc(a, _unbroadcast(out.grad, a.value.shape))
        _acc(b, _unbroadcast(out.grad, b.value.shape))
    tape.record(back)
    return out


def mul(tape: Tape, a: Var, b: Var) -> Var:
    out = Var(a.value * b.value)

    def back():
        _acc(a, _unbroadcast(out.grad * b.value, a.value.shape))
        _acc(b, _unbroadcast(out.grad * a.value, b.value.shape))
    tape.record(back)
    return out


def matmul(tape: Tape, x: Var, w: Var) -> Var:
    """(B, n) @ (n, m) -> (B, m)."""
    if x.value.ndim != 2 or w.value.ndim != 2:
        raise ShapeMismatchError("matmul expects 2-D operands")
    if x.value.shape[1] != w.value.shape[0]:
        raise ShapeMismatchError(
            f"inner dimensions differ: {x.value.shape} @ {w.value.shape}")
    out = Var(x.value @ w.value)

    def back():
        if x.requires_grad:
            _acc(x, out.grad @ w.value.T)
        if w.requires_grad:
            _acc(w, x.value.T @ out.grad)
    tape.record(back)
    return out


def reshape(tape: Tape, x: Var, shape: tuple) -> Var:
    old = x.value.shape
    out = Var(x.value.reshape(shape))

    def back():
        _acc(x, out.grad.reshape(old))
    tape.record(back)
    return out


def sigmoid(tape: Tape, x: Var) -> Var:
    # the exponential argument is kept non-positive so it cannot overflow
    ev = np.exp(-np.abs(x.value))
    y = np.where(x.value >= 0, 1.0 / (1.0 + ev), ev / (1.0 + ev))
    out = Var(y)

    def back():
        _acc(x, out.grad * y * (1.0 - y))
    tape.record(back)
    return out


def tanh(tape: Tape, x: Var) -> Var:
    y = np.tanh(x.value)
    out = Var(y)

    def back():
        _acc(x, out.grad * (1.0 - y * y))
    tape.record(back)
    return out


def relu(tape: Tape, x: Var) -> Var:
    mask = x.value > 0
    out = Var(np.where(mask, x.value, 0.0))

    def back():
        _acc(x, out.grad * mask)
    tape.record(back)
    return out


def softmax(tape: Tape, x: Var) -> Var:
    """Softmax over the last axis, shift-stabilized."""
    shifted = x.value - x.value.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Var(y)

    def back():
        g = out.grad
        _acc(x, y * (g - (g * y).sum(axis=-1, keepdims=True)))
    tape.record(back)
    return out


def concat(tape: Tape, parts: list[Var], axis: int = -1) -> Var:
    if not parts:
        raise ShapeMismatchError("nothing to concatenate")
    out = Var(np.concatenate([p.value for p in parts], axis=axis))
    sizes = [p.value.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def back():
        for p, g in zip(parts, np.split(out.grad, splits, axis=axis)):
            _acc(p, g)
    tape.record(back)
    return out


def stack_rows(tape: Tape, parts: list[Var]) -> Var:
    """Stack (B, L) vectors into (B, M, L) along a new middle axis."""
    if not parts:
        raise ShapeMismatchError("nothing to stack")
    out = Var(np.stack([p.value for p in parts], axis=1))

    def back():
        for i, p in enumerate(parts):
            _acc(p, out.grad[:, i, :])
    tape.record(back)
    return out


def mean_axis(tape: Tape, x: Var, axis: int) -> Var:
    n = x.value.shape[axis]
    out = Var(x.value.mean(axis=axis))

    def back():
        _acc(x, np.repeat(np.expand_dims(out.grad / n, axis), n, axis=axis))
    tape.record(back)
    return out


def dot_last(tape: Tape, x: Var, u: Var) -> Var:
    """Contract (B, T, H) with (H,) to scores (B, T)."""
    if x.value.shape[-1] != u.value.shape[0]:
        raise ShapeMismatchError(
            f"cannot contract {x.value.shape} with {u.value.shape}")
    out = Var(x.value @ u.value)

    def back():
        _acc(x, out.grad[..., None] * u.value)
        _acc(u, np.einsum("bt,bth->h", out.grad, x.value))
    tape.record(back)
    return out


def weighted_sum(tape: Tape, weights: Var, x: Var) -> Var:
    """Pool (B, T, H) rows with per-row weights (B, T) into (B, H)."""
    out = Var(np.matmul(weights.value[:, None, :], x.value)[:, 0, :])

    def back():
        _acc(weights, np.matmul(x.value, out.grad[..., None])[:, :, 0])
        _acc(x, weights.value[..., None] * out.grad[:, None, :])
    tape.record(back)
    return out


def merge_pairs_mean(tape: Tape, x: Var, factor: int) -> Var:
    """Average consecutive groups of ``factor`` timesteps of (B, T, H).

    A trailing remainder shorter than ``factor`` is dropped.
    """
    b, t, h = x.value.shape
    t_out = t // factor
    if t_out < 1:
        raise ShapeMismatchError(f"cannot merge {t} timesteps by {factor}")
    kept = t_out * factor
    total = x.value[:, 0:kept:factor, :].copy()
    for off in range(1, factor):
        total += x.value[:, off:kept:factor, :]
    out = Var(total / factor)

    def back():
        g = np.zeros((b, t, h))
        g[:, :kept, :] = np.repeat(out.grad / factor, factor, axis=1)
        _acc(x, g)
    tape.record(back)
    return out


def lstm_layer(tape: Tape, x: Var, wx: Var, wh: Var, b: Var) -> Var:
    """One LSTM layer over a full (B, T, F) sequence, hidden size H.

    Gate blocks in ``wx``/``wh``/``b`` are ordered input, forget, output,
    cell-candidate, so one sigmoid covers the first three blocks and one
    tanh the last.  State starts at zero.  Returns the hidden sequence
    (B, T, H); the backward closure runs full backpropagation through time.
    """
    bsz, t_len, f_in = x.value.shape
    if wx.value.shape[0] != f_in:
        raise ShapeMismatchError(
            f"input width {f_in} does not match weight shape {wx.value.shape}")
    h_dim = wx.value.shape[1] // 4
    if wx.value.shape[1] != 4 * h_dim or wh.value.shape != (h_dim, 4 * h_dim):
        raise ShapeMismatchError("LSTM weights must pack 4 gate blocks")
    h3 = 3 * h_dim

    whv = wh.value
    pre = x.value.reshape(bsz * t_len, f_in) @ wx.value
    pre = pre.reshape(bsz, t_len, 4 * h_dim) + b.value

    hs = np.empty((bsz, t_len, h_dim))
    cache = []
    h_prev = np.zeros((bsz, h_dim))
    c_prev = np.zeros((bsz, h_dim))
    for t in range(t_len):
        z = pre[:, t, :] + h_prev @ whv
        zs = z[:, :h3]
        ez = np.exp(-np.abs(zs))
        sig = np.where(zs >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))
        g = np.tanh(z[:, h3:])
        i = sig[:, :h_dim]
        f = sig[:, h_dim:2 * h_dim]
        o = sig[:, 2 * h_dim:]
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        hs[:, t, :] = h
        cache.append((sig, g, c_prev, tc, h_prev))
        h_prev, c_prev = h, c
    out = Var(hs)

    def back():
        d_pre = np.empty((bsz, t_len, 4 * h_dim))
        d_wh = np.zeros_like(whv)
        wh_t = whv.T
        dh_next = np.zeros((bsz, h_dim))
        dc_next = np.zeros((bsz, h_dim))
        for t in range(t_len - 1, -1, -1):
            sig, g, c_prev_t, tc, h_prev_t = cache[t]
            i = sig[:, :h_dim]
            f = sig[:, h_dim:2 * h_dim]
            o = sig[:, 2 * h_dim:]
            dh = out.grad[:, t, :] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = d_pre[:, t, :]
            dz[:, :h_dim] = dc * g
            dz[:, h_dim:2 * h_dim] = dc * c_prev_t
            dz[:, 2 * h_dim:h3] = do
            dz[:, :h3] *= sig * (1.0 - sig)
            dz[:, h3:] = (dc * i) * (1.0 - g * g)
            dc_next = dc * f
            d_wh += h_prev_t.T @ dz
            dh_next = dz @ wh_t
        flat = d_pre.reshape(bsz * t_len, 4 * h_dim)
        _acc(wx, x.value.reshape(bsz * t_len, f_in).T @ flat)
        _acc(wh, d_wh)
        _acc(b, flat.sum(axis=0))
        if x.requires_grad:
            _acc(x, (flat @ wx.value.T).reshape(bsz, t_len, f_in))
    tape.record(back)
    return out


def nll_mean(tape: Tape, probs: Var, labels: np.ndarray, eps: float = 1e-12) -> Var:
    """Mean negative log probability of the true classes.

    ``probs`` is (B, C) rows of class probabilities, ``labels`` the class
    indices; each row contributes -log(p[label] + eps).
    """
    labels = np.asarray(labels)
    bsz, n_classes = probs.value.shape
    if labels.shape != (bsz,):
        raise ShapeMismatchError(f"expected {bsz} labels, got {labels.shape}")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ShapeMismatchError("label index outside the class range")
    picked = probs.value[np.arange(bsz), labels]
    out = Var(-np.log(picked + eps).mean())

    def back():
        g = np.zeros_like(probs.value)
        g[np.arange(bsz), labels] = -out.grad / (bsz * (picked + eps))
        _acc(probs, g)
    tape.record(back)
    return out
