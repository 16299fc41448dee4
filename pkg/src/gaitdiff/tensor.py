"""Minimal dense-tensor math with reverse-mode automatic differentiation.

Eager numpy execution with an explicit gradient tape: ops run immediately
and, while a :class:`Tape` is active, append a backward closure. Because
records are appended in execution order, replaying them in reverse is a
reverse-topological traversal that visits each node exactly once.

Activations are float32 by default. Ops accept float64 tensors too (used
by the finite-difference gradient checks); those calls take the numpy
kernel path.

Usage::

    with Tape() as tape:
        loss = mse(model_forward(params, x), target)
    tape.backward(loss)
    opt.step()
"""

from __future__ import annotations

import numpy as np

from . import backend as K


class Tensor:
    """A numpy array plus gradient bookkeeping."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=np.float32):
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


_TAPES: list["Tape"] = []


def _tape() -> "Tape | None":
    return _TAPES[-1] if _TAPES else None


class Tape:
    """Ordered record of executed ops with their backward closures."""

    def __init__(self):
        self._records: list[tuple[Tensor, object]] = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.pop()
        return False

    def __len__(self) -> int:
        return len(self._records)

    def record(self, out: Tensor, backward) -> None:
        self._records.append((out, backward))

    def backward(self, loss: Tensor) -> None:
        """Accumulate gradients of ``loss`` into every tracked tensor."""
        if loss.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
        loss.grad = np.ones_like(loss.data)
        for out, fn in reversed(self._records):
            g = out.grad
            if g is not None:
                fn(g)


def _accum(t: Tensor, g: np.ndarray, fresh: bool = False) -> None:
    # fresh=True means g is a newly allocated array we may take ownership of
    if t.grad is None:
        t.grad = g if fresh else g.copy()
    else:
        t.grad += g


def _track(out: Tensor, backward, *parents: Tensor) -> Tensor:
    tape = _tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.record(out, backward)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_same_dtype(op: str, a: Tensor, b: Tensor) -> None:
    if a.data.dtype != b.data.dtype:
        raise ValueError(f"{op}: mixed dtypes {a.data.dtype} and {b.data.dtype}")


# ---------------------------------------------------------------------------
# core ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype("matmul", a, b)
    if a.data.ndim < 2 or b.data.ndim < 2 or a.data.shape[-1] != b.data.shape[-2]:
        raise ValueError(f"matmul: incompatible shapes {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data, dtype=None)

    def backward(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape))

    return _track(out, backward, a, b)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype("add", a, b)
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ValueError(f"add: shapes {a.data.shape} and {b.data.shape} do not broadcast") from None
    out = Tensor(a.data + b.data, dtype=None)

    def backward(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g, b.data.shape))

    return _track(out, backward, a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype("mul", a, b)
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ValueError(f"mul: shapes {a.data.shape} and {b.data.shape} do not broadcast") from None
    out = Tensor(a.data * b.data, dtype=None)

    def backward(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.data.shape), fresh=True)
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.data.shape), fresh=True)

    return _track(out, backward, a, b)


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * c, dtype=None)

    def backward(g):
        if a.requires_grad:
            _accum(a, g * c, fresh=True)

    return _track(out, backward, a)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    y = K.softmax_fwd(np.ascontiguousarray(x.data))
    out = Tensor(y, dtype=None)

    def backward(g):
        if x.requires_grad:
            _accum(x, K.softmax_bwd(y, g), fresh=True)

    return _track(out, backward, x)


def gelu(x: Tensor) -> Tensor:
    xd = np.ascontiguousarray(x.data)
    out = Tensor(K.gelu_fwd(xd), dtype=None)

    def backward(g):
        if x.requires_grad:
            _accum(x, K.gelu_bwd(xd, np.ascontiguousarray(g)), fresh=True)

    return _track(out, backward, x)


def layer_norm(x: Tensor, weight: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Layer norm over the last axis with learnable gain/offset."""
    d = x.data.shape[-1]
    if weight.data.shape != (d,) or bias.data.shape != (d,):
        raise ValueError(
            f"layer_norm: weight/bias shapes {weight.data.shape}/{bias.data.shape} do not match last axis {d}")
    x2 = np.ascontiguousarray(x.data.reshape(-1, d))
    y2, mean, rstd = K.layernorm_fwd(x2, weight.data, bias.data, eps)
    out = Tensor(y2.reshape(x.data.shape), dtype=None)

    def backward(g):
        g2 = g.reshape(-1, d)
        gx, gw, gb = K.layernorm_bwd(x2, weight.data, mean, rstd, g2)
        if x.requires_grad:
            _accum(x, gx.reshape(x.data.shape), fresh=True)
        if weight.requires_grad:
            _accum(weight, gw, fresh=True)
        if bias.requires_grad:
            _accum(bias, gb, fresh=True)

    return _track(out, backward, x, weight, bias)


def dropout(x: Tensor, p: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout with a seeded mask; identity when train is false."""
    if not train or p <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout: rng required when train=True and p > 0")
    keep = (rng.random(x.data.shape) >= p).astype(x.data.dtype)
    keep *= 1.0 / (1.0 - p)
    out = Tensor(x.data * keep, dtype=None)

    def backward(g):
        if x.requires_grad:
            _accum(x, g * keep, fresh=True)

    return _track(out, backward, x)


def embedding_lookup(table: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx)
    if not np.issubdtype(idx.dtype, np.integer):
        raise ValueError(f"embedding_lookup: integer indices required, got {idx.dtype}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise ValueError(
            f"embedding_lookup: index out of range for table of {table.data.shape[0]} rows")
    out = Tensor(table.data[idx], dtype=None)

    def backward(g):
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            np.add.at(gt, idx, g)
            _accum(table, gt, fresh=True)

    return _track(out, backward, table)


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), dtype=None)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                _accum(t, g[tuple(sl)])

    return _track(out, backward, *tensors)


def slice_axis(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    if start < 0 or start + length > x.data.shape[axis]:
        raise ValueError(
            f"slice_axis: [{start}:{start + length}) out of range for axis {axis} of shape {x.data.shape}")
    sl = [slice(None)] * x.data.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)
    out = Tensor(x.data[sl], dtype=None)

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[sl] = g
            _accum(x, gx, fresh=True)

    return _track(out, backward, x)


def reshape(x: Tensor, shape: tuple) -> Tensor:
    out = Tensor(x.data.reshape(shape), dtype=None)

    def backward(g):
        if x.requires_grad:
            _accum(x, g.reshape(x.data.shape))

    return _track(out, backward, x)


def transpose(x: Tensor, axes: tuple) -> Tensor:
    out = Tensor(np.transpose(x.data, axes), dtype=None)
    inv = tuple(np.argsort(axes))

    def backward(g):
        if x.requires_grad:
            _accum(x, np.transpose(g, inv))

    return _track(out, backward, x)


def mse(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype("mse", a, b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"mse: shapes {a.data.shape} and {b.data.shape} differ")
    diff = a.data - b.data
    out = Tensor(np.asarray(np.mean(diff * diff), dtype=a.data.dtype), dtype=None)
    n = diff.size

    def backward(g):
        coef = (2.0 / n) * g
        if a.requires_grad:
            _accum(a, coef * diff, fresh=True)
        if b.requires_grad:
            _accum(b, -coef * diff, fresh=True)

    return _track(out, backward, a, b)


# ---------------------------------------------------------------------------
# optimizer


def adamw_step(param: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
               t: int, lr: float, betas: tuple = (0.9, 0.999), eps: float = 1e-8,
               weight_decay: float = 0.0) -> None:
    """One decoupled-weight-decay Adam update, in place.

    Decay is applied to the parameter before the bias-corrected Adam delta.
    ``t`` is the 1-based step count.
    """
    K.adamw_update(param, grad, m, v, t, lr, betas[0], betas[1], eps, weight_decay)


class AdamW:
    """Adam with decoupled weight decay over a named parameter dict."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-4,
                 betas: tuple = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        self.t += 1
        for k, p in self.params.items():
            if p.grad is None:
                continue
            adamw_step(p.data, p.grad, self._m[k], self._v[k], self.t,
                       self.lr, self.betas, self.eps, self.weight_decay)


def grad_norm(params: dict[str, Tensor]) -> float:
    """Global L2 norm of all parameter gradients (zeros for absent grads)."""
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            g = p.grad.astype(np.float64, copy=False)
            total += float(np.dot(g.reshape(-1), g.reshape(-1)))
    return float(np.sqrt(total))
