"""Transformer noise predictor.

Two 2-layer MLP encoders turn the delayed history into tokens: one for
per-step (state, previous action) I/O pairs, one for per-step goals. A
linear map of the one-hot diffusion step contributes one more context
token. Noisy future actions are embedded, get learned positions, and
query the context through M pre-norm decoder layers of multi-head
attention; the action block also self-attends causally (token i sees
actions <= i). A linear head reads per-token noise predictions.

An ablation mode (goal_concat) drops the separate goal encoder and
concatenates goals onto the I/O pairs instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

NEG_INF = -1e9


@dataclass(frozen=True)
class DenoiserConfig:
    history_len: int = 8
    predict_len: int = 4
    token_dim: int = 128
    layers: int = 6
    heads: int = 8
    dropout: float = 0.3
    diffusion_steps: int = 10
    state_dim: int = 14
    action_dim: int = 4
    goal_dim: int = 3
    goal_concat: bool = False

    def __post_init__(self):
        if self.token_dim % self.heads != 0:
            raise ValueError(f"token_dim {self.token_dim} not divisible by heads {self.heads}")
        if self.diffusion_steps < 1:
            raise ValueError("diffusion_steps must be >= 1")

    @property
    def context_len(self) -> int:
        # io tokens + goal tokens (separate mode) + step token
        return self.history_len + (0 if self.goal_concat else self.history_len) + 1

    def to_dict(self) -> dict:
        return {
            "history_len": self.history_len, "predict_len": self.predict_len,
            "token_dim": self.token_dim, "layers": self.layers, "heads": self.heads,
            "dropout": self.dropout, "diffusion_steps": self.diffusion_steps,
            "state_dim": self.state_dim, "action_dim": self.action_dim,
            "goal_dim": self.goal_dim, "goal_concat": self.goal_concat,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserConfig":
        return cls(**d)


def param_shapes(cfg: DenoiserConfig) -> list:
    """(name, shape, init_kind) for every parameter, in creation order."""
    d = cfg.token_dim
    io_in = cfg.state_dim + cfg.action_dim + (cfg.goal_dim if cfg.goal_concat else 0)
    shapes = [
        ("io_enc.w1", (io_in, d), "linear"), ("io_enc.b1", (d,), "zeros"),
        ("io_enc.w2", (d, d), "linear"), ("io_enc.b2", (d,), "zeros"),
    ]
    if not cfg.goal_concat:
        shapes += [
            ("goal_enc.w1", (cfg.goal_dim, d), "linear"), ("goal_enc.b1", (d,), "zeros"),
            ("goal_enc.w2", (d, d), "linear"), ("goal_enc.b2", (d,), "zeros"),
        ]
    shapes += [
        ("act_embed.w1", (cfg.action_dim, d), "linear"), ("act_embed.b1", (d,), "zeros"),
        ("act_embed.w2", (d, d), "linear"), ("act_embed.b2", (d,), "zeros"),
        ("step_embed.w", (cfg.diffusion_steps, d), "linear"),
        ("step_embed.b", (d,), "zeros"),
        ("pos.io", (cfg.history_len, d), "pos"),
    ]
    if not cfg.goal_concat:
        shapes.append(("pos.goal", (cfg.history_len, d), "pos"))
    shapes += [
        ("pos.act", (cfg.predict_len, d), "pos"),
        ("ln_ctx.w", (d,), "ones"), ("ln_ctx.b", (d,), "zeros"),
    ]
    for i in range(cfg.layers):
        p = f"dec.{i}."
        shapes += [
            (p + "ln1.w", (d,), "ones"), (p + "ln1.b", (d,), "zeros"),
            (p + "attn.wq", (d, d), "linear"), (p + "attn.bq", (d,), "zeros"),
            (p + "attn.wk", (d, d), "linear"), (p + "attn.bk", (d,), "zeros"),
            (p + "attn.wv", (d, d), "linear"), (p + "attn.bv", (d,), "zeros"),
            (p + "attn.wo", (d, d), "linear"), (p + "attn.bo", (d,), "zeros"),
            (p + "ln2.w", (d,), "ones"), (p + "ln2.b", (d,), "zeros"),
            (p + "ff.w1", (d, 4 * d), "linear"), (p + "ff.b1", (4 * d,), "zeros"),
            (p + "ff.w2", (4 * d, d), "linear"), (p + "ff.b2", (d,), "zeros"),
        ]
    shapes += [
        ("ln_f.w", (d,), "ones"), ("ln_f.b", (d,), "zeros"),
        ("head.w", (d, cfg.action_dim), "linear"), ("head.b", (cfg.action_dim,), "zeros"),
    ]
    return shapes


def param_count(cfg: DenoiserConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape, _ in param_shapes(cfg))


def init_params(cfg: DenoiserConfig, seed: int, dtype=np.float32) -> dict:
    """U(-1/sqrt(fan_in), ..) linears, zero biases, unit LN gains, 0.02*N(0,1)
    positional tables; drawn in param_shapes order from default_rng(seed)."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape, kind in param_shapes(cfg):
        if kind == "linear":
            bound = 1.0 / math.sqrt(shape[0])
            data = rng.uniform(-bound, bound, size=shape)
        elif kind == "pos":
            data = 0.02 * rng.standard_normal(shape)
        elif kind == "ones":
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        params[name] = Tensor(data, requires_grad=True, dtype=dtype)
    return params


def _action_mask(ctx_len: int, n: int, dtype) -> np.ndarray:
    """Additive mask (1,1,n,ctx+n): context fully visible, actions causal."""
    m = np.zeros((n, ctx_len + n), dtype=dtype)
    for i in range(n):
        m[i, ctx_len + i + 1:] = NEG_INF
    return m.reshape(1, 1, n, ctx_len + n)


class DenoiserModel:
    def __init__(self, config: DenoiserConfig, seed: int = 0, dtype=np.float32,
                 params: dict | None = None):
        self.config = config
        self.dtype = dtype
        self.params = params if params is not None else init_params(config, seed, dtype)
        self._mask = _action_mask(config.context_len, config.predict_len, dtype)

    def param_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def _p(self, name: str) -> Tensor:
        return self.params[name]

    def _mlp2(self, x: Tensor, prefix: str) -> Tensor:
        h = T.add(T.matmul(x, self._p(prefix + ".w1")), self._p(prefix + ".b1"))
        h = T.gelu(h)
        return T.add(T.matmul(h, self._p(prefix + ".w2")), self._p(prefix + ".b2"))

    def _attention(self, i: int, x: Tensor, ctx: Tensor, train: bool, rng) -> Tensor:
        cfg = self.config
        p = f"dec.{i}.attn"
        b, n, d = x.shape
        heads, dh = cfg.heads, d // cfg.heads
        kv = T.concat([ctx, x], axis=1)
        lk = kv.shape[1]

        def split(t: Tensor, tlen: int) -> Tensor:
            return T.transpose(T.reshape(t, (b, tlen, heads, dh)), (0, 2, 1, 3))

        q = split(T.add(T.matmul(x, self._p(p + ".wq")), self._p(p + ".bq")), n)
        k = split(T.add(T.matmul(kv, self._p(p + ".wk")), self._p(p + ".bk")), lk)
        v = split(T.add(T.matmul(kv, self._p(p + ".wv")), self._p(p + ".bv")), lk)
        scores = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
        scores = T.add(scores, Tensor(self._mask, dtype=self.dtype))
        probs = T.softmax(scores)
        probs = T.dropout(probs, cfg.dropout, train, rng)
        out = T.matmul(probs, v)
        out = T.reshape(T.transpose(out, (0, 2, 1, 3)), (b, n, d))
        return T.add(T.matmul(out, self._p(p + ".wo")), self._p(p + ".bo"))

    def forward(self, state_hist, action_hist, goal_hist, noisy_future, k,
                train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        """Predict the added noise for each future action token.

        Inputs are (B, h, state_dim), (B, h, action_dim), (B, h, goal_dim),
        (B, n, action_dim) plus 1-based diffusion steps k of shape (B,).
        """
        cfg = self.config
        state_hist = np.asarray(state_hist, dtype=self.dtype)
        action_hist = np.asarray(action_hist, dtype=self.dtype)
        goal_hist = np.asarray(goal_hist, dtype=self.dtype)
        noisy_future = np.asarray(noisy_future, dtype=self.dtype)
        k = np.atleast_1d(np.asarray(k, dtype=np.int64))
        b = state_hist.shape[0]
        expect = {
            "state_hist": (b, cfg.history_len, cfg.state_dim),
            "action_hist": (b, cfg.history_len, cfg.action_dim),
            "goal_hist": (b, cfg.history_len, cfg.goal_dim),
            "noisy_future": (b, cfg.predict_len, cfg.action_dim),
        }
        for name, arr in (("state_hist", state_hist), ("action_hist", action_hist),
                          ("goal_hist", goal_hist), ("noisy_future", noisy_future)):
            if arr.shape != expect[name]:
                raise ValueError(f"{name} shape {arr.shape} != expected {expect[name]}")
        if k.shape != (b,):
            raise ValueError(f"k shape {k.shape} != ({b},)")
        if k.min() < 1 or k.max() > cfg.diffusion_steps:
            raise ValueError(
                f"diffusion step out of range [1, {cfg.diffusion_steps}]: {k.min()}..{k.max()}")
        if train and cfg.dropout > 0 and rng is None:
            raise ValueError("training forward needs an rng for dropout")

        if cfg.goal_concat:
            io_in = Tensor(np.concatenate([state_hist, action_hist, goal_hist], axis=-1),
                           dtype=self.dtype)
        else:
            io_in = Tensor(np.concatenate([state_hist, action_hist], axis=-1),
                           dtype=self.dtype)
        io_tok = T.add(self._mlp2(io_in, "io_enc"), self._p("pos.io"))

        onehot = np.zeros((b, cfg.diffusion_steps), dtype=self.dtype)
        onehot[np.arange(b), k - 1] = 1.0
        step_tok = T.reshape(
            T.add(T.matmul(Tensor(onehot, dtype=self.dtype), self._p("step_embed.w")),
                  self._p("step_embed.b")),
            (b, 1, cfg.token_dim))

        if cfg.goal_concat:
            ctx = T.concat([io_tok, step_tok], axis=1)
        else:
            goal_tok = T.add(self._mlp2(Tensor(goal_hist, dtype=self.dtype), "goal_enc"),
                             self._p("pos.goal"))
            ctx = T.concat([io_tok, goal_tok, step_tok], axis=1)
        ctx = T.layer_norm(ctx, self._p("ln_ctx.w"), self._p("ln_ctx.b"))

        x = T.add(self._mlp2(Tensor(noisy_future, dtype=self.dtype), "act_embed"),
                  self._p("pos.act"))
        for i in range(cfg.layers):
            xn = T.layer_norm(x, self._p(f"dec.{i}.ln1.w"), self._p(f"dec.{i}.ln1.b"))
            x = T.add(x, self._attention(i, xn, ctx, train, rng))
            fn = T.layer_norm(x, self._p(f"dec.{i}.ln2.w"), self._p(f"dec.{i}.ln2.b"))
            ff = T.add(T.matmul(T.gelu(T.add(T.matmul(fn, self._p(f"dec.{i}.ff.w1")),
                                             self._p(f"dec.{i}.ff.b1"))),
                                self._p(f"dec.{i}.ff.w2")),
                       self._p(f"dec.{i}.ff.b2"))
            x = T.add(x, ff)
        x = T.layer_norm(x, self._p("ln_f.w"), self._p("ln_f.b"))
        return T.add(T.matmul(x, self._p("head.w")), self._p("head.b"))


def predict_noise(model: DenoiserModel, state_hist, action_hist, goal_hist,
                  noisy_future, k: int, train: bool = False,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Single-window convenience wrapper; returns (n, action_dim)."""
    out = model.forward(state_hist[None], action_hist[None], goal_hist[None],
                        noisy_future[None], np.array([k]), train=train, rng=rng)
    return out.data[0]
