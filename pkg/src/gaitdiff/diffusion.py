"""Noise schedules, the denoising training loss, and the two samplers.

The model contract shared by everything here: an object with

    forward(state_hist, action_hist, goal_hist, noisy_future, k, train, rng)
        -> Tensor of shape (B, n, action_dim)

where the history/future inputs are normalized float32 arrays with a
leading batch axis and ``k`` is a (B,) array of 1-based diffusion steps.

Sampler RNG streams are documented so runs are reproducible: the initial
noise block is drawn first, then (DDPM only) one z block per step in
descending k, skipped where sigma is zero.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, mse


class SamplerDivergence(RuntimeError):
    """Raised when a denoising step produces non-finite actions."""

    def __init__(self, k: int):
        super().__init__(f"non-finite sampler output at denoise step k={k}")
        self.k = k


@dataclass(frozen=True)
class DiffusionSchedule:
    """Per-step coefficients for K training steps (arrays indexed k-1).

    recip_sqrt_alpha = 1/sqrt(alpha_k), eps_coef = beta_k/sqrt(1-alpha_bar_k)
    and sigma_k = sqrt(beta_k) except sigma_1 = 0, so the final denoise
    step injects no noise.
    """

    K: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    recip_sqrt_alpha: np.ndarray
    eps_coef: np.ndarray
    sigma: np.ndarray
    beta_min: float
    beta_max: float
    spacing: str

    def to_dict(self) -> dict:
        return {"K": self.K, "beta_min": self.beta_min, "beta_max": self.beta_max,
                "spacing": self.spacing}

    @classmethod
    def from_dict(cls, d: dict) -> "DiffusionSchedule":
        return make_schedule(d["K"], d["beta_min"], d["beta_max"], d["spacing"])


def make_schedule(K: int, beta_min: float = 1e-4, beta_max: float = 2e-2,
                  spacing: str = "linear") -> DiffusionSchedule:
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if spacing != "linear":
        raise ValueError(f"unsupported spacing {spacing!r}")
    # inclusive endpoints; a single step takes beta_min
    beta = np.linspace(beta_min, beta_max, K)
    if not np.all((beta > 0) & (beta < 1)):
        raise ValueError("betas must lie in (0, 1)")
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    sigma = np.sqrt(beta)
    sigma[0] = 0.0
    return DiffusionSchedule(
        K=K, beta=beta, alpha=alpha, alpha_bar=alpha_bar,
        recip_sqrt_alpha=1.0 / np.sqrt(alpha),
        eps_coef=beta / np.sqrt(1.0 - alpha_bar),
        sigma=sigma, beta_min=beta_min, beta_max=beta_max, spacing=spacing,
    )


def ddim_subsequence(train_steps: int, infer_steps: int) -> tuple:
    """Evenly strided, strictly increasing subsequence of {1..K} ending at K."""
    if not 1 <= infer_steps <= train_steps:
        raise ValueError(f"infer_steps must be in [1, {train_steps}], got {infer_steps}")
    stride = train_steps // infer_steps
    steps = tuple(train_steps - j * stride for j in reversed(range(infer_steps)))
    if steps[0] < 1:
        raise ValueError(f"cannot fit {infer_steps} strided steps into {train_steps}")
    return steps


@dataclass(frozen=True)
class SamplerSpec:
    kind: str = "ddpm"  # "ddpm" | "ddim"
    train_steps: int = 10
    infer_steps: int = 10
    steps: tuple = field(default=())  # ddim subsequence, ascending, ends at K

    def __post_init__(self):
        if self.kind == "ddpm":
            if self.infer_steps != self.train_steps:
                raise ValueError("ddpm keeps the training step count at inference")
            object.__setattr__(self, "steps", tuple(range(1, self.train_steps + 1)))
        elif self.kind == "ddim":
            steps = self.steps or ddim_subsequence(self.train_steps, self.infer_steps)
            steps = tuple(int(s) for s in steps)
            if len(steps) != self.infer_steps:
                raise ValueError(f"subsequence length {len(steps)} != infer_steps {self.infer_steps}")
            if any(b <= a for a, b in zip(steps, steps[1:])) or steps[-1] != self.train_steps \
                    or steps[0] < 1:
                raise ValueError(f"ddim subsequence must strictly increase and end at K, got {steps}")
            object.__setattr__(self, "steps", steps)
        else:
            raise ValueError(f"unknown sampler kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "train_steps": self.train_steps,
                "infer_steps": self.infer_steps, "steps": list(self.steps)}

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerSpec":
        return cls(kind=d["kind"], train_steps=d["train_steps"],
                   infer_steps=d["infer_steps"], steps=tuple(d.get("steps", ())))


# ---------------------------------------------------------------------------
# training loss


def ddpm_loss(model, batch: dict, schedule: DiffusionSchedule,
              rng: np.random.Generator, train: bool = True,
              noise_history: bool = False) -> Tensor:
    """Noise-prediction MSE on a batch of normalized windows.

    Stream order per call: k draws, future-noise block, optional
    history-noise block, then the model's dropout masks.
    """
    future = batch["action_future"]
    b, n, adim = future.shape
    ks = rng.integers(1, schedule.K + 1, size=b)
    eps = rng.standard_normal((b, n, adim)).astype(np.float32)
    ab = schedule.alpha_bar[ks - 1].reshape(b, 1, 1)
    noisy = (np.sqrt(ab) * future + np.sqrt(1.0 - ab) * eps).astype(np.float32)

    action_hist = batch["action_hist"]
    if noise_history:
        eps_h = rng.standard_normal(action_hist.shape).astype(np.float32)
        ab_h = schedule.alpha_bar[ks - 1].reshape(b, 1, 1)
        action_hist = (np.sqrt(ab_h) * action_hist
                       + np.sqrt(1.0 - ab_h) * eps_h).astype(np.float32)

    pred = model.forward(batch["state_hist"], action_hist, batch["goal_hist"],
                         noisy, ks, train=train, rng=rng)
    return mse(pred, Tensor(eps))


# ---------------------------------------------------------------------------
# samplers


def _model_eval(model, state_hist, action_hist, goal_hist, noisy, k, iter_times):
    t0 = time.perf_counter()
    b = noisy.shape[0]
    out = model.forward(state_hist, action_hist, goal_hist, noisy,
                        np.full(b, k, dtype=np.int64), train=False, rng=None)
    eps = out.data if isinstance(out, Tensor) else np.asarray(out)
    if iter_times is not None:
        iter_times.append(time.perf_counter() - t0)
    return eps


def _as_batched(x):
    x = np.asarray(x, dtype=np.float32)
    return (x[None], True) if x.ndim == 2 else (x, False)


def ddpm_sample(model, state_hist, action_hist, goal_hist,
                schedule: DiffusionSchedule, rng: np.random.Generator,
                n: int = 4, action_dim: int = 4, sigma_scale: float = 1.0,
                iter_times: list | None = None) -> np.ndarray:
    """Ancestral sampling: K steps from pure noise down to a^0."""
    state_hist, squeeze = _as_batched(state_hist)
    action_hist, _ = _as_batched(action_hist)
    goal_hist, _ = _as_batched(goal_hist)
    b = state_hist.shape[0]
    a = rng.standard_normal((b, n, action_dim)).astype(np.float32)
    for k in range(schedule.K, 0, -1):
        eps = _model_eval(model, state_hist, action_hist, goal_hist, a, k, iter_times)
        a = (schedule.recip_sqrt_alpha[k - 1]
             * (a - schedule.eps_coef[k - 1] * eps)).astype(np.float32)
        sig = schedule.sigma[k - 1] * sigma_scale
        if sig > 0.0:
            a = a + sig * rng.standard_normal(a.shape).astype(np.float32)
        if not np.all(np.isfinite(a)):
            raise SamplerDivergence(k)
    return a[0] if squeeze else a


def ddim_sample(model, state_hist, action_hist, goal_hist,
                schedule: DiffusionSchedule, spec: SamplerSpec,
                rng: np.random.Generator, n: int = 4, action_dim: int = 4,
                iter_times: list | None = None) -> np.ndarray:
    """Deterministic (eta=0) sampling over the spec's step subsequence."""
    if spec.kind != "ddim":
        raise ValueError(f"ddim_sample needs a ddim spec, got {spec.kind!r}")
    if spec.train_steps != schedule.K:
        raise ValueError(f"spec trained for K={spec.train_steps}, schedule has K={schedule.K}")
    state_hist, squeeze = _as_batched(state_hist)
    action_hist, _ = _as_batched(action_hist)
    goal_hist, _ = _as_batched(goal_hist)
    b = state_hist.shape[0]
    a = rng.standard_normal((b, n, action_dim)).astype(np.float32)
    steps = spec.steps
    for i in range(len(steps) - 1, -1, -1):
        k = steps[i]
        k_prev = steps[i - 1] if i > 0 else 0
        ab_k = schedule.alpha_bar[k - 1]
        ab_prev = schedule.alpha_bar[k_prev - 1] if k_prev >= 1 else 1.0
        eps = _model_eval(model, state_hist, action_hist, goal_hist, a, k, iter_times)
        a0 = (a - np.sqrt(1.0 - ab_k) * eps) / np.sqrt(ab_k)
        a = (np.sqrt(ab_prev) * a0 + np.sqrt(1.0 - ab_prev) * eps).astype(np.float32)
        if not np.all(np.isfinite(a)):
            raise SamplerDivergence(k)
    return a[0] if squeeze else a
