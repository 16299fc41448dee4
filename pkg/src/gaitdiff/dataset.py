"""Offline dataset generation and training-window access.

Collection rolls scripted gait controllers over (optionally randomized)
plants and records source-agnostic (state, action, goal) triples, one
file per episode plus a JSON manifest. Every episode derives its RNG
stream from (master seed, episode index), so collection order or
parallelism cannot change the data.

Training windows follow the delayed-input layout: at anchor tick t the
window holds states/goals through t-1, actions through t-2, and the n
future actions from t on. Windows never cross episode boundaries.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cpg import GAITS, cpg_action, sample_goal
from .episodes import Episode, read_episode, write_episode
from .plant import PlantParams, initial_state, observe, plant_step, randomize_params

log = logging.getLogger(__name__)

HISTORY_LEN = 8
PREDICT_LEN = 4

MANIFEST_NAME = "manifest.json"


@dataclass
class CollectConfig:
    gaits: list = field(default_factory=lambda: ["trot", "pace"])
    episodes: int = 1000
    steps: int = 500
    goal_dwell: int = 150
    randomize: bool = True
    seed: int = 0
    history_len: int = HISTORY_LEN
    predict_len: int = PREDICT_LEN
    goal_ranges: dict = field(default_factory=dict)  # optional v/h/omega overrides
    plant: dict = field(default_factory=dict)        # PlantParams overrides

    def __post_init__(self):
        unknown = [g for g in self.gaits if g not in GAITS]
        if unknown or not self.gaits:
            raise ValueError(f"gaits must be a nonempty subset of {sorted(GAITS)}, got {self.gaits}")
        if self.steps < self.min_episode_len:
            raise ValueError(
                f"steps={self.steps} below minimum window length {self.min_episode_len}")
        if self.goal_dwell < 1 or self.episodes < 1:
            raise ValueError("goal_dwell and episodes must be >= 1")

    @property
    def min_episode_len(self) -> int:
        return self.history_len + self.predict_len + 2

    def base_params(self) -> PlantParams:
        return PlantParams(**self.plant)


def _goal_range_args(cfg: CollectConfig) -> dict:
    args = {}
    for key in ("v_range", "h_range", "omega_range"):
        if key in cfg.goal_ranges:
            args[key] = tuple(cfg.goal_ranges[key])
    return args


def collect_episode(cfg: CollectConfig, index: int) -> Episode | None:
    """Roll out one episode; None if it ends shorter than a training window."""
    rng = np.random.default_rng((cfg.seed, index))
    gait = GAITS[cfg.gaits[int(rng.integers(len(cfg.gaits)))]]
    base = cfg.base_params()
    params = randomize_params(base, rng) if cfg.randomize else base
    state = initial_state(params)

    states, actions, goals = [], [], []
    goal = None
    for t in range(cfg.steps):
        if t % cfg.goal_dwell == 0:
            goal = sample_goal(rng, **_goal_range_args(cfg))
        action = cpg_action(gait, goal, t, h0=base.h0, k_h=base.k_h).astype(np.float32)
        states.append(observe(state).astype(np.float32))
        actions.append(action)
        goals.append(goal.as_array().astype(np.float32))
        state = plant_step(state, action.astype(np.float64), params)
        if state.fallen:
            break

    if len(states) < cfg.min_episode_len:
        log.warning("episode %d truncated to %d steps (< %d), discarded",
                    index, len(states), cfg.min_episode_len)
        return None
    return Episode(
        states=np.array(states), actions=np.array(actions), goals=np.array(goals),
        source_tag=gait.name, dynamics_meta=params, seed=index,
    )


def collect(cfg: CollectConfig, out_dir) -> Path:
    """Write the full dataset; returns the dataset directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files, discarded = [], []
    for i in range(cfg.episodes):
        ep = collect_episode(cfg, i)
        if ep is None:
            discarded.append(i)
            continue
        name = f"ep_{i:05d}.gde"
        write_episode(out / name, ep)
        files.append(name)
    manifest = {
        "kind": "gaitdiff-dataset",
        "version": 1,
        "tool_version": __version__,
        "config": asdict(cfg),
        "seed": cfg.seed,
        "files": files,
        "discarded": discarded,
        "stats": None,
    }
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return out


def load_manifest(dataset_dir) -> dict:
    path = Path(dataset_dir) / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(
            f"no dataset manifest at {path}; run `gaitdiff collect` first")
    return json.loads(path.read_text())


def load_episodes(dataset_dir) -> list:
    manifest = load_manifest(dataset_dir)
    root = Path(dataset_dir)
    return [read_episode(root / name) for name in manifest["files"]]


def directory_digest(dataset_dir) -> str:
    """SHA-256 over sorted (name, bytes) of all dataset files."""
    root = Path(dataset_dir)
    h = hashlib.sha256()
    for path in sorted(p for p in root.iterdir() if p.is_file()):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# normalization statistics


@dataclass
class NormStats:
    state_mean: np.ndarray
    state_std: np.ndarray
    action_mean: np.ndarray
    action_std: np.ndarray
    goal_mean: np.ndarray
    goal_std: np.ndarray
    count: int

    STD_FLOOR = 1e-6

    def to_dict(self) -> dict:
        return {
            "state_mean": self.state_mean.tolist(),
            "state_std": self.state_std.tolist(),
            "action_mean": self.action_mean.tolist(),
            "action_std": self.action_std.tolist(),
            "goal_mean": self.goal_mean.tolist(),
            "goal_std": self.goal_std.tolist(),
            "count": self.count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(
            state_mean=np.asarray(d["state_mean"], dtype=np.float64),
            state_std=np.asarray(d["state_std"], dtype=np.float64),
            action_mean=np.asarray(d["action_mean"], dtype=np.float64),
            action_std=np.asarray(d["action_std"], dtype=np.float64),
            goal_mean=np.asarray(d["goal_mean"], dtype=np.float64),
            goal_std=np.asarray(d["goal_std"], dtype=np.float64),
            count=int(d["count"]),
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _merge_moments(n_a, mean_a, m2_a, n_b, mean_b, m2_b):
    # Chan et al. parallel combination of (count, mean, sum of squared devs)
    n = n_a + n_b
    delta = mean_b - mean_a
    mean = mean_a + delta * (n_b / n)
    m2 = m2_a + m2_b + delta * delta * (n_a * n_b / n)
    return n, mean, m2


def _column_moments(episodes, attr):
    n, mean, m2 = 0, None, None
    for ep in episodes:
        x = getattr(ep, attr).astype(np.float64)
        cn = x.shape[0]
        cmean = x.mean(axis=0)
        cm2 = ((x - cmean) ** 2).sum(axis=0)
        if mean is None:
            n, mean, m2 = cn, cmean, cm2
        else:
            n, mean, m2 = _merge_moments(n, mean, m2, cn, cmean, cm2)
    return n, mean, m2


def compute_stats(episodes) -> NormStats:
    """Streaming per-dimension mean/std (population) with a floored std."""
    if not episodes:
        raise ValueError("cannot compute stats over an empty dataset")
    out = {}
    for attr, prefix in (("states", "state"), ("actions", "action"), ("goals", "goal")):
        n, mean, m2 = _column_moments(episodes, attr)
        std = np.maximum(np.sqrt(m2 / n), NormStats.STD_FLOOR)
        out[f"{prefix}_mean"] = mean
        out[f"{prefix}_std"] = std
    return NormStats(count=n, **out)


def write_stats(dataset_dir, stats: NormStats) -> None:
    path = Path(dataset_dir) / MANIFEST_NAME
    manifest = load_manifest(dataset_dir)
    manifest["stats"] = stats.to_dict()
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_stats(dataset_dir) -> NormStats:
    manifest = load_manifest(dataset_dir)
    if manifest.get("stats") is None:
        raise FileNotFoundError(
            f"dataset at {dataset_dir} has no stats; run `gaitdiff stats` first")
    return NormStats.from_dict(manifest["stats"])


# ---------------------------------------------------------------------------
# training windows


@dataclass
class TrainingWindow:
    state_hist: np.ndarray    # (h, sdim), ends at t-1
    action_hist: np.ndarray   # (h, adim), ends at t-2
    goal_hist: np.ndarray     # (h, gdim), ends at t-1
    action_future: np.ndarray  # (n, adim), starts at t
    episode_index: int
    anchor: int               # t


class WindowIndex:
    """Uniform access to every valid (episode, t) window.

    Valid anchors satisfy h+2 <= t <= T-n so that the action history
    reaches back to t-h-1 and the future block ends inside the episode.
    """

    def __init__(self, episodes, h: int = HISTORY_LEN, n: int = PREDICT_LEN):
        self.episodes = episodes
        self.h = h
        self.n = n
        counts = []
        for ep in episodes:
            t_lo, t_hi = h + 2, ep.length - n
            counts.append(max(0, t_hi - t_lo + 1))
        self._counts = np.asarray(counts, dtype=np.int64)
        self._cum = np.concatenate([[0], np.cumsum(self._counts)])
        if self.total == 0:
            raise ValueError(
                f"no valid windows: episodes shorter than {h + n + 2} steps")

    @property
    def total(self) -> int:
        return int(self._cum[-1])

    def flat_to_pair(self, flat: int) -> tuple:
        ep_idx = int(np.searchsorted(self._cum, flat, side="right") - 1)
        t = int(self.h + 2 + (flat - self._cum[ep_idx]))
        return ep_idx, t

    def slice_raw(self, ep_idx: int, t: int) -> TrainingWindow:
        ep = self.episodes[ep_idx]
        h, n = self.h, self.n
        if not (h + 2 <= t <= ep.length - n):
            raise ValueError(f"anchor {t} outside [{h + 2}, {ep.length - n}]")
        return TrainingWindow(
            state_hist=ep.states[t - h:t],
            action_hist=ep.actions[t - h - 1:t - 1],
            goal_hist=ep.goals[t - h:t],
            action_future=ep.actions[t:t + n],
            episode_index=ep_idx,
            anchor=t,
        )

    def sample(self, rng: np.random.Generator, stats: NormStats | None = None) -> TrainingWindow:
        ep_idx, t = self.flat_to_pair(int(rng.integers(self.total)))
        w = self.slice_raw(ep_idx, t)
        return normalize_window(w, stats) if stats is not None else w

    def batch(self, rng: np.random.Generator, stats: NormStats, size: int) -> dict:
        """Stacked normalized arrays for `size` iid-uniform windows."""
        flats = rng.integers(self.total, size=size)
        ws = [normalize_window(self.slice_raw(*self.flat_to_pair(int(f))), stats)
              for f in flats]
        return {
            "state_hist": np.stack([w.state_hist for w in ws]),
            "action_hist": np.stack([w.action_hist for w in ws]),
            "goal_hist": np.stack([w.goal_hist for w in ws]),
            "action_future": np.stack([w.action_future for w in ws]),
        }


def normalize_window(w: TrainingWindow, stats: NormStats) -> TrainingWindow:
    return TrainingWindow(
        state_hist=_norm(w.state_hist, stats.state_mean, stats.state_std),
        action_hist=_norm(w.action_hist, stats.action_mean, stats.action_std),
        goal_hist=_norm(w.goal_hist, stats.goal_mean, stats.goal_std),
        action_future=_norm(w.action_future, stats.action_mean, stats.action_std),
        episode_index=w.episode_index,
        anchor=w.anchor,
    )


def _norm(x, mean, std):
    return ((x - mean) / std).astype(np.float32)


def denormalize_actions(a: np.ndarray, stats: NormStats) -> np.ndarray:
    return (a.astype(np.float64) * stats.action_std + stats.action_mean)
