"""On-disk episode format.

One file per episode: a fixed little-endian header, three row-major
float32 blocks (states, actions, goals), then a length-prefixed UTF-8
JSON metadata trailer. The format is language-neutral and round-trips
bit-exactly.

    magic   4s   b"GDEP"
    version u32  1
    T       u32  rows per block
    sdim    u32  state dim
    adim    u32  action dim
    gdim    u32  goal dim
    dtype   u32  1 = float32 little-endian
    states  T*sdim f32, actions T*adim f32, goals T*gdim f32
    mlen    u32, metadata UTF-8 JSON of mlen bytes

Metadata carries source_tag (never consumed by training), the plant
params the episode was produced under, the per-episode seed, and an
open "extra" dict (e.g. per-tick sampler latency for rollout dumps).
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .plant import PlantParams

MAGIC = b"GDEP"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIII")


@dataclass
class Episode:
    states: np.ndarray   # (T, sdim) float32
    actions: np.ndarray  # (T, adim) float32
    goals: np.ndarray    # (T, gdim) float32
    source_tag: str
    dynamics_meta: PlantParams
    seed: int
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.states = np.ascontiguousarray(self.states, dtype=np.float32)
        self.actions = np.ascontiguousarray(self.actions, dtype=np.float32)
        self.goals = np.ascontiguousarray(self.goals, dtype=np.float32)
        t = self.states.shape[0]
        if not (self.actions.shape[0] == t and self.goals.shape[0] == t and t >= 1):
            raise ValueError(
                f"block lengths differ: states {self.states.shape}, "
                f"actions {self.actions.shape}, goals {self.goals.shape}")
        for name, arr in (("states", self.states), ("actions", self.actions),
                          ("goals", self.goals)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in {name}")

    @property
    def length(self) -> int:
        return self.states.shape[0]


def episode_to_bytes(ep: Episode) -> bytes:
    t = ep.length
    meta = {
        "source_tag": ep.source_tag,
        "dynamics_meta": ep.dynamics_meta.to_dict(),
        "seed": ep.seed,
        "extra": ep.extra,
    }
    mbytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf = io.BytesIO()
    buf.write(_HEADER.pack(MAGIC, VERSION, t, ep.states.shape[1],
                           ep.actions.shape[1], ep.goals.shape[1], 1))
    for arr in (ep.states, ep.actions, ep.goals):
        buf.write(arr.astype("<f4", copy=False).tobytes())
    buf.write(struct.pack("<I", len(mbytes)))
    buf.write(mbytes)
    return buf.getvalue()


def episode_from_bytes(data: bytes) -> Episode:
    if len(data) < _HEADER.size:
        raise ValueError("truncated episode file")
    magic, version, t, sdim, adim, gdim, dtype = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported version {version}")
    if dtype != 1:
        raise ValueError(f"unsupported dtype code {dtype}")
    off = _HEADER.size
    blocks = []
    for dim in (sdim, adim, gdim):
        nbytes = 4 * t * dim
        if off + nbytes > len(data):
            raise ValueError("truncated data block")
        blocks.append(np.frombuffer(data, dtype="<f4", count=t * dim,
                                    offset=off).reshape(t, dim).copy())
        off += nbytes
    (mlen,) = struct.unpack_from("<I", data, off)
    off += 4
    if off + mlen != len(data):
        raise ValueError("metadata length mismatch")
    meta = json.loads(data[off:off + mlen].decode("utf-8"))
    return Episode(
        states=blocks[0], actions=blocks[1], goals=blocks[2],
        source_tag=meta["source_tag"],
        dynamics_meta=PlantParams.from_dict(meta["dynamics_meta"]),
        seed=meta["seed"],
        extra=meta.get("extra", {}),
    )


def write_episode(path, ep: Episode) -> None:
    with open(path, "wb") as f:
        f.write(episode_to_bytes(ep))


def read_episode(path) -> Episode:
    with open(path, "rb") as f:
        return episode_from_bytes(f.read())
