"""Binary world snapshots (checkpoint/resume and determinism checks).

Layout, all little-endian::

    b"SWLV"  u32 version
    i64 width, height, t, next_id, next_group_id, zoo_last_fed
    u64 n_obstacles   i64 flat cell id (y * width + x) per obstacle
    u64 n_predators   PRED_RECORD per predator, ascending id
    u64 n_preys       PREY_RECORD per prey, ascending id
    u64 n_bytes       UTF-8 JSON: world config, world RNG state, caller extras

Group membership is carried by the predator records (``group = -1`` for
singles) and the registry is rebuilt on load.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np

from .config import WorldConfig
from .errors import FormatError
from .world import World

MAGIC = b"SWLV"
VERSION = 1

PRED_RECORD = np.dtype([("id", "<i8"), ("x", "<i8"), ("y", "<i8"), ("orientation", "u1"),
                        ("health", "<f4"), ("group", "<i8"), ("identity", "<f4", (5,))])
PREY_RECORD = np.dtype([("id", "<i8"), ("species", "u1"), ("x", "<i8"), ("y", "<i8"),
                        ("radius", "<i8"), ("threshold", "<i8"), ("alive", "u1")])

_HEADER = struct.Struct("<6q")


def rng_state(rng):
    return rng.bit_generator.state


def rng_from_state(state):
    bitgen = getattr(np.random, state["bit_generator"])()
    bitgen.state = state
    return np.random.Generator(bitgen)


def snapshot_bytes(world, extra=None):
    p, q = world.predators, world.preys
    preds = np.zeros(len(p), PRED_RECORD)
    for name in ("id", "x", "y", "orientation", "health", "group", "identity"):
        preds[name] = getattr(p, name)
    preys = np.zeros(len(q), PREY_RECORD)
    for name in ("id", "species", "x", "y", "radius", "threshold", "alive"):
        preys[name] = getattr(q, name)
    meta = {"config": dataclasses.asdict(world.config), "rng": rng_state(world.rng),
            "extra": extra or {}}
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    parts = [MAGIC, struct.pack("<I", VERSION),
             _HEADER.pack(world.width, world.height, world.t, world.next_id,
                          world.next_group_id, world.zoo_last_fed),
             struct.pack("<Q", len(world.obstacle_cells)),
             world.obstacle_cells.astype("<i8").tobytes(),
             struct.pack("<Q", len(preds)), preds.tobytes(),
             struct.pack("<Q", len(preys)), preys.tobytes(),
             struct.pack("<Q", len(blob)), blob]
    return b"".join(parts)


def save_snapshot(world, path, extra=None):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(snapshot_bytes(world, extra))
    tmp.replace(path)
    return path


class _Reader:
    def __init__(self, data):
        self.data = data
        self.off = 0

    def take(self, n, what):
        if self.off + n > len(self.data):
            raise FormatError(f"truncated snapshot while reading {what}", self.off)
        chunk = self.data[self.off:self.off + n]
        self.off += n
        return chunk

    def u64(self, what):
        return struct.unpack("<Q", self.take(8, what))[0]

    def records(self, dtype, what):
        n = self.u64(f"{what} count")
        return np.frombuffer(self.take(n * dtype.itemsize, what), dtype=dtype)


def parse_snapshot(data):
    """Returns ``(world, extra)``."""
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("bad snapshot magic", 0)
    (version,) = struct.unpack("<I", r.take(4, "version"))
    if version != VERSION:
        raise FormatError(f"unsupported snapshot version {version}", 4)
    width, height, t, next_id, next_group_id, zoo = _HEADER.unpack(r.take(_HEADER.size, "header"))
    obstacles = r.records(np.dtype("<i8"), "obstacles")
    preds = r.records(PRED_RECORD, "predators")
    preys = r.records(PREY_RECORD, "preys")
    n_meta = r.u64("metadata length")
    try:
        meta = json.loads(r.take(n_meta, "metadata").decode())
    except ValueError as exc:
        raise FormatError(f"bad snapshot metadata: {exc}", r.off - n_meta) from None
    if r.off != len(data):
        raise FormatError(f"{len(data) - r.off} trailing bytes", r.off)
    cfg = WorldConfig(**meta["config"])
    if (cfg.width, cfg.height) != (width, height):
        raise FormatError("grid size in header disagrees with metadata", 8)
    world = World(cfg, obstacles.astype(np.int64), rng_from_state(meta["rng"]))
    world.t, world.next_id, world.next_group_id, world.zoo_last_fed = t, next_id, next_group_id, zoo
    p = world.predators
    for name in ("id", "x", "y", "orientation", "health", "group", "identity"):
        setattr(p, name, preds[name].astype(getattr(p, name).dtype))
    q = world.preys
    for name in ("id", "species", "x", "y", "radius", "threshold", "alive"):
        setattr(q, name, preys[name].astype(getattr(q, name).dtype))
    for pid, gid in zip(p.id[p.group >= 0].tolist(), p.group[p.group >= 0].tolist()):
        world.groups.setdefault(gid, set()).add(pid)
    return world, meta["extra"]


def load_snapshot(path):
    return parse_snapshot(Path(path).read_bytes())
