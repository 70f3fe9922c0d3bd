"""Partial observations and the flat state vector fed to the Q-network.

An observation is ``(depth, width, 5)``: row 0 is the agent's own row and row
``r`` lies ``r`` cells ahead; column ``width // 2`` is the agent's column and
lower columns are to its left. Channels 0-2 are the object colour, channel 3
flags a grouped predator and channel 4 holds a predator's health. Cells off
the grid are zero.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import LookupFailure, ShapeError
from .world import DIRS, GROUP_PREY

N_CHANNELS = 5
IDENTITY_DIM = 5

KIND_PREDATOR, KIND_GROUP_PREY, KIND_SOLO_PREY, KIND_OBSTACLE = 0, 1, 2, 3
COLORS = np.array([
    [1.0, 0.0, 0.0],   # predator
    [0.0, 1.0, 0.0],   # group prey
    [0.0, 0.0, 1.0],   # solo prey
    [0.5, 0.5, 0.5],   # obstacle
], dtype=np.float32)

CHUNK = 8192
# grids up to this many cells get a dense cell -> row lookup
DENSE_LIMIT = 16_000_000


@dataclass
class CellTable:
    """What is visible in each occupied cell, sorted by flat cell id.

    ``features`` has one 5-channel row per occupied cell plus a final zero
    row that empty and off-grid cells point to.
    """

    cells: np.ndarray
    kind: np.ndarray
    grouped: np.ndarray
    health: np.ndarray
    features: np.ndarray = None
    dense: np.ndarray = None

    def rows(self, flat, inb):
        """Feature row for each flat cell id (``-1`` / off-grid -> zero row)."""
        empty = len(self.cells)
        if self.dense is not None:
            return np.where(inb, self.dense[np.where(inb, flat, 0)], empty)
        if empty == 0:
            return np.full(flat.shape, empty)
        pos = np.minimum(np.searchsorted(self.cells, flat), empty - 1)
        return np.where(inb & (self.cells[pos] == flat), pos, empty)


def build_cell_table(world):
    p, q = world.predators, world.preys
    live = q.alive
    q_cells = q.y[live] * world.width + q.x[live]
    q_kind = np.where(q.species[live] == GROUP_PREY, KIND_GROUP_PREY, KIND_SOLO_PREY)
    cells = np.concatenate([p.y * world.width + p.x, q_cells, world.obstacle_cells])
    kind = np.concatenate([np.full(len(p), KIND_PREDATOR), q_kind,
                           np.full(len(world.obstacle_cells), KIND_OBSTACLE)])
    # predators come first in id order, so within a cell the lowest-id
    # predator represents it
    # one int64 key (cell, kind, position) sorts ~4x faster than lexsort
    n = len(cells)
    order = np.argsort(cells * (4 * n) + kind * n + np.arange(n))
    cells, kind = cells[order], kind[order]
    first = np.ones(len(cells), dtype=bool)
    first[1:] = cells[1:] != cells[:-1]
    src = order[first]
    n_p = len(p)
    is_pred = src < n_p
    grouped = np.zeros(len(src), dtype=np.float32)
    health = np.zeros(len(src), dtype=np.float32)
    grouped[is_pred] = (p.group[src[is_pred]] >= 0)
    health[is_pred] = p.health[src[is_pred]]
    cells, kind = cells[first], kind[first].astype(np.int8)
    features = np.zeros((len(cells) + 1, N_CHANNELS), dtype=np.float32)
    features[:-1, :3] = COLORS[kind]
    features[:-1, 3] = grouped
    features[:-1, 4] = health
    dense = None
    if world.width * world.height <= DENSE_LIMIT:
        dense = np.full(world.width * world.height, len(cells), dtype=np.int32)
        dense[cells] = np.arange(len(cells), dtype=np.int32)
    return CellTable(cells, kind, grouped, health, features, dense)


def view_cells(xs, ys, orientation, depth, width):
    """World coordinates ``(B, depth, width)`` of every view cell."""
    d = np.asarray(orientation, dtype=np.int64)
    fx, fy = DIRS[d, 0][:, None, None], DIRS[d, 1][:, None, None]
    rx, ry = fy, -fx
    r = np.arange(depth)[None, :, None]
    c = (np.arange(width) - width // 2)[None, None, :]
    wx = np.asarray(xs, dtype=np.int64)[:, None, None] + r * fx + c * rx
    wy = np.asarray(ys, dtype=np.int64)[:, None, None] + r * fy + c * ry
    return wx, wy


def observe(world, idx, table=None):
    """Observations ``(len(idx), depth, width, 5)`` for predators at ``idx``."""
    if table is None:
        table = build_cell_table(world)
    cfg = world.config
    m, n = cfg.view_depth, cfg.view_width
    p = world.predators
    idx = np.asarray(idx, dtype=np.int64)
    wx, wy = view_cells(p.x[idx], p.y[idx], p.orientation[idx], m, n)
    inb = (wx >= 0) & (wx < world.width) & (wy >= 0) & (wy < world.height)
    flat = np.where(inb, wy * world.width + wx, -1)
    obs = table.features[table.rows(flat, inb)]
    h = n // 2
    obs[:, 0, h, :3] = COLORS[KIND_PREDATOR]
    obs[:, 0, h, 3] = p.group[idx] >= 0
    obs[:, 0, h, 4] = p.health[idx]
    return obs


def extract_observation(world, pid):
    pos, ok = world.predators.index_of([pid])
    if not ok[0]:
        raise LookupFailure(f"no alive predator with id {pid}")
    return observe(world, pos)[0]


def state_dim(depth, width):
    return depth * width * N_CHANNELS + IDENTITY_DIM


def encode_state(obs, identity):
    """Row-major flatten of the observation followed by the identity vector."""
    identity = np.asarray(identity, dtype=np.float32)
    obs = np.asarray(obs, dtype=np.float32)
    if identity.shape[-1:] != (IDENTITY_DIM,):
        raise ShapeError(f"identity must have length {IDENTITY_DIM}, got shape {identity.shape}")
    if obs.ndim < 3 or obs.shape[-1] != N_CHANNELS:
        raise ShapeError(f"observation must be (depth, width, {N_CHANNELS}), got {obs.shape}")
    lead = obs.shape[:-3]
    flat = obs.reshape(lead + (-1,))
    return np.concatenate([flat, np.broadcast_to(identity, lead + (IDENTITY_DIM,))], axis=-1)


def decode_state(state, depth, width):
    state = np.asarray(state)
    if state.shape[-1] != state_dim(depth, width):
        raise ShapeError(f"state length {state.shape[-1]} does not match a {depth}x{width} view")
    lead = state.shape[:-1]
    obs = state[..., :-IDENTITY_DIM].reshape(lead + (depth, width, N_CHANNELS))
    return obs, state[..., -IDENTITY_DIM:]


def worker_count():
    try:
        return max(1, int(os.environ.get("SWLV_THREADS", "1")))
    except ValueError:
        return 1


def observe_states(world, idx, workers=None, table=None):
    """Encoded states ``(len(idx), state_dim)`` in fixed-size chunks.

    Chunk boundaries do not depend on ``workers``, so the output is identical
    for any worker count.
    """
    cfg = world.config
    idx = np.asarray(idx, dtype=np.int64)
    out = np.empty((len(idx), state_dim(cfg.view_depth, cfg.view_width)), dtype=np.float32)
    if len(idx) == 0:
        return out
    if table is None:
        table = build_cell_table(world)
    ident = world.predators.identity

    def fill(start):
        sl = slice(start, min(start + CHUNK, len(idx)))
        obs = observe(world, idx[sl], table)
        out[sl, :-IDENTITY_DIM] = obs.reshape(len(obs), -1)
        out[sl, -IDENTITY_DIM:] = ident[idx[sl]]

    starts = range(0, len(idx), CHUNK)
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(workers) as ex:
            list(ex.map(fill, starts))
    else:
        for s in starts:
            fill(s)
    return out
