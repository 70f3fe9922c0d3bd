"""The predator-prey grid world.

State is kept as parallel numpy columns ordered by entity id (ids only ever
grow, removal compacts while preserving order), which makes id lookup a
binary search and lets every per-step rule run vectorised. Rules that are
inherently sequential (group joins, capture conflicts) loop in Python over
precomputed candidate lists only.

Coordinates: ``x`` is the column, ``y`` the row, and north is ``+y``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import WorldConfig
from .errors import ConfigError, LookupFailure
from .spatial import SpatialIndex, clip_rect

N, E, S, W = 0, 1, 2, 3
ORIENTATIONS = ("N", "E", "S", "W")
# unit step for each orientation
DIRS = np.array([[0, 1], [1, 0], [0, -1], [-1, 0]], dtype=np.int64)

FORWARD, BACKWARD, LEFT, RIGHT = 0, 1, 2, 3
ROTATE_LEFT, ROTATE_RIGHT, STAND_STILL = 4, 5, 6
JOIN_GROUP, LEAVE_GROUP = 7, 8
N_ACTIONS = 9
ACTION_NAMES = ("forward", "backward", "left", "right", "rotate_left",
                "rotate_right", "stand_still", "join_group", "leave_group")

GROUP_PREY, SOLO_PREY = 0, 1
SPECIES_NAMES = ("sheep", "rabbit")


def seed_streams(seed, n=4):
    """Independent generator seeds: 0 world, 1 policy, 2 learner, 3 network init."""
    return np.random.SeedSequence(int(seed)).spawn(n)


class _Columns:
    """Parallel arrays with append/filter helpers."""

    FIELDS: dict = {}
    WIDE: dict = {}

    def __init__(self):
        for name, dt in self.FIELDS.items():
            setattr(self, name, np.empty(0, dtype=dt))
        for name, (dt, k) in self.WIDE.items():
            setattr(self, name, np.empty((0, k), dtype=dt))

    def __len__(self):
        return len(self.id)

    def _names(self):
        return list(self.FIELDS) + list(self.WIDE)

    def append(self, **cols):
        for name in self._names():
            cur = getattr(self, name)
            new = np.asarray(cols[name], dtype=cur.dtype)
            setattr(self, name, np.concatenate([cur, new]))

    def keep(self, mask):
        for name in self._names():
            setattr(self, name, getattr(self, name)[mask])

    def copy(self):
        out = type(self)()
        for name in self._names():
            setattr(out, name, getattr(self, name).copy())
        return out

    def index_of(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        if len(self.id) == 0:
            return np.zeros(ids.shape, np.int64), np.zeros(ids.shape, bool)
        pos = np.minimum(np.searchsorted(self.id, ids), len(self.id) - 1)
        return pos, self.id[pos] == ids


class Predators(_Columns):
    FIELDS = {"id": np.int64, "x": np.int64, "y": np.int64, "orientation": np.int8,
              "health": np.float32, "group": np.int64}
    WIDE = {"identity": (np.float32, 5)}


class Preys(_Columns):
    FIELDS = {"id": np.int64, "species": np.int8, "x": np.int64, "y": np.int64,
              "radius": np.int64, "threshold": np.int64, "alive": np.bool_}


@dataclass(frozen=True)
class Predator:
    id: int
    pos: tuple
    orientation: int
    health: float
    group_id: int | None
    identity: tuple
    alive: bool = True


@dataclass(frozen=True)
class Prey:
    id: int
    species: int
    pos: tuple
    capture_radius: int
    capture_threshold: int
    alive: bool


@dataclass(frozen=True)
class CaptureEvent:
    prey_id: int
    winner_group_members: tuple
    share: float


class World:
    def __init__(self, config: WorldConfig, obstacle_cells, rng):
        self.config = config
        self.width = int(config.width)
        self.height = int(config.height)
        self.obstacle_cells = np.unique(np.asarray(obstacle_cells, dtype=np.int64))
        self._obstacle_flat = np.zeros(self.width * self.height, dtype=bool)
        self._obstacle_flat[self.obstacle_cells] = True
        self.rng = rng
        self.predators = Predators()
        self.preys = Preys()
        self.groups: dict[int, set[int]] = {}
        self.t = 0
        self.next_id = 0
        self.next_group_id = 0
        # species fed by the last zookeeper event, -1 before the first one
        self.zoo_last_fed = -1
        self.species_radius = np.array([config.group_prey_radius, config.solo_prey_radius], np.int64)
        self.species_threshold = np.array([config.group_prey_threshold, 1], np.int64)
        self.species_reward = np.array([config.group_prey_reward, config.solo_prey_reward], np.float64)
        self._pred_index = None
        self._prey_index = None

    # -- bookkeeping -------------------------------------------------------

    @property
    def obstacle_mask(self):
        """(height, width) boolean view indexed ``[y, x]``."""
        return self._obstacle_flat.reshape(self.height, self.width)

    def is_obstacle(self, xs, ys):
        return self._obstacle_flat[np.asarray(ys) * self.width + np.asarray(xs)]

    def in_bounds(self, xs, ys):
        return (xs >= 0) & (xs < self.width) & (ys >= 0) & (ys < self.height)

    def invalidate_index(self, predators=True, preys=True):
        if predators:
            self._pred_index = None
        if preys:
            self._prey_index = None

    @property
    def pred_index(self):
        if self._pred_index is None:
            self._pred_index = SpatialIndex(self.predators.x, self.predators.y, self.width)
        return self._pred_index

    @property
    def prey_index(self):
        if self._prey_index is None:
            self._prey_index = SpatialIndex(self.preys.x, self.preys.y, self.width)
        return self._prey_index

    def _new_ids(self, n):
        ids = np.arange(self.next_id, self.next_id + n, dtype=np.int64)
        self.next_id += n
        return ids

    def random_free_cells(self, n):
        """Uniform cells among the non-obstacle ones (rejection sampling)."""
        n = int(n)
        out = np.empty(n, dtype=np.int64)
        filled = 0
        n_cells = self.width * self.height
        while filled < n:
            cand = self.rng.integers(0, n_cells, size=n - filled)
            cand = cand[~self._obstacle_flat[cand]]
            out[filled:filled + len(cand)] = cand
            filled += len(cand)
        return out % self.width, out // self.width

    def spawn_predators(self, n):
        xs, ys = self.random_free_cells(n)
        orient = self.rng.integers(0, 4, size=n).astype(np.int8)
        identity = self.rng.standard_normal((n, 5)).astype(np.float32)
        ids = self._new_ids(n)
        self.predators.append(id=ids, x=xs, y=ys, orientation=orient,
                              health=np.ones(n, np.float32), group=np.full(n, -1),
                              identity=identity)
        self.invalidate_index(preys=False)
        return ids

    def spawn_preys(self, n, species):
        species = np.broadcast_to(np.asarray(species, dtype=np.int8), (int(n),))
        xs, ys = self.random_free_cells(n)
        ids = self._new_ids(n)
        self.preys.append(id=ids, species=species, x=xs, y=ys,
                          radius=self.species_radius[species],
                          threshold=self.species_threshold[species],
                          alive=np.ones(n, bool))
        self.invalidate_index(predators=False)
        return ids

    def pred_idx(self, pid):
        pos, ok = self.predators.index_of([pid])
        if not ok[0]:
            raise LookupFailure(f"no alive predator with id {pid}")
        return int(pos[0])

    def predator(self, pid):
        i = self.pred_idx(pid)
        p = self.predators
        g = int(p.group[i])
        return Predator(int(p.id[i]), (int(p.x[i]), int(p.y[i])), int(p.orientation[i]),
                        float(p.health[i]), None if g < 0 else g,
                        tuple(float(v) for v in p.identity[i]))

    def prey(self, prey_id):
        pos, ok = self.preys.index_of([prey_id])
        if not ok[0]:
            raise LookupFailure(f"no prey with id {prey_id}")
        i = int(pos[0])
        q = self.preys
        return Prey(int(q.id[i]), int(q.species[i]), (int(q.x[i]), int(q.y[i])),
                    int(q.radius[i]), int(q.threshold[i]), bool(q.alive[i]))

    def prey_counts(self):
        """Alive (group, solo) prey counts."""
        sp = self.preys.species[self.preys.alive]
        n_solo = int(np.count_nonzero(sp == SOLO_PREY))
        return len(sp) - n_solo, n_solo

    @property
    def n_predators(self):
        return len(self.predators)

    def copy(self):
        out = World.__new__(World)
        out.__dict__.update(self.__dict__)
        out.predators = self.predators.copy()
        out.preys = self.preys.copy()
        out.groups = {g: set(m) for g, m in self.groups.items()}
        rng = np.random.Generator(type(self.rng.bit_generator)())
        rng.bit_generator.state = self.rng.bit_generator.state
        out.rng = rng
        out._pred_index = None
        out._prey_index = None
        return out

    def restore_from(self, other):
        """Take over another world's full state in place (step rollback)."""
        self.__dict__.update(other.__dict__)

    # -- groups ------------------------------------------------------------

    def _join(self, i, gid):
        pid = int(self.predators.id[i])
        self.groups[gid].add(pid)
        self.predators.group[i] = gid

    def _form_pair(self, i, j):
        gid = self.next_group_id
        self.next_group_id += 1
        self.groups[gid] = {int(self.predators.id[i]), int(self.predators.id[j])}
        self.predators.group[i] = gid
        self.predators.group[j] = gid

    def _leave(self, i):
        gid = int(self.predators.group[i])
        members = self.groups[gid]
        members.discard(int(self.predators.id[i]))
        self.predators.group[i] = -1
        if len(members) <= 1:
            for other in members:
                self.predators.group[self.pred_idx(other)] = -1
            del self.groups[gid]

    def remove_predators(self, dead_mask):
        dead = np.flatnonzero(dead_mask)
        if len(dead) == 0:
            return 0
        touched = set()
        for i in dead:
            gid = int(self.predators.group[i])
            if gid >= 0:
                self.groups[gid].discard(int(self.predators.id[i]))
                touched.add(gid)
        self.predators.keep(~dead_mask)
        for gid in sorted(touched):
            members = self.groups[gid]
            if len(members) <= 1:
                for other in members:
                    self.predators.group[self.pred_idx(other)] = -1
                del self.groups[gid]
        self.invalidate_index(preys=False)
        return len(dead)

    def check_invariants(self):
        """Assert registry/index consistency (used by tests)."""
        p = self.predators
        assert np.all(np.diff(p.id) > 0)
        assert np.all(np.diff(self.preys.id) > 0)
        assert np.all(self.in_bounds(p.x, p.y))
        assert not np.any(self.is_obstacle(p.x, p.y))
        for gid, members in self.groups.items():
            assert len(members) >= 2, (gid, members)
            pos, ok = p.index_of(sorted(members))
            assert ok.all()
            assert np.all(p.group[pos] == gid)
        grouped = p.group >= 0
        assert int(grouped.sum()) == sum(len(m) for m in self.groups.values())


def init_world(config: WorldConfig, seed: int) -> World:
    """Random initial state; identical (config, seed) gives identical worlds."""
    config.validate()
    rng = np.random.default_rng(seed_streams(seed)[0])
    n_cells = config.width * config.height
    n_obst = int(round(config.obstacle_density * n_cells))
    cells = np.empty(0, dtype=np.int64)
    while len(cells) < n_obst:
        extra = rng.integers(0, n_cells, size=n_obst - len(cells))
        cells = np.unique(np.concatenate([cells, extra]))
    world = World(config, cells, rng)
    world.spawn_predators(config.n_predators)
    world.spawn_preys(config.n_prey_group, GROUP_PREY)
    world.spawn_preys(config.n_prey_solo, SOLO_PREY)
    return world


# -- movement --------------------------------------------------------------

def settle_moves(world, idx, actions):
    """Apply movement actions for predators at positions ``idx``.

    Translations that would leave the grid or enter an obstacle are dropped.
    Grouping actions are ignored here.
    """
    p = world.predators
    idx = np.asarray(idx, dtype=np.int64)
    a = np.asarray(actions)
    d = p.orientation[idx].astype(np.int64)
    fx, fy = DIRS[d, 0], DIRS[d, 1]
    dx = np.select([a == FORWARD, a == BACKWARD, a == LEFT, a == RIGHT], [fx, -fx, -fy, fy], 0)
    dy = np.select([a == FORWARD, a == BACKWARD, a == LEFT, a == RIGHT], [fy, -fy, fx, -fx], 0)
    moving = (dx != 0) | (dy != 0)
    nx = p.x[idx] + dx
    ny = p.y[idx] + dy
    ok = moving & world.in_bounds(nx, ny)
    ok[ok] = ~world.is_obstacle(nx[ok], ny[ok])
    p.x[idx[ok]] = nx[ok]
    p.y[idx[ok]] = ny[ok]
    rot = np.where(a == ROTATE_LEFT, -1, np.where(a == ROTATE_RIGHT, 1, 0))
    turned = rot != 0
    p.orientation[idx[turned]] = ((d[turned] + rot[turned]) % 4).astype(np.int8)
    if ok.any():
        world.invalidate_index(preys=False)
    return int(ok.sum()) + int(turned.sum())


def settle_move(world, pid, action):
    """Single-agent form of :func:`settle_moves`; returns ``(x, y, orientation)``."""
    if not 0 <= action < N_ACTIONS:
        raise ValueError(f"unknown action {action}")
    i = world.pred_idx(pid)
    settle_moves(world, [i], [action])
    p = world.predators
    return int(p.x[i]), int(p.y[i]), int(p.orientation[i])


# -- view geometry -----------------------------------------------------------

def view_rect(xs, ys, orientation, depth, width):
    """Axis-aligned bounds (x0, x1, y0, y1), unclipped, of each agent's view.

    The view is ``depth`` rows ahead (row 0 is the agent's own row) by
    ``width`` columns centred on the agent, turned to face ``orientation``.
    """
    d = np.asarray(orientation, dtype=np.int64)
    fx, fy = DIRS[d, 0], DIRS[d, 1]
    rx, ry = fy, -fx
    h = width // 2
    far = depth - 1
    cx = np.stack([np.asarray(xs) + r * fx + c * rx for r in (0, far) for c in (-h, h)])
    cy = np.stack([np.asarray(ys) + r * fy + c * ry for r in (0, far) for c in (-h, h)])
    return cx.min(0), cx.max(0), cy.min(0), cy.max(0)


def _predators_in_views(world, idx):
    """(viewer position, seen predator index) pairs for predators at ``idx``."""
    p = world.predators
    cfg = world.config
    x0, x1, y0, y1 = view_rect(p.x[idx], p.y[idx], p.orientation[idx], cfg.view_depth, cfg.view_width)
    x0, x1, y0, y1 = clip_rect(x0, x1, y0, y1, world.width, world.height)
    seen, owner = world.pred_index.query_rects(x0, x1, y0, y1)
    return owner, seen


# -- grouping ----------------------------------------------------------------

def settle_groupings(world, idx, actions):
    """Settle join/leave actions in ascending predator-id order.

    Positions do not change during this phase, so each actor's view contents
    are collected up front; group membership is updated sequentially so a
    later actor sees groups formed by earlier ones.
    """
    idx = np.asarray(idx, dtype=np.int64)
    a = np.asarray(actions)
    p = world.predators
    sel = (a == JOIN_GROUP) | (a == LEAVE_GROUP)
    act_idx = idx[sel]
    act_a = a[sel]
    if len(act_idx) == 0:
        return 0
    order = np.argsort(p.id[act_idx], kind="stable")
    act_idx, act_a = act_idx[order], act_a[order]
    # membership can change under an actor before its turn, so every join
    # actor gets its view precomputed
    joiners = act_idx[act_a == JOIN_GROUP]
    views = {}
    if len(joiners):
        owner, seen = _predators_in_views(world, joiners)
        keep = seen != joiners[owner]
        owner, seen = owner[keep], seen[keep]
        srt = np.lexsort((seen, owner))
        owner, seen = owner[srt], seen[srt]
        bounds = np.searchsorted(owner, np.arange(len(joiners) + 1))
        for k, i in enumerate(joiners):
            views[int(i)] = seen[bounds[k]:bounds[k + 1]]
    settled = 0
    rng = world.rng
    for i, act in zip(act_idx.tolist(), act_a.tolist()):
        if act == LEAVE_GROUP:
            if p.group[i] >= 0:
                world._leave(i)
                settled += 1
            continue
        if p.group[i] >= 0:
            continue  # already a member: invalid, not settled
        seen = views.get(i)
        if seen is None or len(seen) == 0:
            continue
        gids = p.group[seen]
        cand = np.unique(gids[gids >= 0])
        if len(cand):
            world._join(i, int(cand[rng.integers(len(cand))]))
            settled += 1
            continue
        singles = seen[gids < 0]
        if len(singles):
            j = int(singles[rng.integers(len(singles))])
            world._form_pair(i, j)
            settled += 1
    return settled


def settle_grouping(world, pid, action):
    """Single-agent grouping settlement; returns True when the action took effect."""
    if action not in (JOIN_GROUP, LEAVE_GROUP):
        raise ValueError(f"not a grouping action: {action}")
    i = world.pred_idx(pid)
    return settle_groupings(world, [i], [action]) == 1


# -- captures ----------------------------------------------------------------

def unit_keys(world, idx=None):
    """Hunting-unit key per predator: the group id, or ``-(id + 1)`` for singles."""
    p = world.predators
    g = p.group if idx is None else p.group[idx]
    pid = p.id if idx is None else p.id[idx]
    return np.where(g >= 0, g, -(pid + 1))


# grids up to this many cells get the summed-area prefilter below
PREFILTER_CELLS = 4_000_000


def _may_be_captured(world, live):
    """Mask over ``live``: preys whose capture square holds at least
    ``threshold`` predators. The others cannot have a candidate unit, so
    dropping them changes nothing but the cost of the rectangle queries."""
    q, p = world.preys, world.predators
    w, h = world.width, world.height
    if w * h > PREFILTER_CELLS or len(live) < len(p):
        return np.ones(len(live), dtype=bool)
    grid = np.bincount(p.y * w + p.x, minlength=w * h).reshape(h, w)
    sat = np.zeros((h + 1, w + 1), dtype=np.int32)
    np.cumsum(np.cumsum(grid, axis=0, dtype=np.int32), axis=1, out=sat[1:, 1:])
    r = q.radius[live]
    x0, x1, y0, y1 = clip_rect(q.x[live] - r, q.x[live] + r, q.y[live] - r, q.y[live] + r, w, h)
    inside = sat[y1 + 1, x1 + 1] - sat[y0, x1 + 1] - sat[y1 + 1, x0] + sat[y0, x0]
    return inside >= q.threshold[live]


def resolve_captures(world):
    """Decide which hunting unit (if any) wins each alive prey.

    Preys are resolved in ascending id order. A unit is a candidate when at
    least ``threshold`` of its members stand in the prey's capture square; the
    candidate with the largest total size wins, ties broken by one draw from
    the world RNG over the tied units sorted by unit key. Every member of the
    winner shares the reward equally and the whole unit is consumed for the
    rest of the step. Captured preys are marked dead (removal happens later).
    """
    q = world.preys
    p = world.predators
    live = np.flatnonzero(q.alive)
    if len(live) == 0 or len(p) == 0:
        return []
    live = live[_may_be_captured(world, live)]
    if len(live) == 0:
        return []
    r = q.radius[live]
    x0, x1, y0, y1 = clip_rect(q.x[live] - r, q.x[live] + r, q.y[live] - r, q.y[live] + r,
                               world.width, world.height)
    preds, owner = world.pred_index.query_rects(x0, x1, y0, y1)
    if len(preds) == 0:
        return []
    keys = unit_keys(world)
    pair_prey = live[owner]
    pair_unit = keys[preds]
    # in-area count per (prey, unit)
    pu = np.stack([pair_prey, pair_unit])
    uniq, counts = np.unique(pu, axis=1, return_counts=True)
    cand_prey, cand_unit = uniq
    valid = counts >= q.threshold[cand_prey]
    cand_prey, cand_unit = cand_prey[valid], cand_unit[valid]
    if len(cand_prey) == 0:
        return []
    gids, gsize = np.unique(p.group[p.group >= 0], return_counts=True)
    sizes = np.ones(len(cand_unit), dtype=np.int64)
    is_group = cand_unit >= 0
    sizes[is_group] = gsize[np.searchsorted(gids, cand_unit[is_group])]
    # np.unique sorted by prey index then unit key already
    bounds = np.flatnonzero(np.diff(cand_prey)) + 1
    starts = np.concatenate([[0], bounds])
    ends = np.concatenate([bounds, [len(cand_prey)]])
    consumed = set()
    events = []
    rng = world.rng
    for s, e in zip(starts.tolist(), ends.tolist()):
        units = cand_unit[s:e]
        usz = sizes[s:e]
        if consumed:
            free = np.array([u not in consumed for u in units.tolist()])
            units, usz = units[free], usz[free]
            if len(units) == 0:
                continue
        best = usz.max()
        tied = units[usz == best]  # ascending unit key
        win = int(tied[rng.integers(len(tied))]) if len(tied) > 1 else int(tied[0])
        consumed.add(win)
        members = tuple(sorted(world.groups[win])) if win >= 0 else (-win - 1,)
        j = int(cand_prey[s])
        reward = float(world.species_reward[q.species[j]])
        events.append(CaptureEvent(int(q.id[j]), members, reward / len(members)))
        q.alive[j] = False
    return events


# -- lifecycle ---------------------------------------------------------------

@dataclass
class LifecycleReport:
    prey_births: tuple = (0, 0)
    predator_births: int = 0
    predator_deaths: int = 0
    preys_removed: int = 0


def prey_capacity(world, lifecycle):
    if lifecycle.prey_capacity > 0:
        return int(lifecycle.prey_capacity)
    return world.width * world.height - len(world.obstacle_cells)


def procreate(world, lifecycle, eternal_longevity=False):
    """Birth phase run at the start of each step.

    Every alive prey spawns one offspring of its species with probability
    ``prey_birth_rate`` (offspring beyond the prey capacity are dropped, in
    parent-id order); every predator with health >= the reproduction
    threshold spawns one with probability ``predator_birth_rate``. Offspring
    appear on uniform random free cells.
    """
    rng = world.rng
    q = world.preys
    live = np.flatnonzero(q.alive)
    births = rng.random(len(live)) < lifecycle.prey_birth_rate
    parents = live[births]
    room = max(0, prey_capacity(world, lifecycle) - len(live))
    parents = parents[:room]
    sp = q.species[parents]
    if len(parents):
        world.spawn_preys(len(parents), sp)
    n_pred = 0
    if not eternal_longevity:
        p = world.predators
        draw = rng.random(len(p)) < lifecycle.predator_birth_rate
        eligible = draw & (p.health >= np.float32(lifecycle.reproduce_health_threshold))
        n_pred = int(eligible.sum())
        if n_pred:
            world.spawn_predators(n_pred)
    n_solo = int(np.count_nonzero(sp == SOLO_PREY))
    return LifecycleReport(prey_births=(len(parents) - n_solo, n_solo), predator_births=n_pred)


def settle_lifecycle(world, lifecycle, events, eternal_longevity=False):
    """End-of-step phase: health decay, capture rewards, removal of the dead.

    Returns ``(report, rewards, died_ids)`` where ``rewards`` is a float32
    array aligned with the predator columns as they were before removal.
    In eternal-longevity mode health is frozen and no predator dies; captured
    preys are removed in every mode.
    """
    p = world.predators
    rewards = np.zeros(len(p), dtype=np.float32)
    for ev in events:
        pos, _ = p.index_of(ev.winner_group_members)
        rewards[pos] += np.float32(ev.share)
    report = LifecycleReport()
    died = np.empty(0, dtype=np.int64)
    if not eternal_longevity:
        p.health -= np.float32(lifecycle.health_decay)
        p.health += rewards
        dead = p.health <= 0
        died = p.id[dead].copy()
        report.predator_deaths = world.remove_predators(dead)
    q = world.preys
    gone = ~q.alive
    report.preys_removed = int(gone.sum())
    if report.preys_removed:
        q.keep(~gone)
        world.invalidate_index(predators=False)
    return report, rewards, died


def apply_lifecycle(world, lifecycle, events=(), eternal_longevity=False):
    """Both lifecycle phases back to back (births, then decay/reward/removal)."""
    born = procreate(world, lifecycle, eternal_longevity)
    report, rewards, died = settle_lifecycle(world, lifecycle, events, eternal_longevity)
    report.prey_births = born.prey_births
    report.predator_births = born.predator_births
    return report


# -- zookeeper ---------------------------------------------------------------

@dataclass(frozen=True)
class FeedingEvent:
    t: int
    species_fed: int
    amount: int


def zookeeper_step(world, zk):
    """Refill one prey species when the other runs low, alternating species.

    Before the first feeding either species may trigger (group prey checked
    first). Afterwards only the species fed last can trigger, so feedings
    strictly alternate. The fed species is topped up to ``refill_amount``;
    a top-up of zero passes the turn without an event.
    """
    if zk.threshold <= 0:
        return None
    counts = world.prey_counts()
    if world.zoo_last_fed < 0:
        watch = [GROUP_PREY, SOLO_PREY]
    else:
        watch = [world.zoo_last_fed]
    for low in watch:
        if counts[low] < zk.threshold:
            fed = 1 - low
            amount = max(0, zk.refill_amount - counts[fed])
            world.zoo_last_fed = fed
            if amount == 0:
                # already stocked (the initial sheep-only state): the turn
                # passes to the other species without a logged feeding
                return None
            world.spawn_preys(amount, fed)
            return FeedingEvent(world.t, fed, amount)
    return None


# -- queries -----------------------------------------------------------------

def spatial_query(world, rect):
    """Ids of alive entities with position in the inclusive ``(x0, x1, y0, y1)``."""
    x0, x1, y0, y1 = clip_rect(*rect, world.width, world.height)
    pi = world.pred_index.query_rect(x0, x1, y0, y1)
    qi = world.prey_index.query_rect(x0, x1, y0, y1)
    qi = qi[world.preys.alive[qi]]
    return np.sort(np.concatenate([world.predators.id[pi], world.preys.id[qi]]))


def group_registry_ok(world):
    try:
        world.check_invariants()
    except AssertionError:
        return False
    return True
