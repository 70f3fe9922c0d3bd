"""Step orchestration and run-level bookkeeping.

One step:

1. births (preys, then predators);
2. every predator observes the same pre-action snapshot, the shared network
   scores it and an epsilon-greedy action is drawn; movement settles for
   all agents, then join/leave actions settle in ascending id order;
3. captures are resolved once, after all actions;
4. health decay, capture rewards, removal of the dead;
5. next states are observed, one transition per acting agent is buffered,
   the buffer is drained into mini-batches for TD updates and cleared;
6. zookeeper feeding (grouping experiments);
7. ``t += 1``.

Steps 4 and 5 touch disjoint state (world vs. network) and draw from
separate RNG streams, so they commute with the order listed in Algorithm 1
of the source method. Any exception rolls the step back.
"""

from __future__ import annotations

import csv
import logging
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import PopulationRecord, group_proportion
from .config import Mode, SimConfig, dump_config
from .errors import ConfigError, SimulationError
from .learner import (ExperienceBuffer, QNetwork, drain_minibatches, forward_chunked,
                      load_checkpoint, save_checkpoint, select_actions, td_update)
from .perception import observe_states, state_dim, worker_count
from .snapshot import load_snapshot, parse_snapshot, rng_from_state, rng_state, save_snapshot, snapshot_bytes
from .world import (SPECIES_NAMES, init_world, prey_capacity, procreate, resolve_captures,
                    seed_streams, settle_groupings, settle_lifecycle, settle_moves, zookeeper_step)

log = logging.getLogger("swlv")

POPULATION_HEADER = ("t", "n_predators", "n_prey_group", "n_prey_solo", "group_proportion")
GROUPING_HEADER = ("t", "group_proportion", "n_prey_group", "n_prey_solo")
EVENTS_HEADER = ("t", "species_fed", "amount")


@dataclass
class StepReport:
    t: int
    prey_births: tuple = (0, 0)
    predator_births: int = 0
    predator_deaths: int = 0
    captures: int = 0
    actions: int = 0
    transitions: int = 0
    mean_reward: float = 0.0
    batches: int = 0
    loss: float | None = None
    feeding: object = None
    wall_time: float = 0.0


class Simulation:
    def __init__(self, config: SimConfig, net=None, world=None):
        self.config = config.validate()
        seed = config.engine.seed
        streams = seed_streams(seed)
        self.world = world if world is not None else init_world(config.world, seed)
        self.policy_rng = np.random.default_rng(streams[1])
        self.learner_rng = np.random.default_rng(streams[2])
        dim = state_dim(config.world.view_depth, config.world.view_width)
        if net is None:
            net = QNetwork.create(dim, np.random.default_rng(streams[3]))
        if net.input_dim != dim:
            raise ConfigError("init_checkpoint",
                              f"network input {net.input_dim} does not match state size {dim}")
        self.net = net
        self.buffer = ExperienceBuffer()
        self.workers = worker_count()

    @property
    def t(self):
        return self.world.t

    @property
    def eternal(self):
        return self.config.engine.eternal_longevity

    def record(self):
        n_group, n_solo = self.world.prey_counts()
        return PopulationRecord(self.world.t, self.world.n_predators, n_group, n_solo,
                                group_proportion(self.world))

    # -- rollback support --------------------------------------------------

    def _save_state(self):
        w = self.world
        big = len(w.predators) + len(w.preys) > self.config.engine.snapshot_on_disk_above
        saved = {"net": [p.copy() for p in self.net.params],
                 "policy": rng_state(self.policy_rng), "learner": rng_state(self.learner_rng)}
        if big:
            f = tempfile.TemporaryFile()
            f.write(snapshot_bytes(w))
            saved["file"] = f
        else:
            saved["world"] = w.copy()
        return saved

    def _restore_state(self, saved):
        if "file" in saved:
            f = saved["file"]
            f.seek(0)
            world, _ = parse_snapshot(f.read())
            f.close()
        else:
            world = saved["world"]
        self.world.restore_from(world)
        self.net.params = saved["net"]
        self.policy_rng = rng_from_state(saved["policy"])
        self.learner_rng = rng_from_state(saved["learner"])
        self.buffer.clear()

    def engine_state(self):
        return {"policy_rng": rng_state(self.policy_rng), "learner_rng": rng_state(self.learner_rng)}

    def load_engine_state(self, extra):
        self.policy_rng = rng_from_state(extra["policy_rng"])
        self.learner_rng = rng_from_state(extra["learner_rng"])


def step(sim: Simulation) -> StepReport:
    """Advance the simulation by one step; all-or-nothing."""
    if len(sim.buffer):
        raise SimulationError("experience buffer not empty at step start")
    saved = sim._save_state()
    try:
        return _step(sim)
    except BaseException:
        sim._restore_state(saved)
        raise
    finally:
        if "file" in saved and not saved["file"].closed:
            saved["file"].close()


def _step(sim):
    t0 = time.perf_counter()
    cfg = sim.config
    world = sim.world
    lc, lr = cfg.lifecycle, cfg.learner
    report = StepReport(t=world.t + 1)

    born = procreate(world, lc, sim.eternal)
    report.prey_births = born.prey_births
    report.predator_births = born.predator_births

    p = world.predators
    n = len(p)
    report.actions = n
    acting_ids = p.id.copy()
    idx = np.arange(n)
    states = observe_states(world, idx, sim.workers)
    q = forward_chunked(sim.net, states)
    actions = select_actions(q, lr.epsilon, sim.policy_rng)
    settle_moves(world, idx, actions)
    settle_groupings(world, idx, actions)

    events = resolve_captures(world)
    report.captures = len(events)
    lrep, rewards, _ = settle_lifecycle(world, lc, events, sim.eternal)
    report.predator_deaths = lrep.predator_deaths
    report.mean_reward = float(rewards.mean()) if n else 0.0

    if lr.learning_enabled and n:
        pos, alive = world.predators.index_of(acting_ids)
        next_states = np.zeros_like(states)
        next_states[alive] = observe_states(world, pos[alive], sim.workers)
        sim.buffer.push(states, actions, rewards, next_states, ~alive)
        report.transitions = len(sim.buffer)
        losses = []
        for batch in drain_minibatches(sim.buffer, lr.batch_size, sim.learner_rng):
            losses.append(td_update(sim.net, batch, lr))
        report.batches = len(losses)
        report.loss = float(np.mean(losses)) if losses else None
    sim.buffer.clear()

    if cfg.engine.mode is Mode.GROUPING:
        report.feeding = zookeeper_step(world, cfg.zookeeper)
    world.t += 1
    report.wall_time = time.perf_counter() - t0
    return report


# -- runs ------------------------------------------------------------------------

@dataclass
class RunArtifacts:
    outdir: Path
    paths: dict = field(default_factory=dict)
    steps_run: int = 0
    interrupted: bool = False
    summary: dict = field(default_factory=dict)


class _CsvLog:
    def __init__(self, path, header, resume_t=None):
        self.path = Path(path)
        if resume_t is not None and self.path.exists():
            rows = self.path.read_text().splitlines()[1:]
            keep = [r for r in rows if r and int(r.split(",", 1)[0]) <= resume_t]
            self.path.write_text(",".join(header) + "\n" + "".join(r + "\n" for r in keep))
            self.f = open(self.path, "a", newline="")
        else:
            self.f = open(self.path, "w", newline="")
            self.f.write(",".join(header) + "\n")
        self.w = csv.writer(self.f, lineterminator="\n")

    def row(self, values):
        self.w.writerow(values)

    def flush(self):
        self.f.flush()

    def close(self):
        self.f.close()


def _fmt(x):
    return f"{x:.6f}"


def write_manifest(cfg, outdir, subcommand="run", config_path="", extra=None):
    info = {"subcommand": subcommand, "config": config_path, "seed": cfg.engine.seed,
            "outdir": str(outdir), "version": __version__}
    if extra:
        info.update(extra)
    path = Path(outdir) / "config.copy"
    path.write_text(dump_config(cfg, {"manifest": info}))
    return path


def _checkpoint(sim, outdir):
    save_snapshot(sim.world, outdir / "world.snap", sim.engine_state())
    save_checkpoint(sim.net, outdir / "qnet.ckpt")


def run(sim: Simulation, outdir, hooks=(), resume=False, manifest=None, max_steps=None):
    """Step until ``total_steps`` and write the run directory.

    Writes ``population.csv``, ``grouping.csv``, ``events.csv``, ``run.log``,
    ``summary.txt``, ``qnet.init.ckpt`` (parameters before step 1),
    ``qnet.ckpt`` and ``world.snap``. ``hooks`` are called as
    ``hook(sim, report, record)`` on every recorded step. With ``resume`` the
    world, network and RNG streams are reloaded from ``outdir`` and the CSVs
    continue after the snapshot step. ``max_steps`` caps the number of steps
    taken by this call (used to emulate interruption).
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    ecfg = sim.config.engine
    handler = logging.FileHandler(outdir / "run.log", mode="a" if resume else "w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    resume_t = None
    if resume:
        world, extra = load_snapshot(outdir / "world.snap")
        sim.world = world
        sim.load_engine_state(extra)
        sim.net = load_checkpoint(outdir / "qnet.ckpt")
        resume_t = world.t
        log.info("resumed at t=%d", world.t)
    else:
        if manifest is not False:
            write_manifest(sim.config, outdir, **(manifest or {}))
        save_checkpoint(sim.net, outdir / "qnet.init.ckpt")
    pop = _CsvLog(outdir / "population.csv", POPULATION_HEADER, resume_t)
    grp = _CsvLog(outdir / "grouping.csv", GROUPING_HEADER, resume_t)
    evt = _CsvLog(outdir / "events.csv", EVENTS_HEADER, resume_t)
    art = RunArtifacts(outdir)
    art.paths = {name: outdir / name for name in
                 ("config.copy", "population.csv", "grouping.csv", "events.csv",
                  "qnet.ckpt", "world.snap", "run.log", "summary.txt", "qnet.init.ckpt")}
    capacity = prey_capacity(sim.world, sim.config.lifecycle)
    summary = _load_summary(outdir) if resume else {}
    summary.setdefault("predator_extinction_step", "none")
    summary.setdefault("prey_cap_hit_step", "none")
    log.info("run start t=%d total_steps=%d predators=%d preys=%d", sim.t, ecfg.total_steps,
             sim.world.n_predators, len(sim.world.preys))
    t_start = time.perf_counter()
    taken = 0
    try:
        while sim.t < ecfg.total_steps and (max_steps is None or taken < max_steps):
            report = step(sim)
            taken += 1
            w = sim.world
            if report.feeding is not None:
                ev = report.feeding
                evt.row([report.t, SPECIES_NAMES[ev.species_fed], ev.amount])
                evt.flush()
            if w.n_predators == 0 and summary["predator_extinction_step"] == "none":
                summary["predator_extinction_step"] = str(w.t)
            n_group, n_solo = w.prey_counts()
            if n_group + n_solo >= capacity and summary["prey_cap_hit_step"] == "none":
                summary["prey_cap_hit_step"] = str(w.t)
            if w.t % ecfg.record_every == 0:
                rec = sim.record()
                pop.row([rec.t, rec.n_predators, rec.n_prey_group, rec.n_prey_solo,
                         _fmt(rec.group_proportion)])
                grp.row([rec.t, _fmt(rec.group_proportion), rec.n_prey_group, rec.n_prey_solo])
                pop.flush()
                grp.flush()
                log.info("t=%d predators=%d prey_group=%d prey_solo=%d group_prop=%.4f "
                         "captures=%d batches=%d loss=%s step_wall=%.4fs", rec.t, rec.n_predators,
                         rec.n_prey_group, rec.n_prey_solo, rec.group_proportion, report.captures,
                         report.batches, "nan" if report.loss is None else f"{report.loss:.5g}",
                         report.wall_time)
                for hook in hooks:
                    hook(sim, report, rec)
            if ecfg.checkpoint_every and w.t % ecfg.checkpoint_every == 0:
                _checkpoint(sim, outdir)
    except KeyboardInterrupt:
        art.interrupted = True
        log.warning("interrupted at t=%d; state saved for resume", sim.t)
    finally:
        for f in (pop, grp, evt):
            f.close()
        _checkpoint(sim, outdir)
        summary["steps"] = str(sim.t)
        summary["wall_time_s"] = f"{time.perf_counter() - t_start:.3f}"
        _write_summary(outdir, summary)
        log.info("run end t=%d wall=%.2fs", sim.t, time.perf_counter() - t_start)
        log.removeHandler(handler)
        handler.close()
    art.steps_run = taken
    art.summary = summary
    return art


def _write_summary(outdir, summary):
    (Path(outdir) / "summary.txt").write_text("".join(f"{k}={v}\n" for k, v in summary.items()))


def _load_summary(outdir):
    path = Path(outdir) / "summary.txt"
    if not path.exists():
        return {}
    out = {}
    for line in path.read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k] = v
    return out
