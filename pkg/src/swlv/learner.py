"""Shared Q-network, epsilon-greedy policy, single-step experience buffer.

The network is a plain numpy MLP ``input -> 32 -> 32 -> 9`` with logistic
hidden units and a linear head. Training is semi-gradient TD(0): targets
``r + gamma * max_a' Q(s', a')`` come from the same network and are held
fixed while one SGD step is taken on ``0.5 * mean((y - Q(s, a))**2)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import FormatError, NumericError, ShapeError

N_ACTIONS = 9
HIDDEN = (32, 32)


sigmoid = expit


class QNetwork:
    def __init__(self, dims, params=None, dtype=np.float32):
        self.dims = tuple(int(d) for d in dims)
        self.dtype = np.dtype(dtype)
        if params is None:
            params = []
            for fan_in, fan_out in zip(self.dims[:-1], self.dims[1:]):
                params += [np.zeros((fan_in, fan_out), self.dtype), np.zeros(fan_out, self.dtype)]
        self.params = [np.ascontiguousarray(p, dtype=self.dtype) for p in params]
        for k, (fan_in, fan_out) in enumerate(zip(self.dims[:-1], self.dims[1:])):
            if self.params[2 * k].shape != (fan_in, fan_out) or self.params[2 * k + 1].shape != (fan_out,):
                raise ShapeError(f"layer {k} parameters do not match dims {self.dims}")

    @classmethod
    def create(cls, input_dim, rng, hidden=HIDDEN, n_out=N_ACTIONS, dtype=np.float32):
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation of every weight and bias."""
        dims = (input_dim, *hidden, n_out)
        params = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype))
            params.append(rng.uniform(-bound, bound, size=fan_out).astype(dtype))
        return cls(dims, params, dtype)

    @property
    def input_dim(self):
        return self.dims[0]

    def copy(self):
        return QNetwork(self.dims, [p.copy() for p in self.params], self.dtype)

    def n_layers(self):
        return len(self.dims) - 1

    def _forward_cache(self, x):
        acts = [x]
        h = x
        last = self.n_layers() - 1
        for k in range(self.n_layers()):
            z = h @ self.params[2 * k] + self.params[2 * k + 1]
            h = z if k == last else sigmoid(z)
            acts.append(h)
        return acts

    def __call__(self, states):
        return forward(self, states)


def forward(net, state):
    """Q-values for one state ``(D,)`` or a batch ``(B, D)``."""
    x = np.asarray(state, dtype=net.dtype)
    if x.shape[-1] != net.input_dim:
        raise ShapeError(f"state length {x.shape[-1]} != network input {net.input_dim}")
    return net._forward_cache(x)[-1]


def forward_chunked(net, states, chunk=65536):
    out = np.empty((len(states), net.dims[-1]), dtype=net.dtype)
    for s in range(0, len(states), chunk):
        out[s:s + chunk] = forward(net, states[s:s + chunk])
    return out


def select_actions(qvalues, epsilon, rng):
    """Epsilon-greedy over rows of ``qvalues``; greedy ties go to the lowest index."""
    q = np.asarray(qvalues)
    if np.isnan(q).any():
        raise NumericError("NaN in Q-values")
    n = len(q)
    explore = rng.random(n) < epsilon
    random_a = rng.integers(0, q.shape[1], size=n)
    return np.where(explore, random_a, np.argmax(q, axis=1)).astype(np.int64)


def select_action(qvalues, epsilon, rng):
    return int(select_actions(np.asarray(qvalues)[None, :], epsilon, rng)[0])


@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


@dataclass
class TransitionBatch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminal: np.ndarray
    ids: np.ndarray | None = None

    def __len__(self):
        return len(self.actions)

    @classmethod
    def from_transitions(cls, transitions):
        return cls(np.stack([t.state for t in transitions]),
                   np.array([t.action for t in transitions], dtype=np.int64),
                   np.array([t.reward for t in transitions], dtype=np.float32),
                   np.stack([t.next_state for t in transitions]),
                   np.array([t.terminal for t in transitions], dtype=bool))


def td_targets(net, batch, gamma):
    q_next = forward(net, batch.next_states).max(axis=1)
    q_next = np.where(batch.terminal, 0.0, q_next)
    return (batch.rewards + gamma * q_next).astype(net.dtype)


def loss_and_grads(net, batch, gamma):
    """TD loss and its exact gradient with the targets held constant."""
    y = td_targets(net, batch, gamma)
    acts = net._forward_cache(np.asarray(batch.states, dtype=net.dtype))
    q = acts[-1]
    rows = np.arange(len(batch))
    a = np.asarray(batch.actions)
    delta = q[rows, a] - y
    loss = 0.5 * float(np.mean(delta.astype(np.float64) ** 2))
    g = np.zeros_like(q)
    g[rows, a] = delta / len(batch)
    grads = [None] * len(net.params)
    for k in reversed(range(net.n_layers())):
        grads[2 * k] = acts[k].T @ g
        grads[2 * k + 1] = g.sum(axis=0)
        if k:
            h = acts[k]
            g = (g @ net.params[2 * k].T) * h * (1.0 - h)
    return loss, grads


def td_update(net, batch, cfg):
    """One SGD step on a mini-batch; a no-op when learning is disabled.

    Returns the pre-update loss (``None`` when nothing was done).
    """
    if not cfg.learning_enabled or len(batch) == 0:
        return None
    loss, grads = loss_and_grads(net, batch, cfg.discount_gamma)
    lr = net.dtype.type(cfg.learning_rate)
    for p, g in zip(net.params, grads):
        p -= lr * g
    if not all(np.isfinite(p).all() for p in net.params):
        raise NumericError("non-finite network parameters after update")
    return loss


class ExperienceBuffer:
    """Transitions of the current step only; drained and emptied once per step."""

    def __init__(self):
        self._chunks = []
        self._next_id = 0

    def __len__(self):
        return sum(len(c) for c in self._chunks)

    def push(self, states, actions, rewards, next_states, terminal):
        n = len(actions)
        ids = np.arange(self._next_id, self._next_id + n)
        self._next_id += n
        self._chunks.append(TransitionBatch(np.asarray(states), np.asarray(actions, np.int64),
                                            np.asarray(rewards, np.float32), np.asarray(next_states),
                                            np.asarray(terminal, bool), ids))

    def push_transition(self, t: Transition):
        self.push(t.state[None], [t.action], [t.reward], t.next_state[None], [t.terminal])

    def clear(self):
        self._chunks = []

    def _merged(self):
        if len(self._chunks) == 1:
            return self._chunks[0]
        cs = self._chunks
        return TransitionBatch(*(np.concatenate([getattr(c, f) for c in cs])
                                 for f in ("states", "actions", "rewards", "next_states", "terminal", "ids")))


def drain_minibatches(buffer, batch_size, rng):
    """Shuffle, split into floor(len/batch_size) disjoint batches, empty the buffer.

    The buffer is emptied immediately; batches are materialised lazily.
    """
    n = len(buffer)
    if n == 0:
        buffer.clear()
        return iter(())
    data = buffer._merged()
    buffer.clear()
    perm = rng.permutation(n)
    n_batches = n // batch_size

    def batches():
        for b in range(n_batches):
            sel = perm[b * batch_size:(b + 1) * batch_size]
            yield TransitionBatch(data.states[sel], data.actions[sel], data.rewards[sel],
                                  data.next_states[sel], data.terminal[sel], data.ids[sel])

    return batches()


# -- checkpoint file -----------------------------------------------------------
#
# little-endian:
#   b"SWQN" | u32 version | u32 n_layers | u32 dims[n_layers + 1]
#   then per layer: weights (fan_in x fan_out, row-major f32), bias (fan_out f32)

CKPT_MAGIC = b"SWQN"
CKPT_VERSION = 1


def checkpoint_bytes(net):
    out = [CKPT_MAGIC, struct.pack("<II", CKPT_VERSION, net.n_layers()),
           struct.pack(f"<{len(net.dims)}I", *net.dims)]
    for p in net.params:
        out.append(np.ascontiguousarray(p, dtype="<f4").tobytes())
    return b"".join(out)


def save_checkpoint(net, path):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(checkpoint_bytes(net))
    tmp.replace(path)
    return path


def parse_checkpoint(data):
    if len(data) < 4 or data[:4] != CKPT_MAGIC:
        raise FormatError("bad checkpoint magic", 0)
    if len(data) < 12:
        raise FormatError("truncated checkpoint header", len(data))
    version, n_layers = struct.unpack_from("<II", data, 4)
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4)
    if not 1 <= n_layers <= 64:
        raise FormatError(f"implausible layer count {n_layers}", 8)
    off = 12
    if len(data) < off + 4 * (n_layers + 1):
        raise FormatError("truncated layer dims", len(data))
    dims = struct.unpack_from(f"<{n_layers + 1}I", data, off)
    if any(d == 0 for d in dims):
        raise FormatError(f"zero layer dimension in {dims}", off)
    off += 4 * (n_layers + 1)
    params = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        for shape in ((fan_in, fan_out), (fan_out,)):
            size = int(np.prod(shape)) * 4
            if len(data) < off + size:
                raise FormatError("truncated parameter block", len(data))
            params.append(np.frombuffer(data, dtype="<f4", count=size // 4, offset=off)
                          .reshape(shape).astype(np.float32))
            off += size
    if off != len(data):
        raise FormatError(f"{len(data) - off} trailing bytes", off)
    return QNetwork(dims, params)


def load_checkpoint(path):
    return parse_checkpoint(Path(path).read_bytes())
