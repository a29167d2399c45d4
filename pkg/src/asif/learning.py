"""Replay, epsilon-greedy acting and the fixed-ratio learner loop."""

from __future__ import annotations

import collections
import csv
import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional, Protocol

import numpy as np

from .graph_net import (
    AdamState, GraphArrays, GraphNetParams, Transition, adam_step, flat_q, forward, as_batch,
    q_learning_loss,
)

TRACE_FIELDS = ("step", "episode", "reward", "loss", "epsilon")


@dataclass(frozen=True)
class LearnerConfig:
    batch_size: int = 16
    replay_ratio: int = 4
    warmup: int = 500
    capacity: int = 100_000
    gamma: float = 0.98
    lr: float = 2e-4
    target_period: int = 512
    eps_min: float = 0.01
    eps_window: int = 100
    learner_steps: int = 10_000
    eval_every: int = 0
    stop_at: Optional[float] = None
    double_q: bool = False


class ReplayBuffer:
    """FIFO ring buffer with uniform sampling."""

    def __init__(self, capacity: int = 100_000):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items = collections.deque(maxlen=capacity)
        self.total_added = 0

    def __len__(self) -> int:
        return len(self._items)

    def add(self, t: Transition) -> None:
        self._items.append(t)
        self.total_added += 1

    def items(self) -> list:
        return list(self._items)

    def sample(self, rng: np.random.Generator, n: int) -> list:
        idx = rng.integers(0, len(self._items), size=n)
        return [self._items[i] for i in idx]


@dataclass
class ExplorationState:
    window: int = 100
    eps_min: float = 0.01
    recent: collections.deque = dataclasses.field(default=None)

    def __post_init__(self):
        if self.recent is None:
            self.recent = collections.deque(maxlen=self.window)

    @property
    def success(self) -> float:
        return float(np.mean(self.recent)) if self.recent else 0.0

    def record(self, fraction: float) -> None:
        self.recent.append(fraction)


def adaptive_epsilon(es: ExplorationState) -> float:
    return float(min(1.0, max(es.eps_min, 1.0 - es.success)))


def greedy_index(q: np.ndarray, mask: np.ndarray) -> int:
    """Argmax over valid entries; np.argmax already returns the lowest index on ties."""
    return int(np.argmax(np.where(mask, q, -np.inf)))


def select_action(q, mask: np.ndarray, eps: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over valid actions. ``q`` may be a vector or a zero-argument callable.

    The random branch is drawn first so a lazy ``q`` is only evaluated when needed.
    """
    valid = np.flatnonzero(mask)
    if valid.size == 0:
        raise ValueError("no valid actions")
    if eps > 0 and rng.random() < eps:
        return int(valid[rng.integers(valid.size)])
    return greedy_index(q() if callable(q) else q, mask)


def greedy_q(p: GraphNetParams, ga: GraphArrays) -> np.ndarray:
    b = as_batch(ga)
    return flat_q(forward(p, b), b, 0)


class Env(Protocol):
    """What the learner loop needs from an environment."""

    def reset(self, episode: int): ...

    def features(self, obs) -> GraphArrays: ...

    def mask(self, obs) -> np.ndarray: ...

    def step(self, action: int) -> tuple: ...

    def reward_bound(self) -> float: ...


@dataclass
class TrainResult:
    params: GraphNetParams
    learner_steps: int
    episodes: int
    trace: list
    evals: list
    fractions: list = dataclasses.field(default_factory=list)


def learner_loop(env: Env, params: GraphNetParams, config: LearnerConfig, seed: int,
                 trace_path=None, evaluate: Optional[Callable] = None,
                 buffer: Optional[ReplayBuffer] = None, planner: Optional[Callable] = None,
                 distill=None) -> TrainResult:
    """Act and learn until ``config.learner_steps`` gradient steps are done.

    After warm-up, every ``batch_size`` stored transitions buy ``replay_ratio``
    gradient steps, so each transition is replayed ``replay_ratio`` times in
    expectation. ``evaluate(params) -> fraction`` is called every
    ``eval_every`` learner steps; training stops early once it reaches
    ``stop_at``.

    With a ``planner(env, obs, params, rng) -> (action, search_q)`` the greedy
    branch of epsilon-greedy asks the planner instead of the network, and the
    search values are stored for ``distill`` (a ``q_learning_loss`` extra term
    factory taking the sampled batch).
    """
    rng = np.random.default_rng(seed)
    buffer = ReplayBuffer(config.capacity) if buffer is None else buffer
    target = params.copy()
    opt = AdamState.zeros(params.flat.size)
    es = ExplorationState(config.eps_window, config.eps_min)
    trace, evals, losses, fractions = [], [], [], []
    steps = episode = stored = 0
    writer = None
    fh = open(trace_path, "w", newline="") if trace_path else None
    try:
        if fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_FIELDS)
        done_training = config.learner_steps <= 0
        while not done_training:
            obs = env.reset(episode)
            ga = env.features(obs)
            mask = env.mask(obs)
            total, terminal = 0.0, False
            eps = adaptive_epsilon(es)
            while not terminal and not done_training:
                search_q = None
                if planner is not None and not (eps > 0 and rng.random() < eps):
                    a, search_q = planner(env, obs, params, rng)
                else:
                    a = select_action(lambda: greedy_q(params, ga), mask,
                                      1.0 if planner is not None else eps, rng)
                obs, r, terminal = env.step(a)
                total += r
                nga, nmask = (None, None) if terminal else (env.features(obs), env.mask(obs))
                buffer.add(Transition(ga, a, float(r), nga, bool(terminal), nmask, mask, search_q))
                ga, mask = nga, nmask
                if len(buffer) < config.warmup:
                    continue
                stored += 1
                owed = stored * config.replay_ratio // config.batch_size - steps
                while owed > 0 and not done_training:
                    batch = buffer.sample(rng, config.batch_size)
                    extra = distill(batch) if distill is not None else None
                    loss, grad = q_learning_loss(params, target, batch, config.gamma, extra,
                                                 config.double_q)
                    params, opt = adam_step(params, grad, opt, config.lr)
                    losses.append(loss)
                    steps += 1
                    owed -= 1
                    if steps % config.target_period == 0:
                        target = params.copy()
                    if evaluate is not None and config.eval_every and steps % config.eval_every == 0:
                        score = float(evaluate(params))
                        evals.append((steps, score))
                        if config.stop_at is not None and score >= config.stop_at:
                            done_training = True
                    if steps >= config.learner_steps:
                        done_training = True
            bound = env.reward_bound()
            fraction = total / bound if bound > 0 else 0.0
            es.record(fraction)
            fractions.append(fraction)
            row = (steps, episode, round(total, 12), round(float(np.mean(losses)), 12) if losses else "",
                   round(eps, 12))
            losses = []
            trace.append(row)
            if writer:
                writer.writerow(row)
            episode += 1
    finally:
        if fh:
            fh.close()
    return TrainResult(params, steps, episode, trace, evals, fractions)
