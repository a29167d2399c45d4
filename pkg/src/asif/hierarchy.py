"""The two-level agent: a controller rewrites the observation, the low-level policy acts on it.

Both levels are plain callables over scene graphs, so heuristic, scripted and
neural pieces mix freely. ``LowLevelEnv`` and ``ControllerEnv`` wrap an
episode as seen by the level being trained; the other level is held fixed.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .graph_net import (
    GraphArrays, GraphNetParams, NetConfig, controller_mask, encode_features, init_params,
    low_level_mask, params_digest,
)
from .heuristics import HeuristicState, heuristic_add, heuristic_delete, heuristic_edit
from .kinds import N_ADD_OFFSETS, N_OFFSETS, TaskKind
from .learning import LearnerConfig, greedy_q, learner_loop
from .scene_graph import (
    AddTarget, DeleteBand, EditActive, LowLevelAction, NoOp, SceneGraph, apply_controller_action,
)
from .tasks import EpisodeState, SceneConfig, reset, step

EVAL_SEED_BASE = 1_000_000_000
EPISODE_SEED_STRIDE = 1_000_003


class AgentMode(enum.Enum):
    ZERO_SHOT_PRETRAINED = "ZeroShotPretrained"
    DIRECT_MODEL_FREE = "DirectModelFree"
    DIRECT_MODEL_BASED = "DirectModelBased"
    HEURISTIC_HRL_FINETUNE = "HeuristicHRL_Finetune"
    NEURAL_HRL_FROZEN_LOW = "NeuralHRL_FrozenLow"
    NEURAL_HRL_PLANNING = "NeuralHRL_Planning"

    @property
    def needs_pretrained(self) -> bool:
        return self in (AgentMode.ZERO_SHOT_PRETRAINED, AgentMode.HEURISTIC_HRL_FINETUNE,
                        AgentMode.NEURAL_HRL_FROZEN_LOW, AgentMode.NEURAL_HRL_PLANNING)

    @classmethod
    def parse(cls, name: str) -> "AgentMode":
        for m in cls:
            if name in (m.value, m.name) or name.lower() == m.value.lower():
                return m
        raise ValueError(f"unknown mode {name!r}")


class UnsupportedModeError(ValueError):
    pass


def episode_seed(seed: int, episode: int) -> int:
    return seed * EPISODE_SEED_STRIDE + episode


# -- action spaces ------------------------------------------------------------

LOW_LEVEL_NET = NetConfig(node_out=0, edge_out=2 * N_OFFSETS)


def controller_net_config(family: str, latent: int = 64, hidden: int = 64) -> NetConfig:
    node_out, edge_out = {"edit": (1, 0), "delete": (1, 0), "add": (0, N_ADD_OFFSETS),
                          "combined": (2, N_ADD_OFFSETS)}[family]
    return NetConfig(latent=latent, hidden=hidden, node_out=node_out, edge_out=edge_out)


def decode_low_level(g: SceneGraph, index: int) -> LowLevelAction:
    """Flat index = edge_index * 30 + sticky * 15 + offset."""
    e, rem = divmod(index, 2 * N_OFFSETS)
    sticky, offset = divmod(rem, N_OFFSETS)
    u, v = g.edges[e]
    return LowLevelAction(u, v, offset, bool(sticky))


def encode_low_level(g: SceneGraph, a: LowLevelAction) -> int:
    return g.edge_index[a.edge] * 2 * N_OFFSETS + int(a.sticky) * N_OFFSETS + a.offset_index


def decode_controller(g: SceneGraph, index: int, family: str):
    cfg = controller_net_config(family)
    n_part = len(g) * cfg.node_out
    if index < n_part:
        node, variant = divmod(index, cfg.node_out)
        node_id = g.nodes[node].id
        if family == "delete" or (family == "combined" and variant == 1):
            return DeleteBand(node_id)
        return EditActive(node_id)
    e, x = divmod(index - n_part, cfg.edge_out)
    u, v = g.edges[e]
    return AddTarget(u, v, x)


def encode_controller(g: SceneGraph, a, family: str) -> int:
    cfg = controller_net_config(family)
    if isinstance(a, (EditActive, DeleteBand)):
        variant = 1 if (family == "combined" and isinstance(a, DeleteBand)) else 0
        return g.index_of(a.node) * cfg.node_out + variant
    if isinstance(a, AddTarget):
        return len(g) * cfg.node_out + g.edge_index[a.edge] * cfg.edge_out + a.x
    raise ValueError(f"{a!r} has no index in the {family} controller space")


# -- controllers and low-level policies ---------------------------------------

class Controller:
    """Base controller: returns the graph untouched."""

    def reset(self) -> None:
        pass

    def act(self, s: EpisodeState):
        return NoOp()


class NoOpController(Controller):
    pass


class HeuristicController(Controller):
    def __init__(self, family: str, edit_cover_steps: Optional[int] = None):
        if family not in ("edit", "delete", "add"):
            raise UnsupportedModeError(f"no heuristic controller for the {family} task")
        self.family = family
        self.edit_cover_steps = edit_cover_steps
        self.state = HeuristicState()

    def reset(self) -> None:
        self.state = HeuristicState()

    def act(self, s: EpisodeState):
        g = s.graph
        if self.family == "edit":
            a, self.state = heuristic_edit(g, self.state, self.edit_cover_steps)
        elif self.family == "add":
            a, self.state = heuristic_add(g, self.state)
        else:
            a = heuristic_delete(g)
        return a


class NeuralController(Controller):
    def __init__(self, params: GraphNetParams, family: str):
        self.params = params
        self.family = family

    def act(self, s: EpisodeState):
        ga = encode_features(s.graph)
        q = greedy_q(self.params, ga)
        mask = controller_mask(ga, self.params.config)
        return decode_controller(s.graph, int(np.argmax(np.where(mask, q, -np.inf))), self.family)


def heuristic_for(task: TaskKind) -> HeuristicController:
    return HeuristicController(task.family)


class NeuralPolicy:
    """Greedy low-level policy from a checkpoint."""

    def __init__(self, params: GraphNetParams):
        self.params = params

    def __call__(self, g: SceneGraph) -> LowLevelAction:
        ga = encode_features(g)
        q = greedy_q(self.params, ga)
        mask = low_level_mask(ga, self.params.config)
        return decode_low_level(g, int(np.argmax(np.where(mask, q, -np.inf))))


# -- the episode loop ---------------------------------------------------------

@dataclass
class EpisodeBuffers:
    buffer_Pi: list = field(default_factory=list)
    buffer_pi: list = field(default_factory=list)


def run_episode(controller: Controller, policy: Callable, task: TaskKind, seed: int,
                cfg: Optional[SceneConfig] = None, state: Optional[EpisodeState] = None) -> tuple:
    """Roll out one episode; returns (buffers, total reward, final state).

    Each step the controller edits the observation, the policy acts on the
    edited graph, and the shared reward goes into both buffers.
    """
    s = state if state is not None else reset(task, seed, cfg)
    controller.reset()
    bufs = EpisodeBuffers()
    while not s.terminal:
        g = s.graph
        A = controller.act(s)
        g2 = apply_controller_action(g, A, s.task, s.subtask)
        a = policy(g2)
        s, r = step(s, a, g2)
        bufs.buffer_Pi.append((g, A, r.total))
        bufs.buffer_pi.append((g2, a, r.total))
    return bufs, s.cumulative_reward, s


def evaluate_agent(controller: Controller, policy: Callable, task: TaskKind, seeds,
                   cfg: Optional[SceneConfig] = None) -> list:
    """Per-seed reward fractions of greedy rollouts."""
    out = []
    for sd in seeds:
        _, total, s = run_episode(controller, policy, task, sd, cfg)
        out.append(total / s.max_reward if s.max_reward > 0 else 0.0)
    return out


def eval_seeds(n: int, offset: int = 0) -> list:
    return [EVAL_SEED_BASE + offset + i for i in range(n)]


# -- training environments ----------------------------------------------------

class LowLevelEnv:
    """Episodes seen by the low-level agent, optionally through a fixed controller."""

    def __init__(self, task: TaskKind, seed: int, cfg: Optional[SceneConfig] = None,
                 controller: Optional[Controller] = None, net: NetConfig = LOW_LEVEL_NET):
        self.task, self.seed, self.cfg = task, seed, cfg
        self.controller = controller or NoOpController()
        self.net = net
        self.state: Optional[EpisodeState] = None
        self.view: Optional[SceneGraph] = None

    def _observe(self):
        self.view = apply_controller_action(self.state.graph, self.controller.act(self.state),
                                            self.state.task, self.state.subtask)
        return self.view

    def reset(self, episode: int):
        self.state = reset(self.task, episode_seed(self.seed, episode), self.cfg)
        self.controller.reset()
        return self._observe()

    def features(self, obs: SceneGraph) -> GraphArrays:
        return encode_features(obs)

    def mask(self, obs: SceneGraph) -> np.ndarray:
        return low_level_mask(encode_features(obs), self.net)

    def step(self, action: int) -> tuple:
        self.state, r = step(self.state, decode_low_level(self.view, action), self.view)
        obs = None if self.state.terminal else self._observe()
        return obs, r.total, self.state.terminal

    def reward_bound(self) -> float:
        return self.state.max_reward

    # deterministic model interface used by search
    def observation(self):
        return self.view

    def snapshot(self):
        return (self.state, self.view, getattr(self.controller, "state", None))

    def restore(self, snap) -> None:
        self.state, self.view, cstate = snap
        if cstate is not None:
            self.controller.state = cstate


class ControllerEnv:
    """Episodes seen by a learning controller over a frozen low-level policy."""

    def __init__(self, task: TaskKind, seed: int, low: Callable, cfg: Optional[SceneConfig] = None,
                 net: Optional[NetConfig] = None):
        self.task, self.seed, self.cfg, self.low = task, seed, cfg, low
        self.family = task.family
        self.net = net or controller_net_config(self.family)
        self.state: Optional[EpisodeState] = None

    def reset(self, episode: int):
        self.state = reset(self.task, episode_seed(self.seed, episode), self.cfg)
        return self.state

    def features(self, obs: EpisodeState) -> GraphArrays:
        return encode_features(obs.graph)

    def mask(self, obs: EpisodeState) -> np.ndarray:
        return controller_mask(encode_features(obs.graph), self.net)

    def step(self, action: int) -> tuple:
        s = self.state
        A = decode_controller(s.graph, action, self.family)
        g2 = apply_controller_action(s.graph, A, s.task, s.subtask)
        self.state, r = step(s, self.low(g2), g2)
        return (None if self.state.terminal else self.state), r.total, self.state.terminal

    def reward_bound(self) -> float:
        return self.state.max_reward

    def observation(self):
        return self.state

    def snapshot(self):
        return self.state

    def restore(self, snap) -> None:
        self.state = snap


# -- training entry points ----------------------------------------------------

def _evaluator(make_agent: Callable, task: TaskKind, cfg, n_eval: int) -> Callable:
    seeds = eval_seeds(n_eval)

    def evaluate(params: GraphNetParams) -> float:
        controller, policy = make_agent(params)
        return float(np.mean(evaluate_agent(controller, policy, task, seeds, cfg)))
    return evaluate


def pretrain_low_level(task: TaskKind, budget: int, seed: int = 0, cfg: Optional[SceneConfig] = None,
                       net: NetConfig = LOW_LEVEL_NET, learner: Optional[LearnerConfig] = None,
                       trace_path=None, n_eval: int = 50, planner=None, distill=None) -> tuple:
    """Train a low-level agent directly on ``task``; returns (params, TrainResult, eval fraction)."""
    learner = _with_budget(learner, budget)
    params = init_params(seed, net)
    env = LowLevelEnv(task, seed, cfg, net=net)
    evaluate = _evaluator(lambda p: (NoOpController(), NeuralPolicy(p)), task, cfg, n_eval)
    res = learner_loop(env, params, learner, seed, trace_path, evaluate, planner=planner,
                       distill=distill)
    return res.params, res, evaluate(res.params)


def train_controller(low: GraphNetParams, task: TaskKind, budget: int, seed: int = 0,
                     cfg: Optional[SceneConfig] = None, net: Optional[NetConfig] = None,
                     learner: Optional[LearnerConfig] = None, trace_path=None, n_eval: int = 50,
                     planner=None, distill=None) -> tuple:
    """Q-learning for a neural controller on top of a frozen low-level policy."""
    learner = _with_budget(learner, budget)
    net = net or controller_net_config(task.family, low.config.latent, low.config.hidden)
    digest = params_digest(low)
    policy = NeuralPolicy(low)
    env = ControllerEnv(task, seed, policy, cfg, net)
    evaluate = _evaluator(lambda p: (NeuralController(p, task.family), policy), task, cfg, n_eval)
    res = learner_loop(env, init_params(seed, net), learner, seed, trace_path, evaluate,
                       planner=planner, distill=distill)
    if params_digest(low) != digest:
        raise RuntimeError("frozen low-level parameters changed during controller training")
    return res.params, res, evaluate(res.params)


def finetune_low_level(low: GraphNetParams, task: TaskKind, budget: int, seed: int = 0,
                       cfg: Optional[SceneConfig] = None, learner: Optional[LearnerConfig] = None,
                       trace_path=None, n_eval: int = 50) -> tuple:
    """Continue training the low-level policy underneath the task's heuristic controller."""
    if task.is_combined:
        raise UnsupportedModeError("no heuristic controller exists for the combined task")
    learner = _with_budget(learner, budget)
    env = LowLevelEnv(task, seed, cfg, controller=heuristic_for(task), net=low.config)
    evaluate = _evaluator(lambda p: (heuristic_for(task), NeuralPolicy(p)), task, cfg, n_eval)
    res = learner_loop(env, low.copy(), learner, seed, trace_path, evaluate)
    return res.params, res, evaluate(res.params)


def _with_budget(learner: Optional[LearnerConfig], budget: int) -> LearnerConfig:
    return dataclasses.replace(learner or LearnerConfig(), learner_steps=int(budget))


__all__ = [
    "AgentMode", "Controller", "ControllerEnv", "EpisodeBuffers", "HeuristicController",
    "LowLevelEnv", "NeuralController", "NeuralPolicy", "NoOpController", "UnsupportedModeError",
    "decode_controller", "decode_low_level", "encode_controller", "encode_low_level",
    "evaluate_agent", "finetune_low_level", "pretrain_low_level", "run_episode", "train_controller",
]
