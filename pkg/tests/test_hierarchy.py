import numpy as np
import pytest

from asif.graph_net import NetConfig, encode_features, init_params, params_digest
from asif.harness.oracle import oracle_policy
from asif.hierarchy import (
    AgentMode, ControllerEnv, HeuristicController, NeuralController, NeuralPolicy, NoOpController,
    UnsupportedModeError, controller_net_config, decode_controller, decode_low_level,
    encode_controller, encode_low_level, finetune_low_level, run_episode, train_controller,
)
from asif.kinds import TaskKind
from asif.learning import LearnerConfig, ReplayBuffer, greedy_index, greedy_q, learner_loop
from asif.scene_graph import AddTarget, DeleteBand, EditActive
from asif.tasks import SceneConfig, reset, step

from helpers import BanditEnv

TINY = NetConfig(latent=8, hidden=8, node_out=0, edge_out=30)
QUICK = LearnerConfig(warmup=16, eval_every=0)


@pytest.mark.parametrize("task", [TaskKind.EDIT_TRANSFER, TaskKind.DELETE_TRANSFER, TaskKind.ADD_TRANSFER])
def test_buffers_share_rewards(task):
    bufs, total, s = run_episode(HeuristicController(task.family), oracle_policy, task, 3,
                                 SceneConfig.reduced())
    assert len(bufs.buffer_Pi) == len(bufs.buffer_pi) == s.steps_taken
    rPi = sum(r for _, _, r in bufs.buffer_Pi)
    rpi = sum(r for _, _, r in bufs.buffer_pi)
    assert rPi == rpi == pytest.approx(total)


def test_noop_controller_matches_flat_rollout():
    task = TaskKind.EDIT_PRETRAIN_CONNECT
    bufs, total, final = run_episode(NoOpController(), oracle_policy, task, 5)
    s = reset(task, 5)
    while not s.terminal:
        s, _ = step(s, oracle_policy(s.graph))
    assert s.world == final.world and s.cumulative_reward == total
    assert all(g is not None for g, _, _ in bufs.buffer_pi)


def test_low_level_index_round_trip():
    g = reset(TaskKind.EDIT_TRANSFER, 0).graph
    for idx in (0, 29, 31, 30 * len(g.edges) - 1):
        assert encode_low_level(g, decode_low_level(g, idx)) == idx


@pytest.mark.parametrize("family", ["edit", "delete", "add", "combined"])
def test_controller_index_round_trip(family):
    g = reset(TaskKind.ADD_TRANSFER, 1).graph
    cfg = controller_net_config(family)
    n = len(g) * cfg.node_out + len(g.edges) * cfg.edge_out
    for idx in range(0, n, max(1, n // 40)):
        assert encode_controller(g, decode_controller(g, idx, family), family) == idx


def test_combined_variants():
    g = reset(TaskKind.ADD_TRANSFER, 1).graph
    assert decode_controller(g, 0, "combined") == EditActive(g.nodes[0].id)
    assert decode_controller(g, 1, "combined") == DeleteBand(g.nodes[0].id)
    assert isinstance(decode_controller(g, 2 * len(g), "combined"), AddTarget)


def test_no_heuristic_for_combined():
    with pytest.raises(UnsupportedModeError):
        HeuristicController("combined")
    with pytest.raises(UnsupportedModeError):
        finetune_low_level(init_params(0, TINY), TaskKind.COMBINED_TRANSFER, 10)


def test_finetune_budget_zero_identity():
    low = init_params(0, TINY)
    params, res, _ = finetune_low_level(low, TaskKind.EDIT_TRANSFER, 0, cfg=SceneConfig.compact(),
                                        n_eval=2)
    assert params_digest(params) == params_digest(low)


def test_frozen_low_level_unchanged():
    low = init_params(1, TINY)
    digest = params_digest(low)
    net = controller_net_config("edit", 8, 8)
    params, res, _ = train_controller(low, TaskKind.EDIT_TRANSFER, 8, cfg=SceneConfig.compact(),
                                      net=net, learner=QUICK, n_eval=2)
    assert params_digest(low) == digest and res.learner_steps == 8


def test_controller_buffer_indices_valid():
    low = NeuralPolicy(init_params(1, TINY))
    net = controller_net_config("edit", 8, 8)
    env = ControllerEnv(TaskKind.EDIT_TRANSFER, 0, low, SceneConfig.compact(), net)
    buf = ReplayBuffer()
    learner_loop(env, init_params(0, net), LearnerConfig(warmup=16, learner_steps=4), 0, buffer=buf)
    assert len(buf) >= 16
    for t in buf.items():
        assert t.mask[t.action]


def test_bandit_controller_learns_better_node():
    env = BanditEnv((0.3, 0.7))
    net = NetConfig(latent=8, hidden=8, node_out=1, edge_out=0)
    res = learner_loop(env, init_params(0, net), LearnerConfig(warmup=32, learner_steps=400), 0)
    q = greedy_q(res.params, env.ga)
    assert greedy_index(q, env.mask(None)) == 3


def test_mode_names():
    assert AgentMode.parse("NeuralHRL_FrozenLow") == AgentMode.NEURAL_HRL_FROZEN_LOW
    assert AgentMode.ZERO_SHOT_PRETRAINED.needs_pretrained
    with pytest.raises(ValueError):
        AgentMode.parse("Bogus")
