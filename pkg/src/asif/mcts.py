"""UCT search over the deterministic simulator, and the search-distillation loss.

Actions are picked in two stages: first the graph element (a node or an
edge), then the column within it (offset and glue flag, node variant, or
lateral position). Each stage runs UCT with its own visit counts.

Values of actions never tried in search come from the network. The default
backup stores ``r + gamma * max_a' Q(s', a')``, which in a deterministic
model makes root values exact once the relevant subtree is explored; a
running-mean backup is available as ``backup="mean"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np

from .graph_net import Batch, GraphNetParams, flat_q, QOutput


class SearchProblem(Protocol):
    def expand(self, state) -> tuple:
        """(valid flat action indices, prior Q over all flat actions, group id per valid action)."""

    def transition(self, state, action: int) -> tuple:
        """(next state, reward, terminal)."""


@dataclass
class _Node:
    state: object
    valid: np.ndarray
    q: np.ndarray
    groups: np.ndarray
    n: np.ndarray = None
    reward: dict = field(default_factory=dict)
    children: dict = field(default_factory=dict)
    terminal_child: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n is None:
            self.n = np.zeros(len(self.valid), dtype=np.int64)
        self.order = np.argsort(self.groups, kind="stable")
        self.group_ids, self.starts = np.unique(self.groups[self.order], return_index=True)


@dataclass
class SearchResult:
    visits: np.ndarray
    q: np.ndarray
    action: int
    root_q: float


def _uct(q: np.ndarray, n: np.ndarray, total: int, c: float) -> np.ndarray:
    return q + c * np.sqrt(math.log(max(total, 1)) / (1.0 + n))


def _select(node: _Node, c: float) -> int:
    """Two-stage UCT; returns the position of the chosen action within ``node.valid``."""
    qv = node.q[node.valid]
    g_q = np.maximum.reduceat(qv[node.order], node.starts)
    g_n = np.add.reduceat(node.n[node.order], node.starts)
    group = node.group_ids[int(np.argmax(_uct(g_q, g_n, int(node.n.sum()), c)))]
    members = np.flatnonzero(node.groups == group)
    pick = int(np.argmax(_uct(qv[members], node.n[members], int(node.n[members].sum()), c)))
    return int(members[pick])


def _value(node: _Node) -> float:
    return float(node.q[node.valid].max())


def mcts_search(problem: SearchProblem, root_state, budget: int = 10, c_uct: float = 2.0,
                gamma: float = 0.98, backup: str = "max") -> SearchResult:
    """Run ``budget`` simulations from ``root_state``."""
    if backup not in ("max", "mean"):
        raise ValueError(f"unknown backup {backup!r}")
    valid, prior, groups = problem.expand(root_state)
    if len(valid) == 0:
        raise ValueError("search root has no valid actions (terminal state?)")
    root = _Node(root_state, np.asarray(valid), np.array(prior, dtype=np.float64), np.asarray(groups))
    for _ in range(budget):
        path = []
        node = root
        while True:
            i = _select(node, c_uct)
            a = int(node.valid[i])
            path.append((node, i, a))
            if a in node.children:
                node = node.children[a]
                continue
            if a in node.terminal_child:
                leaf_value = 0.0
                break
            s2, r, terminal = problem.transition(node.state, a)
            node.reward[a] = float(r)
            if terminal:
                node.terminal_child[a] = True
                leaf_value = 0.0
            else:
                v2, p2, g2 = problem.expand(s2)
                if len(v2) == 0:
                    node.terminal_child[a] = True
                    leaf_value = 0.0
                else:
                    child = _Node(s2, np.asarray(v2), np.array(p2, dtype=np.float64), np.asarray(g2))
                    node.children[a] = child
                    leaf_value = _value(child)
            break
        ret = leaf_value
        for node, i, a in reversed(path):
            node.n[i] += 1
            if backup == "max":
                child = node.children.get(a)
                tail = _value(child) if child is not None else 0.0
                node.q[a] = node.reward[a] + gamma * tail
            else:
                ret = node.reward[a] + gamma * ret
                node.q[a] += (ret - node.q[a]) / node.n[i]
    visits = np.zeros_like(root.q, dtype=np.int64)
    visits[root.valid] = root.n
    order = sorted(range(len(root.valid)),
                   key=lambda i: (-root.n[i], -root.q[root.valid[i]], int(root.valid[i])))
    action = int(root.valid[order[0]])
    return SearchResult(visits, root.q.copy(), action, float(root.q[action]))


# -- distillation -------------------------------------------------------------

def _softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max()
    e = np.exp(z)
    return e / e.sum()


def ce_distillation_loss(net_q: np.ndarray, search_q: np.ndarray, tau: float = 1.0) -> tuple:
    """Cross-entropy of softmax(net_q / tau) against softmax(search_q / tau).

    Returns (loss, d loss / d net_q).
    """
    net_q = np.asarray(net_q, dtype=np.float64)
    search_q = np.asarray(search_q, dtype=np.float64)
    if net_q.shape != search_q.shape:
        raise ValueError(f"length mismatch: {net_q.shape} vs {search_q.shape}")
    target = _softmax(search_q / tau)
    z = net_q / tau
    log_p = z - z.max() - math.log(np.exp(z - z.max()).sum())
    loss = float(-(target * log_p).sum())
    return loss, (np.exp(log_p) - target) / tau


def distillation_term(weight: float = 1.0, tau: float = 1.0):
    """Build the ``extra`` hook of ``q_learning_loss`` for a sampled batch.

    Transitions without stored search values contribute nothing.
    """
    def for_batch(batch):
        def extra(q: QOutput, b: Batch):
            g_node = np.zeros_like(q.node_q)
            g_edge = np.zeros_like(q.edge_q)
            loss = 0.0
            n = len(batch)
            for i, t in enumerate(batch):
                if t.search_q is None:
                    continue
                mask = t.mask if t.mask is not None else np.ones(t.search_q.shape, dtype=bool)
                l, g = ce_distillation_loss(flat_q(q, b, i)[mask], t.search_q[mask], tau)
                loss += weight * l / n
                full = np.zeros(mask.shape)
                full[mask] = weight * g / n
                _scatter_flat(g_node, g_edge, b, i, full)
            return loss, g_node, g_edge
        return extra
    return for_batch


def _scatter_flat(g_node, g_edge, b: Batch, i: int, flat: np.ndarray) -> None:
    n0, n1 = b.node_offsets[i], b.node_offsets[i + 1]
    e0, e1 = b.edge_offsets[i], b.edge_offsets[i + 1]
    k = (n1 - n0) * g_node.shape[1]
    g_node[n0:n1] += flat[:k].reshape(n1 - n0, g_node.shape[1])
    g_edge[e0:e1] += flat[k:].reshape(e1 - e0, g_edge.shape[1])


# -- the simulator as a search model ------------------------------------------

class EnvSearchProblem:
    """Search over a training environment that supports snapshot/restore."""

    def __init__(self, env, params: GraphNetParams):
        from .learning import greedy_q
        self.env = env
        self.params = params
        self._greedy_q = greedy_q

    def expand(self, state) -> tuple:
        self.env.restore(state)
        obs = self.env.observation()
        ga = self.env.features(obs)
        mask = self.env.mask(obs)
        q = self._greedy_q(self.params, ga)
        valid = np.flatnonzero(mask)
        cfg = self.params.config
        n_part = ga.n_nodes * cfg.node_out
        groups = np.where(valid < n_part, valid // max(cfg.node_out, 1),
                          ga.n_nodes + (valid - n_part) // max(cfg.edge_out, 1))
        return valid, q, groups

    def transition(self, state, action: int) -> tuple:
        self.env.restore(state)
        _, r, terminal = self.env.step(action)
        return self.env.snapshot(), r, terminal


def make_planner(budget: int = 10, c_uct: float = 2.0, gamma: float = 0.98, backup: str = "max"):
    """A ``learner_loop`` planner: search from the env's current state, then put it back."""
    def plan(env, obs, params, rng):
        snap = env.snapshot()
        try:
            res = mcts_search(EnvSearchProblem(env, params), snap, budget, c_uct, gamma, backup)
        finally:
            env.restore(snap)
        return res.action, res.q
    return plan
