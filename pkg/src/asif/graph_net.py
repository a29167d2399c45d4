"""Encode-process-decode graph network in plain numpy, with hand-written backprop.

Layout: node and edge encoders (Linear-ReLU-Linear), ``n_blocks`` residual
message-passing blocks, then linear per-node and per-edge Q heads. The edge
update reads ``[edge, source node, destination node]``; the node update reads
``[node, sum of incoming edge messages]``.

Parameters live in one flat float64 vector so that the optimizer, target
network copies and checkpoints all work on a single array.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .kinds import BLOCK_HEIGHT, LARGE, SCENE_SIZE, ObjectKind
from .scene_graph import SceneGraph

NODE_FEATURES = 11
EDGE_FEATURES = 2
LOW_LEVEL_EDGE_OUT = 30
CHECKPOINT_MAGIC = b"ASIFGN\x00\x01"


@dataclass(frozen=True)
class NetConfig:
    latent: int = 64
    hidden: int = 64
    n_blocks: int = 3
    node_out: int = 0
    edge_out: int = LOW_LEVEL_EDGE_OUT
    # Start the Q heads at exactly zero; random heads give the max in the TD
    # target a large initial spread to feed on.
    zero_heads: bool = True

    def _mlp(self, name: str, n_in: int) -> list:
        return [(f"{name}.w1", (n_in, self.hidden)), (f"{name}.b1", (self.hidden,)),
                (f"{name}.w2", (self.hidden, self.latent)), (f"{name}.b2", (self.latent,))]

    def layout(self) -> list:
        """(name, shape) for every parameter block, in flat-vector order."""
        L = self.latent
        out = self._mlp("enc_node", NODE_FEATURES) + self._mlp("enc_edge", EDGE_FEATURES)
        for i in range(self.n_blocks):
            out += self._mlp(f"proc{i}.edge", 3 * L) + self._mlp(f"proc{i}.node", 2 * L)
        out += [("dec_node.w", (L, self.node_out)), ("dec_node.b", (self.node_out,)),
                ("dec_edge.w", (L, self.edge_out)), ("dec_edge.b", (self.edge_out,))]
        return out

    @property
    def size(self) -> int:
        return sum(int(np.prod(s)) for _, s in self.layout())


@dataclass
class GraphNetParams:
    config: NetConfig
    flat: np.ndarray

    def views(self) -> dict:
        out, pos = {}, 0
        for name, shape in self.config.layout():
            n = int(np.prod(shape))
            out[name] = self.flat[pos:pos + n].reshape(shape)
            pos += n
        return out

    def copy(self) -> "GraphNetParams":
        return GraphNetParams(self.config, self.flat.copy())


def init_params(seed: int, config: Optional[NetConfig] = None) -> GraphNetParams:
    """Glorot-uniform weights, zero biases, deterministic in ``seed``.

    Decoder head weights are zero when ``config.zero_heads`` is set.
    """
    config = config or NetConfig()
    rng = np.random.default_rng(seed)
    p = GraphNetParams(config, np.zeros(config.size))
    for name, view in p.views().items():
        if config.zero_heads and name.startswith("dec_"):
            continue
        if view.ndim == 2 and view.size:
            limit = np.sqrt(6.0 / (view.shape[0] + view.shape[1]))
            view[...] = rng.uniform(-limit, limit, size=view.shape)
    return p


# -- features -----------------------------------------------------------------

@dataclass(frozen=True)
class GraphArrays:
    """Numeric view of one scene graph; edges follow ``enumerate_edges`` order."""

    ids: np.ndarray
    kinds: np.ndarray
    nodes: np.ndarray
    edges: np.ndarray
    src: np.ndarray
    dst: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.ids)

    @property
    def n_edges(self) -> int:
        return len(self.src)


def encode_features(g: SceneGraph) -> GraphArrays:
    nodes = np.zeros((len(g), NODE_FEATURES))
    for i, n in enumerate(g.nodes):
        nodes[i, :4] = (n.x / SCENE_SIZE, n.y / SCENE_SIZE, n.width / LARGE, n.height / BLOCK_HEIGHT)
        nodes[i, 4 + int(n.kind)] = 1.0
        nodes[i, 9] = float(n.active)
        nodes[i, 10] = float(n.sticky)
    src = np.array([g.index_of(u) for u, _ in g.edges], dtype=np.int64)
    dst = np.array([g.index_of(v) for _, v in g.edges], dtype=np.int64)
    xy = nodes[:, :2]
    edges = xy[dst] - xy[src] if len(src) else np.zeros((0, EDGE_FEATURES))
    return GraphArrays(
        ids=np.array([n.id for n in g.nodes], dtype=np.int64),
        kinds=np.array([int(n.kind) for n in g.nodes], dtype=np.int64),
        nodes=nodes, edges=np.asarray(edges, dtype=np.float64).reshape(-1, EDGE_FEATURES),
        src=src, dst=dst,
    )


def _segments(idx: np.ndarray, n: int) -> tuple:
    order = np.argsort(idx, kind="stable")
    counts = np.bincount(idx, minlength=n)
    starts = np.cumsum(counts) - counts
    return order, starts[counts > 0], counts > 0


def _segment_sum(values: np.ndarray, seg: tuple, n: int) -> np.ndarray:
    order, starts, nonempty = seg
    out = np.zeros((n, values.shape[1]))
    if len(order):
        out[nonempty] = np.add.reduceat(values[order], starts, axis=0)
    return out


@dataclass
class Batch:
    """Disjoint union of several graphs."""

    graphs: list
    nodes: np.ndarray
    edges: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    node_offsets: np.ndarray
    edge_offsets: np.ndarray
    src_seg: tuple = field(repr=False, default=())
    dst_seg: tuple = field(repr=False, default=())

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)


def batch_graphs(graphs: Sequence[GraphArrays]) -> Batch:
    graphs = list(graphs)
    n_counts = np.array([g.n_nodes for g in graphs], dtype=np.int64)
    e_counts = np.array([g.n_edges for g in graphs], dtype=np.int64)
    node_off = np.concatenate([[0], np.cumsum(n_counts)])
    edge_off = np.concatenate([[0], np.cumsum(e_counts)])
    src = np.concatenate([g.src + o for g, o in zip(graphs, node_off)]) if graphs else np.zeros(0, int)
    dst = np.concatenate([g.dst + o for g, o in zip(graphs, node_off)]) if graphs else np.zeros(0, int)
    n = int(node_off[-1])
    return Batch(
        graphs=graphs,
        nodes=np.concatenate([g.nodes for g in graphs]) if graphs else np.zeros((0, NODE_FEATURES)),
        edges=np.concatenate([g.edges for g in graphs]) if graphs else np.zeros((0, EDGE_FEATURES)),
        src=src, dst=dst, node_offsets=node_off, edge_offsets=edge_off,
        src_seg=_segments(src, n), dst_seg=_segments(dst, n),
    )


def as_batch(x) -> Batch:
    if isinstance(x, Batch):
        return x
    if isinstance(x, SceneGraph):
        x = encode_features(x)
    if isinstance(x, GraphArrays):
        return batch_graphs([x])
    return batch_graphs(list(x))


# -- forward / backward -------------------------------------------------------

@dataclass
class QOutput:
    node_q: np.ndarray
    edge_q: np.ndarray


def _relu(z):
    return np.maximum(z, 0.0)


def _mlp_forward(V, name, x):
    z = x @ V[name + ".w1"] + V[name + ".b1"]
    a = _relu(z)
    return a @ V[name + ".w2"] + V[name + ".b2"], (x, z, a)


def _mlp_backward(V, G, name, cache, g_out):
    x, z, a = cache
    G[name + ".w2"] += a.T @ g_out
    G[name + ".b2"] += g_out.sum(0)
    g_z = (g_out @ V[name + ".w2"].T) * (z > 0)
    G[name + ".w1"] += x.T @ g_z
    G[name + ".b1"] += g_z.sum(0)
    return g_z @ V[name + ".w1"].T


def _check(layer: int, *arrays):
    for a in arrays:
        if not np.isfinite(a).all():
            raise FloatingPointError(f"non-finite activations at layer {layer}")


def _forward(p: GraphNetParams, b: Batch, keep: bool):
    V = p.views()
    L = p.config.latent
    N = b.n_nodes
    n, c_node = _mlp_forward(V, "enc_node", b.nodes)
    e, c_edge = _mlp_forward(V, "enc_edge", b.edges)
    _check(0, n, e)
    caches = []
    for i in range(p.config.n_blocks):
        pe, pn = f"proc{i}.edge", f"proc{i}.node"
        W1 = V[pe + ".w1"]
        z1 = e @ W1[:L] + (n @ W1[L:2 * L])[b.src] + (n @ W1[2 * L:])[b.dst] + V[pe + ".b1"]
        a1 = _relu(z1)
        e_new = e + a1 @ V[pe + ".w2"] + V[pe + ".b2"]
        agg = _segment_sum(e_new, b.dst_seg, N)
        Wn = V[pn + ".w1"]
        z2 = n @ Wn[:L] + agg @ Wn[L:] + V[pn + ".b1"]
        a2 = _relu(z2)
        n_new = n + a2 @ V[pn + ".w2"] + V[pn + ".b2"]
        _check(i + 1, n_new, e_new)
        if keep:
            caches.append((n, e, z1, a1, agg, z2, a2))
        n, e = n_new, e_new
    node_q = n @ V["dec_node.w"] + V["dec_node.b"]
    edge_q = e @ V["dec_edge.w"] + V["dec_edge.b"]
    cache = (c_node, c_edge, caches, n, e) if keep else None
    return QOutput(node_q, edge_q), cache


def forward(p: GraphNetParams, g) -> QOutput:
    """Q-values for a SceneGraph, a GraphArrays, a list of them, or a Batch."""
    return _forward(p, as_batch(g), keep=False)[0]


def backward(p: GraphNetParams, b: Batch, cache, g_node_q: np.ndarray, g_edge_q: np.ndarray) -> np.ndarray:
    """Gradient of a scalar loss w.r.t. the flat parameters, given dLoss/dQ."""
    V = p.views()
    grad = GraphNetParams(p.config, np.zeros_like(p.flat))
    G = grad.views()
    L = p.config.latent
    N = b.n_nodes
    c_node, c_edge, caches, n_fin, e_fin = cache
    G["dec_node.w"] += n_fin.T @ g_node_q
    G["dec_node.b"] += g_node_q.sum(0)
    G["dec_edge.w"] += e_fin.T @ g_edge_q
    G["dec_edge.b"] += g_edge_q.sum(0)
    g_n = g_node_q @ V["dec_node.w"].T
    g_e = g_edge_q @ V["dec_edge.w"].T
    for i in reversed(range(p.config.n_blocks)):
        pe, pn = f"proc{i}.edge", f"proc{i}.node"
        n, e, z1, a1, agg, z2, a2 = caches[i]
        # node update
        Wn = V[pn + ".w1"]
        G[pn + ".w2"] += a2.T @ g_n
        G[pn + ".b2"] += g_n.sum(0)
        g_z2 = (g_n @ V[pn + ".w2"].T) * (z2 > 0)
        G[pn + ".w1"][:L] += n.T @ g_z2
        G[pn + ".w1"][L:] += agg.T @ g_z2
        G[pn + ".b1"] += g_z2.sum(0)
        g_n = g_n + g_z2 @ Wn[:L].T
        g_e = g_e + (g_z2 @ Wn[L:].T)[b.dst]
        # edge update
        W1 = V[pe + ".w1"]
        G[pe + ".w2"] += a1.T @ g_e
        G[pe + ".b2"] += g_e.sum(0)
        g_z1 = (g_e @ V[pe + ".w2"].T) * (z1 > 0)
        g_src = _segment_sum(g_z1, b.src_seg, N)
        g_dst = _segment_sum(g_z1, b.dst_seg, N)
        G[pe + ".w1"][:L] += e.T @ g_z1
        G[pe + ".w1"][L:2 * L] += n.T @ g_src
        G[pe + ".w1"][2 * L:] += n.T @ g_dst
        G[pe + ".b1"] += g_z1.sum(0)
        g_e = g_e + g_z1 @ W1[:L].T
        g_n = g_n + g_src @ W1[L:2 * L].T + g_dst @ W1[2 * L:].T
    _mlp_backward(V, G, "enc_node", c_node, g_n)
    _mlp_backward(V, G, "enc_edge", c_edge, g_e)
    return grad.flat


# -- flattened action space ---------------------------------------------------

def flat_q(q: QOutput, b: Batch, i: int) -> np.ndarray:
    """Graph ``i``'s Q-values as one vector: node part first, then edge part."""
    n0, n1 = b.node_offsets[i], b.node_offsets[i + 1]
    e0, e1 = b.edge_offsets[i], b.edge_offsets[i + 1]
    return np.concatenate([q.node_q[n0:n1].ravel(), q.edge_q[e0:e1].ravel()])


def action_count(ga: GraphArrays, config: NetConfig) -> int:
    return ga.n_nodes * config.node_out + ga.n_edges * config.edge_out


def _locate(b: Batch, i: int, action: int, config: NetConfig) -> tuple:
    """(is_node, row, column) of flat action ``action`` for graph ``i`` of the batch."""
    n_i = int(b.node_offsets[i + 1] - b.node_offsets[i])
    n_part = n_i * config.node_out
    if action < n_part:
        return True, int(b.node_offsets[i]) + action // config.node_out, action % config.node_out
    k = action - n_part
    return False, int(b.edge_offsets[i]) + k // config.edge_out, k % config.edge_out


def low_level_mask(ga: GraphArrays, config: NetConfig) -> np.ndarray:
    """Valid edge actions: palette block to any non-palette node, every offset and glue flag."""
    avail = ga.kinds == int(ObjectKind.AVAILABLE)
    edge_ok = avail[ga.src] & ~avail[ga.dst]
    node_part = np.zeros(ga.n_nodes * config.node_out, dtype=bool)
    return np.concatenate([node_part, np.repeat(edge_ok, config.edge_out)])


def controller_mask(ga: GraphArrays, config: NetConfig) -> np.ndarray:
    """Node actions on non-palette nodes; edge actions from palette to non-palette nodes."""
    avail = ga.kinds == int(ObjectKind.AVAILABLE)
    node_part = np.repeat(~avail, config.node_out)
    edge_part = np.repeat(avail[ga.src] & ~avail[ga.dst], config.edge_out)
    return np.concatenate([node_part, edge_part])


# -- losses -------------------------------------------------------------------

@dataclass(frozen=True)
class Transition:
    graph: GraphArrays
    action: int
    reward: float
    next_graph: Optional[GraphArrays]
    terminal: bool
    next_mask: Optional[np.ndarray] = None
    mask: Optional[np.ndarray] = None
    search_q: Optional[np.ndarray] = None


def td_targets(p_target: GraphNetParams, batch: Sequence[Transition], gamma: float,
               p_online: Optional[GraphNetParams] = None) -> np.ndarray:
    """r + gamma * max Q_target(s', .), or the double-Q variant when ``p_online`` is given
    (online network picks the action, target network scores it)."""
    y = np.array([t.reward for t in batch], dtype=np.float64)
    live = [i for i, t in enumerate(batch) if not t.terminal]
    if live:
        nb = batch_graphs([batch[i].next_graph for i in live])
        q = forward(p_target, nb)
        q_sel = forward(p_online, nb) if p_online is not None else q
        for j, i in enumerate(live):
            v = flat_q(q, nb, j)
            m = batch[i].next_mask
            if m is None:
                m = np.ones(v.shape, dtype=bool)
            a = int(np.argmax(np.where(m, flat_q(q_sel, nb, j), -np.inf)))
            y[i] += gamma * v[a]
    return y


def q_learning_loss(p: GraphNetParams, p_target: GraphNetParams, batch: Sequence[Transition],
                    gamma: float = 0.98, extra=None, double_q: bool = False) -> tuple:
    """Mean squared TD error and its gradient.

    ``extra`` is an optional callable ``(q_output, batch_struct) -> (loss, g_node_q, g_edge_q)``
    whose terms are added before backprop (used for search distillation).
    """
    b = batch_graphs([t.graph for t in batch])
    q, cache = _forward(p, b, keep=True)
    y = td_targets(p_target, batch, gamma, p if double_q else None)
    g_node = np.zeros_like(q.node_q)
    g_edge = np.zeros_like(q.edge_q)
    loss = 0.0
    B = len(batch)
    for i, t in enumerate(batch):
        if not 0 <= t.action < action_count(t.graph, p.config):
            raise IndexError(f"action {t.action} out of range for transition {i}")
        is_node, row, col = _locate(b, i, t.action, p.config)
        qa = (q.node_q if is_node else q.edge_q)[row, col]
        err = qa - y[i]
        loss += err * err / B
        (g_node if is_node else g_edge)[row, col] += 2.0 * err / B
    if extra is not None:
        l2, gn2, ge2 = extra(q, b)
        loss += l2
        g_node += gn2
        g_edge += ge2
    return float(loss), backward(p, b, cache, g_node, g_edge)


# -- optimizer ----------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(p: GraphNetParams, grads: np.ndarray, state: AdamState, lr: float = 2e-4,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> tuple:
    t = state.t + 1
    m = beta1 * state.m + (1 - beta1) * grads
    v = beta2 * state.v + (1 - beta2) * grads * grads
    m_hat = m / (1 - beta1 ** t)
    v_hat = v / (1 - beta2 ** t)
    flat = p.flat - lr * m_hat / (np.sqrt(v_hat) + eps)
    return GraphNetParams(p.config, flat), AdamState(m, v, t)


# -- checkpoints --------------------------------------------------------------

def save_checkpoint(path, p: GraphNetParams) -> None:
    header = json.dumps({"version": 1, "config": p.config.__dict__}, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(np.asarray(p.flat, dtype="<f8").tobytes())


def load_checkpoint(path) -> GraphNetParams:
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path}: not a graph-net checkpoint")
    pos = len(CHECKPOINT_MAGIC)
    (n,) = struct.unpack("<I", data[pos:pos + 4])
    header = json.loads(data[pos + 4:pos + 4 + n])
    if header.get("version") != 1:
        raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
    config = NetConfig(**header["config"])
    flat = np.frombuffer(data[pos + 4 + n:], dtype="<f8").astype(np.float64)
    if flat.size != config.size:
        raise ValueError(f"{path}: expected {config.size} parameters, found {flat.size}")
    return GraphNetParams(config, flat)


def params_digest(p: GraphNetParams) -> str:
    import hashlib
    return hashlib.sha256(np.asarray(p.flat, dtype="<f8").tobytes()).hexdigest()
