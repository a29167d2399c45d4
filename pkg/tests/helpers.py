"""Random scene fixtures shared by the test modules."""

import numpy as np

from asif.kinds import BLOCK_HEIGHT, BLOCK_WIDTHS, ObjectKind
from asif.scene_graph import SceneGraph, SceneNode

SCENE_KINDS = (ObjectKind.OBSTACLE, ObjectKind.TARGET, ObjectKind.PLACED)


def random_graph(rng: np.random.Generator, n_scene: int = None, n_palette: int = 3,
                 continuous_y: bool = True) -> SceneGraph:
    """Floor, a small palette and ``n_scene`` scene objects at random poses."""
    if n_scene is None:
        n_scene = int(rng.integers(1, 9))
    nodes = [SceneNode(0, ObjectKind.FLOOR, 8.0, -0.35, 16.0, 0.7)]
    for i in range(n_palette):
        w = BLOCK_WIDTHS[i % 3]
        nodes.append(SceneNode(1 + i, ObjectKind.AVAILABLE, 1.0 + 2 * i, -1.4, w, BLOCK_HEIGHT))
    active = int(rng.integers(-1, n_scene))
    for j in range(n_scene):
        kind = SCENE_KINDS[int(rng.integers(3))]
        y = float(rng.uniform(0.35, 7.0)) if continuous_y else 0.35 + 0.7 * int(rng.integers(0, 10))
        h = 0.5 if kind == ObjectKind.OBSTACLE else BLOCK_HEIGHT
        nodes.append(SceneNode(
            10 + j, kind, float(rng.uniform(0.5, 15.5)), y, BLOCK_WIDTHS[int(rng.integers(3))], h,
            active=(j == active), sticky=bool(kind == ObjectKind.PLACED and rng.random() < 0.3),
        ))
    order = rng.permutation(len(nodes))
    return SceneGraph(tuple(nodes[i] for i in order))


def scene_ids(g: SceneGraph) -> list:
    return [n.id for n in g.nodes if n.is_scene_object]


def five_node_graph(seed: int = 0) -> SceneGraph:
    """Floor, two palette blocks and two scene objects."""
    return random_graph(np.random.default_rng(seed), n_scene=2, n_palette=2)


def relative_errors(f, flat: np.ndarray, grad: np.ndarray, idx, h: float = 1e-6) -> np.ndarray:
    """Central-difference check of ``grad`` at coordinates ``idx`` of ``flat``.

    Denominators are floored at 1e-7 so coordinates with a vanishing
    gradient are judged on absolute error instead.
    """
    out = []
    for i in idx:
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        num = (up - down) / (2 * h)
        out.append(abs(num - grad[i]) / max(abs(num) + abs(grad[i]), 1e-7))
    return np.array(out)


def sampled_coordinates(params, rng: np.random.Generator, per_block: int = 100) -> dict:
    """Up to ``per_block`` flat indices drawn from every parameter block."""
    out, pos = {}, 0
    for name, shape in params.config.layout():
        n = int(np.prod(shape))
        if n:
            k = min(per_block, n)
            out[name] = pos + rng.choice(n, size=k, replace=False)
        pos += n
    return out


# -- toy environments for the learner ------------------------------------------

def _toy_graph(x: float, n_targets: int = 1) -> SceneGraph:
    nodes = [SceneNode(0, ObjectKind.FLOOR, 8.0, -0.35, 16.0, 0.7),
             SceneNode(1, ObjectKind.AVAILABLE, 1.0, -1.4, 0.7, 0.7)]
    for k in range(n_targets):
        nodes.append(SceneNode(2 + k, ObjectKind.TARGET, x + 3 * k, 0.35, 0.7, 0.7))
    return SceneGraph(tuple(nodes))


class TwoStateEnv:
    """Deterministic two-state episodic MDP over fixed scene graphs.

    In A, action 0 moves to B with reward 0 and action 1 ends with 0.5.
    In B, action 0 ends with 1 and action 1 ends with 0.
    With discount g the optimal values are Q(A) = (g, 0.5), Q(B) = (1, 0).
    """

    REWARD = {("A", 0): 0.0, ("A", 1): 0.5, ("B", 0): 1.0, ("B", 1): 0.0}

    def __init__(self, edge_out: int = 2):
        from asif.graph_net import encode_features
        self.graphs = {"A": encode_features(_toy_graph(4.0)), "B": encode_features(_toy_graph(12.0))}
        self.edge_out = edge_out
        # edge (1, 2) is the fourth of the six ordered pairs
        self.actions = [3 * edge_out, 3 * edge_out + 1]
        self.state = "A"

    @staticmethod
    def q_star(gamma: float) -> dict:
        return {"A": np.array([gamma, 0.5]), "B": np.array([1.0, 0.0])}

    def reset(self, episode):
        self.state = "A"
        return self.state

    def features(self, obs):
        return self.graphs[obs]

    def mask(self, obs):
        m = np.zeros(6 * self.edge_out, dtype=bool)
        m[self.actions] = True
        return m

    def step(self, action):
        k = self.actions.index(action)
        r = self.REWARD[(self.state, k)]
        if self.state == "A" and k == 0:
            self.state = "B"
            return "B", r, False
        return None, r, True

    def reward_bound(self):
        return 1.0


class BanditEnv:
    """One-step choice between two target nodes paying different rewards."""

    def __init__(self, rewards=(0.3, 0.7)):
        from asif.graph_net import encode_features
        self.graph = _toy_graph(4.0, n_targets=2)
        self.ga = encode_features(self.graph)
        self.rewards = rewards

    def reset(self, episode):
        return self.graph

    def features(self, obs):
        return self.ga

    def mask(self, obs):
        return np.array([False, False, True, True])

    def step(self, action):
        return None, self.rewards[action - 2], True

    def reward_bound(self):
        return max(self.rewards)


# -- toy search trees ------------------------------------------------------------

class ToyTree:
    """Random deterministic tree; states are tuples of the actions taken so far.

    Every node has 2 or 3 actions, rewards in [0, 1], and leaves at ``depth``.
    Actions are split into two groups (first half, second half) for the
    two-stage selection. ``prior`` is either the exact Q* or all zeros.
    """

    def __init__(self, seed: int, depth: int, gamma: float = 0.98, exact_prior: bool = False):
        self.rng = np.random.default_rng(seed)
        self.depth, self.gamma, self.exact_prior = depth, gamma, exact_prior
        self.children, self.rewards = {}, {}
        self._build(())

    def _build(self, s):
        if len(s) == self.depth:
            return
        k = int(self.rng.integers(2, 4))
        self.children[s] = k
        for a in range(k):
            self.rewards[s + (a,)] = float(self.rng.random())
            self._build(s + (a,))

    def q_star(self, s) -> np.ndarray:
        """Brute force over every action sequence below ``s``."""
        out = []
        for a in range(self.children[s]):
            s2 = s + (a,)
            tail = self.q_star(s2).max() if s2 in self.children else 0.0
            out.append(self.rewards[s2] + self.gamma * tail)
        return np.array(out)

    def expand(self, s):
        if s not in self.children:
            return np.zeros(0, int), np.zeros(0), np.zeros(0, int)
        k = self.children[s]
        prior = self.q_star(s) if self.exact_prior else np.zeros(k)
        return np.arange(k), prior, np.arange(k) * 2 // k

    def transition(self, s, a):
        s2 = s + (a,)
        return s2, self.rewards[s2], s2 not in self.children

    @property
    def size(self) -> int:
        return len(self.rewards)
