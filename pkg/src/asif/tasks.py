"""Procedural scenes, rewards and episode stepping for the four task families.

Layout conventions shared by every generator:

* layers are 0.7 apart; a block resting on layer ``k`` has its bottom at
  ``k * 0.7``;
* obstacles are 0.5 tall and centred on their layer, leaving 0.1 of
  clearance above and below so towers of blocks can pass beside them
  and bridges can rest just above them;
* the palette is three small, three medium and one large block.
"""

from __future__ import annotations

import dataclasses
import functools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .kinds import (
    BLOCK_HEIGHT, BLOCK_WIDTHS, EPS, LARGE, MAX_STEPS, N_OFFSETS, SMALL, ObjectKind, TaskKind,
)
from .physics import (
    Body, World, covered_length, drop_block, h_overlap, overlap_fraction, place_relative,
    target_connected, touches, world_to_graph,
)
from .scene_graph import LowLevelAction, SceneGraph, add_target, offset_value

OBSTACLE_HEIGHT = 0.5
PALETTE_DEPTH = 1.4  # palette centres sit below the floor slab
OBSTACLE_WIDTHS = (0.7, 1.4, 2.1)
PALETTE_WIDTHS = (SMALL, SMALL, SMALL, 2.1, 2.1, 2.1, LARGE)
COVER_THRESHOLD = 0.99
SATISFY_OVERLAP = 0.9
COVER_SCALE = 1.0  # reward per world-unit of newly covered obstacle
GLUE_COST = {"edit": -2.0, "add": -2.0, "delete": -0.5}
ADD_REWARD_BOUND = 4.5
DELETE_REWARD_BOUND = 15.0

_TASK_CODES = {kind: i for i, kind in enumerate(TaskKind)}


class GenerationError(RuntimeError):
    pass


class EpisodeOver(RuntimeError):
    """Raised when stepping an episode that has already terminated."""


@dataclass(frozen=True)
class SceneConfig:
    """Size knobs of the scene distributions."""

    width: float = 16.0
    edit_obstacles: tuple = (1, 3)
    edit_layers: tuple = (1, 5)
    connect_targets: tuple = (1, 3)
    connect_layers: tuple = (0, 5)
    delete_pretrain_targets: tuple = (3, 6)
    delete_pretrain_layers: int = 3
    delete_pretrain_obstacles: tuple = (0, 3)
    delete_transfer_targets: tuple = (10, 20)
    delete_transfer_layers: int = 10
    delete_transfer_obstacles: tuple = (0, 6)
    add_obstacles: tuple = (1, 3)
    add_layers: tuple = (1, 5)
    max_retries: int = 2000

    @classmethod
    def reduced(cls) -> "SceneConfig":
        """Fewer, lower objects on the full-width floor."""
        return cls(
            edit_obstacles=(1, 2), edit_layers=(1, 2), connect_targets=(1, 2),
            connect_layers=(0, 2), delete_transfer_targets=(6, 12), delete_transfer_layers=6,
            delete_transfer_obstacles=(0, 3), add_obstacles=(1, 2), add_layers=(1, 2),
        )

    @classmethod
    def compact(cls) -> "SceneConfig":
        """Half-width scenes with a single goal object, sized for desk-scale learning."""
        return cls(
            width=8.0, edit_obstacles=(1, 1), edit_layers=(1, 1), connect_targets=(1, 1),
            connect_layers=(0, 1), delete_pretrain_targets=(3, 4), delete_pretrain_layers=2,
            delete_pretrain_obstacles=(0, 1), delete_transfer_targets=(4, 6),
            delete_transfer_layers=3, delete_transfer_obstacles=(0, 1),
            add_obstacles=(1, 1), add_layers=(1, 1),
        )


@dataclass(frozen=True)
class RewardBreakdown:
    task_reward: float = 0.0
    sticky_cost: float = 0.0

    @property
    def total(self) -> float:
        return self.task_reward + self.sticky_cost


@dataclass(frozen=True)
class EpisodeState:
    world: World
    task: TaskKind
    subtask: TaskKind
    max_reward: float
    steps_taken: int = 0
    terminal: bool = False
    cumulative_reward: float = 0.0
    seed: Optional[int] = None

    @functools.cached_property
    def graph(self) -> SceneGraph:
        return world_to_graph(self.world)


# -- geometry helpers ---------------------------------------------------------

def obstacle_body(bid: int, x: float, layer: int, width: float) -> Body:
    return Body(bid, x, layer * BLOCK_HEIGHT + BLOCK_HEIGHT / 2, width, OBSTACLE_HEIGHT)


def block_body(bid: int, x: float, layer: int, width: float) -> Body:
    return Body(bid, x, layer * BLOCK_HEIGHT + BLOCK_HEIGHT / 2, width, BLOCK_HEIGHT)


def make_palette(width: float) -> tuple:
    bodies, x = [], 0.2
    y = -PALETTE_DEPTH
    for i, w in enumerate(PALETTE_WIDTHS):
        bodies.append(Body(1 + i, x + w / 2, y, w, BLOCK_HEIGHT))
        x += w + 0.2
    return tuple(bodies)


def cover_footprint(width: float) -> float:
    """Half-width of the region a tower-and-bridge cover of an obstacle occupies."""
    return max(LARGE / 2, width / 2 + 1.5 * SMALL)


def tower_window(ob: Body, side: int) -> tuple:
    """Centres at which a small tower block contains the side-target centre without touching ``ob``."""
    if side < 0:
        inner = ob.left - SMALL / 2
        return (inner - SMALL / 2, inner)
    inner = ob.right + SMALL / 2
    return (inner, inner + SMALL / 2)


def small_block_positions(anchors) -> list:
    """Every x a small palette block can be dropped at, relative to the given anchors."""
    xs = []
    for a in anchors:
        span = a.width + SMALL
        xs.extend(a.x + offset_value(j, span, N_OFFSETS) for j in range(N_OFFSETS))
    return xs


def towers_reachable(world: World, ob: Body) -> bool:
    anchors = [world.floor, *world.obstacles, *world.targets]
    xs = small_block_positions(anchors)
    for side in (-1, 1):
        lo, hi = tower_window(ob, side)
        # open at the obstacle-facing end so the tower never touches it
        ok = [x for x in xs if (lo <= x < hi - 1e-6 if side < 0 else lo + 1e-6 < x <= hi)]
        if not ok:
            return False
    return True


# -- generators ---------------------------------------------------------------

def _rng(task: TaskKind, seed: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, _TASK_CODES[task]])


def _int(rng, bounds) -> int:
    lo, hi = bounds
    return int(rng.integers(lo, hi + 1))


def _place_spread_obstacles(rng, cfg: SceneConfig, count: int, layers, distinct: bool):
    """Obstacles whose cover footprints do not overlap, left to right by id."""
    chosen_layers = []
    spans = []
    for _ in range(count):
        for _ in range(200):
            w = float(rng.choice(OBSTACLE_WIDTHS))
            f = cover_footprint(w)
            lo, hi = f + 0.2, cfg.width - f - 0.2
            if hi < lo:
                continue
            x = round(float(rng.uniform(lo, hi)), 2)
            if any(abs(x - sx) < f + sf + 0.2 for sx, sf, _ in spans):
                continue
            layer = _int(rng, layers)
            if distinct and layer in chosen_layers and len(chosen_layers) < layers[1] - layers[0] + 1:
                continue
            spans.append((x, f, w))
            chosen_layers.append(layer)
            break
        else:
            raise GenerationError("no room for obstacle")
    order = sorted(range(len(spans)), key=lambda i: spans[i][0])
    return [(spans[i][0], spans[i][2], chosen_layers[i]) for i in order]


def _edit_scene(rng, cfg: SceneConfig, task: TaskKind) -> World:
    palette = make_palette(cfg.width)
    n = _int(rng, cfg.edit_obstacles)
    specs = _place_spread_obstacles(rng, cfg, n, cfg.edit_layers, distinct=False)
    obstacles, targets = [], []
    bid = 8
    for x, w, layer in specs:
        obstacles.append(obstacle_body(bid, x, layer, w))
        bid += 1
    for ob, (x, w, layer) in zip(obstacles, specs):
        tw = float(rng.choice(BLOCK_WIDTHS))
        targets.append(block_body(bid, x, layer + 2, tw))
        bid += 1
    world = World(width=cfg.width, obstacles=tuple(obstacles), targets=tuple(targets),
                  palette=palette, next_id=bid)
    if not all(towers_reachable(world, ob) for ob in obstacles):
        raise GenerationError("cover towers not reachable")
    if task == TaskKind.EDIT_PRETRAIN_COVER:
        active = obstacles[int(rng.integers(len(obstacles)))].id
    else:
        active = targets[int(rng.integers(len(targets)))].id
    return dataclasses.replace(world, active_id=active)


def _connect_scene(rng, cfg: SceneConfig) -> World:
    palette = make_palette(cfg.width)
    n = _int(rng, cfg.connect_targets)
    targets = []
    bid = 8
    for _ in range(n):
        for _ in range(200):
            w = float(rng.choice(BLOCK_WIDTHS))
            x = round(float(rng.uniform(w / 2 + 0.2, cfg.width - w / 2 - 0.2)), 2)
            cand = block_body(bid, x, _int(rng, cfg.connect_layers), w)
            if all(h_overlap(cand, t) <= -0.2 for t in targets):
                targets.append(cand)
                bid += 1
                break
        else:
            raise GenerationError("no room for target")
    active = targets[int(rng.integers(len(targets)))].id
    return World(width=cfg.width, targets=tuple(targets), palette=palette,
                 active_id=active, next_id=bid)


def _delete_scene(rng, cfg: SceneConfig, transfer: bool) -> World:
    if transfer:
        n_targets = _int(rng, cfg.delete_transfer_targets)
        max_layers = cfg.delete_transfer_layers
        n_obs = _int(rng, cfg.delete_transfer_obstacles)
    else:
        n_targets = _int(rng, cfg.delete_pretrain_targets)
        max_layers = cfg.delete_pretrain_layers
        n_obs = _int(rng, cfg.delete_pretrain_obstacles)

    # silhouette region: a contiguous span, the rest of the floor left to obstacles
    span = cfg.width * (0.6 if n_obs else 0.9)
    x0 = round(float(rng.uniform(0.3, cfg.width - span - 0.3)), 2)
    x1 = x0 + span
    sil = World(width=cfg.width, next_id=8)
    n_layers = _int(rng, (min(max_layers, math.ceil(n_targets / 4)), max_layers))
    below = []
    for layer in range(n_layers):
        # lower rows take more blocks so upper rows have something to stand on
        quota = max(1, math.ceil((n_targets - len(sil.placed)) * 2 / (n_layers - layer + 1)))
        row = []
        for _ in range(80):
            if len(row) >= quota or len(sil.placed) >= n_targets:
                break
            w = float(rng.choice(BLOCK_WIDTHS))
            if below:
                base = below[int(rng.integers(len(below)))]
                x = base.x + round(float(rng.uniform(-base.width / 2, base.width / 2)) / 0.35) * 0.35
            else:
                x = x0 + round(float(rng.uniform(w / 2, span - w / 2)) / 0.35) * 0.35
            if x - w / 2 < x0 - EPS or x + w / 2 > x1 + EPS:
                continue
            new, res = drop_block(sil, w, x)
            if not res.rested:
                continue
            block = new.placed[-1]
            # must rest on the row below, not fall through or overlap anything
            if abs(block.bottom - layer * BLOCK_HEIGHT) > 1e-6:
                continue
            if any(overlap_fraction(block, b) > 1e-6 for b in sil.placed):
                continue
            sil = new
            row.append(block)
        if not row:
            break
        below = row
    if len(sil.placed) < n_targets:
        raise GenerationError("silhouette too small")
    targets = [dataclasses.replace(b, sticky=False) for b in sil.placed]

    obstacles = []
    bid = 8 + len(targets)
    targets = [dataclasses.replace(t, id=8 + i) for i, t in enumerate(targets)]
    for _ in range(n_obs):
        for _ in range(200):
            w = float(rng.choice(OBSTACLE_WIDTHS))
            x = round(float(rng.uniform(w / 2 + 0.2, cfg.width - w / 2 - 0.2)), 2)
            cand = obstacle_body(bid, x, int(rng.integers(max_layers)), w)
            # never in a target's drop column; keep clear of other obstacles
            if any(h_overlap(cand, t) > -0.1 for t in targets):
                continue
            if any(h_overlap(cand, o) > -0.1 and abs(cand.y - o.y) < 1.0 for o in obstacles):
                continue
            obstacles.append(cand)
            bid += 1
            break
        else:
            raise GenerationError("no room for obstacle")
    return World(width=cfg.width, obstacles=tuple(obstacles), targets=tuple(targets),
                 palette=make_palette(cfg.width), next_id=bid)


def _add_scene(rng, cfg: SceneConfig, pretrain: bool) -> World:
    palette = make_palette(cfg.width)
    for _ in range(200):
        n = _int(rng, cfg.add_obstacles)
        specs = _place_spread_obstacles(rng, cfg, n, cfg.add_layers, distinct=True)
        if sum(w for _, w, _ in specs) <= ADD_REWARD_BOUND + EPS:
            break
    else:
        raise GenerationError("obstacle widths exceed the addition bound")
    obstacles = tuple(obstacle_body(8 + i, x, layer, w) for i, (x, w, layer) in enumerate(specs))
    world = World(width=cfg.width, obstacles=obstacles, palette=palette, next_id=8 + len(specs))
    if not pretrain:
        return world
    g = world_to_graph(world)
    ob = obstacles[int(rng.integers(len(obstacles)))]
    u = palette[int(rng.integers(len(palette)))]
    g2 = add_target(g, (u.id, ob.id), int(rng.choice([0, 3, 6])))
    t = g2.nodes[-1]
    target = Body(t.id, t.x, t.y, t.width, t.height)
    if target.left < 0 or target.right > cfg.width:
        raise GenerationError("target outside the scene")
    return dataclasses.replace(world, targets=(target,), active_id=target.id, next_id=t.id + 1)


_PRETRAIN_MIX = (
    TaskKind.EDIT_PRETRAIN_CONNECT, TaskKind.EDIT_PRETRAIN_COVER,
    TaskKind.DELETE_PRETRAIN, TaskKind.ADD_PRETRAIN,
)
_TRANSFER_MIX = (TaskKind.EDIT_TRANSFER, TaskKind.DELETE_TRANSFER, TaskKind.ADD_TRANSFER)


def combined_subtask(task: TaskKind, seed: int) -> TaskKind:
    """Sub-task drawn uniformly over families for a combined episode."""
    rng = _rng(task, seed)
    if task == TaskKind.COMBINED_TRANSFER:
        return _TRANSFER_MIX[int(rng.integers(3))]
    family = int(rng.integers(3))
    if family == 0:
        return _PRETRAIN_MIX[int(rng.integers(2))]
    return _PRETRAIN_MIX[family + 1]


def generate_world(task: TaskKind, seed: int, cfg: Optional[SceneConfig] = None) -> tuple:
    """Deterministic scene for ``(task, seed)``; returns ``(world, subtask)``."""
    cfg = cfg or SceneConfig()
    sub = combined_subtask(task, seed) if task.is_combined else task
    rng = _rng(sub, seed)
    for _ in range(cfg.max_retries):
        try:
            if sub in (TaskKind.EDIT_TRANSFER, TaskKind.EDIT_PRETRAIN_COVER):
                return _edit_scene(rng, cfg, sub), sub
            if sub == TaskKind.EDIT_PRETRAIN_CONNECT:
                return _connect_scene(rng, cfg), sub
            if sub.family == "delete":
                return _delete_scene(rng, cfg, sub == TaskKind.DELETE_TRANSFER), sub
            if sub.family == "add":
                return _add_scene(rng, cfg, sub == TaskKind.ADD_PRETRAIN), sub
        except GenerationError:
            continue
    raise GenerationError(f"could not generate {sub.value} scene for seed {seed}")


def generate_scene(task: TaskKind, seed: int, cfg: Optional[SceneConfig] = None) -> tuple:
    """``(world, scene graph)`` for ``(task, seed)``."""
    world, _ = generate_world(task, seed, cfg)
    return world, world_to_graph(world)


# -- rewards ------------------------------------------------------------------

def _glue(family: str, a: LowLevelAction) -> float:
    return GLUE_COST[family] if a.sticky else 0.0


def satisfied_targets(w: World) -> set:
    """Targets overlapped at least 90% by a placed block of the same width."""
    out = set()
    for t in w.targets:
        for b in w.placed:
            if abs(b.width - t.width) <= EPS and overlap_fraction(b, t) >= SATISFY_OVERLAP:
                out.add(t.id)
                break
    return out


def reward_deletion(w_before: World, w_after: World, a: LowLevelAction) -> RewardBreakdown:
    newly = satisfied_targets(w_after) - satisfied_targets(w_before)
    return RewardBreakdown(float(len(newly)), _glue("delete", a))


def total_covered(w: World) -> float:
    return sum(covered_length(ob, w.placed) for ob in w.obstacles)


def all_covered(w: World) -> bool:
    return all(covered_length(ob, w.placed) >= COVER_THRESHOLD * ob.width for ob in w.obstacles)


def reward_addition(w_before: World, w_after: World, a: LowLevelAction) -> RewardBreakdown:
    gain = total_covered(w_after) - total_covered(w_before)
    return RewardBreakdown(COVER_SCALE * gain, _glue("add", a))


def reward_editing(w_before: World, w_after: World, s: EpisodeState,
                   a: LowLevelAction) -> RewardBreakdown:
    active = w_after.body(w_after.active_id)
    if s.subtask == TaskKind.EDIT_PRETRAIN_COVER:
        gain = covered_length(active, w_after.placed) - covered_length(active, w_before.placed)
        return RewardBreakdown(COVER_SCALE * gain, _glue("edit", a))
    newly = target_connected(active, w_after) and not target_connected(active, w_before)
    return RewardBreakdown(1.0 if newly else 0.0, _glue("edit", a))


def reward_connect(w_before: World, w_after: World, a: LowLevelAction, family: str) -> RewardBreakdown:
    active = w_after.body(w_after.active_id)
    newly = target_connected(active, w_after) and not target_connected(active, w_before)
    return RewardBreakdown(1.0 if newly else 0.0, _glue(family, a))


def task_complete(s: EpisodeState, w: World) -> bool:
    sub = s.subtask
    if sub in (TaskKind.EDIT_PRETRAIN_CONNECT, TaskKind.EDIT_TRANSFER, TaskKind.ADD_PRETRAIN):
        return target_connected(w.body(w.active_id), w)
    if sub == TaskKind.EDIT_PRETRAIN_COVER:
        ob = w.body(w.active_id)
        return covered_length(ob, w.placed) >= COVER_THRESHOLD * ob.width
    if sub.family == "add":
        return all_covered(w)
    return len(satisfied_targets(w)) == len(w.targets)


def max_reward(task: TaskKind, world: World) -> float:
    """Per-scene analytic upper bound on the episode reward."""
    if task in (TaskKind.EDIT_PRETRAIN_CONNECT, TaskKind.EDIT_TRANSFER, TaskKind.ADD_PRETRAIN):
        return 1.0
    if task == TaskKind.EDIT_PRETRAIN_COVER:
        return COVER_SCALE * world.body(world.active_id).width
    if task.family == "delete":
        # one block per action, at most one target per block
        return float(min(len(world.targets), MAX_STEPS))
    if task == TaskKind.ADD_TRANSFER:
        return COVER_SCALE * sum(ob.width for ob in world.obstacles)
    raise ValueError(f"no reward bound for {task.value}; pass the episode sub-task")


# -- episodes -----------------------------------------------------------------

def reset(task: TaskKind, seed: int, cfg: Optional[SceneConfig] = None) -> EpisodeState:
    world, sub = generate_world(task, seed, cfg)
    return EpisodeState(world=world, task=task, subtask=sub, max_reward=max_reward(sub, world),
                        seed=seed)


def step(s: EpisodeState, a: LowLevelAction, g: Optional[SceneGraph] = None) -> tuple:
    """Apply a low-level action; ``g`` is the (possibly edited) graph the action refers to."""
    if s.terminal:
        raise EpisodeOver("episode already terminated")
    g = s.graph if g is None else g
    before = s.world
    after, res = place_relative(before, a, g)
    steps = s.steps_taken + 1
    if res.obstacle_contact:
        reward = RewardBreakdown(0.0, 0.0)
        done = True
    else:
        sub = s.subtask
        if sub.family == "delete":
            reward = reward_deletion(before, after, a)
        elif sub == TaskKind.ADD_TRANSFER:
            reward = reward_addition(before, after, a)
        elif sub == TaskKind.ADD_PRETRAIN:
            reward = reward_connect(before, after, a, "add")
        else:
            reward = reward_editing(before, after, s, a)
        done = task_complete(s, after) or steps >= MAX_STEPS
    new = EpisodeState(
        world=after, task=s.task, subtask=s.subtask, max_reward=s.max_reward,
        steps_taken=steps, terminal=done, cumulative_reward=s.cumulative_reward + reward.total,
        seed=s.seed,
    )
    return new, reward


def infer_subtask(g: SceneGraph, pretrain: bool = False) -> TaskKind:
    """Recover the combined-episode sub-task from node kinds alone."""
    active = g.active
    obstacles = g.of_kind(ObjectKind.OBSTACLE)
    targets = g.of_kind(ObjectKind.TARGET)
    if pretrain:
        if active is None:
            return TaskKind.DELETE_PRETRAIN
        if active.kind == ObjectKind.OBSTACLE:
            return TaskKind.EDIT_PRETRAIN_COVER
        return TaskKind.ADD_PRETRAIN if obstacles else TaskKind.EDIT_PRETRAIN_CONNECT
    if active is not None:
        return TaskKind.EDIT_TRANSFER
    return TaskKind.DELETE_TRANSFER if targets else TaskKind.ADD_TRANSFER


def cover_tower_blocks(ob) -> int:
    """Small blocks per side tower so a bridge clears the obstacle's top."""
    return int(math.ceil(ob.top / BLOCK_HEIGHT - EPS))


def touches_obstacle(block, w: World) -> bool:
    return any(touches(block, ob) for ob in w.obstacles)
