"""Hand-written controllers for the editing, deletion and addition tasks."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

from .kinds import EPS, LARGE, MAX_STEPS, SMALL, ObjectKind
from .physics import covered_length, target_connected, world_from_graph
from .scene_graph import AddTarget, DeleteBand, EditActive, NoOp, SceneGraph, add_target
from .tasks import COVER_THRESHOLD, cover_tower_blocks, satisfied_targets

LEFT, RIGHT, TOP = "left", "right", "top"
ADD_SIDE_OFFSETS = {LEFT: 0, RIGHT: 6, TOP: 3}


@dataclass(frozen=True)
class HeuristicState:
    """Progress marker; start every episode from ``HeuristicState()``."""

    steps: int = 0
    goal: Optional[int] = None
    obstacle: Optional[int] = None
    cover_steps: int = 0
    obstacle_index: int = 0
    side: str = LEFT


def edit_cover_steps(ob, cap: int = MAX_STEPS - 1) -> int:
    """Fixed number of steps the editing heuristic keeps an obstacle active.

    Two side towers plus the large blocks needed to bridge the obstacle.
    """
    return min(cap, 2 * cover_tower_blocks(ob) + math.ceil(ob.width / LARGE))


def obstacle_below(g: SceneGraph, target) -> Optional[object]:
    below = [
        n for n in g.of_kind(ObjectKind.OBSTACLE)
        if min(n.right, target.right) - max(n.left, target.left) > 0 and n.top <= target.bottom + EPS
    ]
    return max(below, key=lambda n: (n.top, -n.id), default=None)


def heuristic_edit(g: SceneGraph, h: HeuristicState, cover_steps=None) -> tuple:
    """Activate the obstacle under the goal target for a fixed number of steps, then the target."""
    if h.goal is None:
        goal = g.active
        if goal is None:
            return NoOp(), h
        ob = obstacle_below(g, goal)
        k = 0 if ob is None else (cover_steps if cover_steps is not None else edit_cover_steps(ob))
        h = dataclasses.replace(h, goal=goal.id, obstacle=None if ob is None else ob.id, cover_steps=k)
    node = h.obstacle if h.steps < h.cover_steps else h.goal
    return EditActive(node), dataclasses.replace(h, steps=h.steps + 1)


def unsatisfied_targets(g: SceneGraph) -> list:
    done = satisfied_targets(world_from_graph(g))
    return [t for t in g.of_kind(ObjectKind.TARGET) if t.id not in done]


def heuristic_delete(g: SceneGraph) -> object:
    """Band around the lowest target not yet filled (ties: smaller x, then id)."""
    todo = unsatisfied_targets(g)
    if not todo:
        return NoOp()
    lowest = min(todo, key=lambda n: (n.y, n.x, n.id))
    return DeleteBand(lowest.id)


def palette_block(g: SceneGraph, width: float):
    return min((n for n in g.of_kind(ObjectKind.AVAILABLE) if abs(n.width - width) <= EPS),
               key=lambda n: n.id)


def side_target(g: SceneGraph, ob, side: str):
    """The synthetic target the addition heuristic would inject for ``side`` of ``ob``."""
    u = palette_block(g, LARGE if side == TOP else SMALL)
    return add_target(g, (u.id, ob.id), ADD_SIDE_OFFSETS[side]).nodes[-1]


def heuristic_add(g: SceneGraph, h: HeuristicState) -> tuple:
    """Left side target, then right side target, then a large target on top, per obstacle."""
    obstacles = sorted(g.of_kind(ObjectKind.OBSTACLE), key=lambda n: (n.x, n.id))
    world = world_from_graph(g)
    i = h.obstacle_index
    while i < len(obstacles):
        ob = obstacles[i]
        if covered_length(ob, world.placed) < COVER_THRESHOLD * ob.width:
            break
        i += 1
    if i >= len(obstacles):
        return NoOp(), dataclasses.replace(h, obstacle_index=i)
    ob = obstacles[i]
    side = h.side if i == h.obstacle_index else LEFT
    for s in (LEFT, RIGHT, TOP)[(LEFT, RIGHT, TOP).index(side):]:
        side = s
        if s == TOP or not target_connected(side_target(g, ob, s), world):
            break
    u = palette_block(g, LARGE if side == TOP else SMALL)
    action = AddTarget(u.id, ob.id, ADD_SIDE_OFFSETS[side])
    return action, dataclasses.replace(h, obstacle_index=i, side=side, steps=h.steps + 1)
