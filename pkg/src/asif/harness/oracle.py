"""Scripted low-level policy used to exercise the controllers without training.

It looks only at the (possibly edited) scene graph it is handed and picks
an action by simulating candidate drops on a world rebuilt from that graph.
"""

from __future__ import annotations

from typing import Optional

from ..heuristics import LEFT, RIGHT, palette_block, side_target, unsatisfied_targets
from ..kinds import EPS, N_OFFSETS, SMALL, ObjectKind
from ..physics import (
    Body, World, contains_point, covered_length, drop_block, placement_x, target_connected,
    touches, world_from_graph,
)
from ..scene_graph import LowLevelAction, SceneGraph
from ..tasks import COVER_THRESHOLD


def idle_action(g: SceneGraph) -> LowLevelAction:
    """Drop a small block off the left edge of the floor: no effect on the scene."""
    return LowLevelAction(palette_block(g, SMALL).id, g.floor.id, 0)


def _candidates(g: SceneGraph, world: World):
    """Yield (action, x, width, settled block) for every resting non-sticky drop."""
    widths = {}
    for n in g.of_kind(ObjectKind.AVAILABLE):
        widths.setdefault(round(n.width, 9), n)
    anchors = [n for n in g.nodes if n.kind != ObjectKind.AVAILABLE]
    for picked in sorted(widths.values(), key=lambda n: n.width):
        for anchor in anchors:
            for k in range(N_OFFSETS):
                a = LowLevelAction(picked.id, anchor.id, k)
                x, width = placement_x(g, a)
                new, res = drop_block(world, width, x)
                if res.rested:
                    yield a, x, width, new.placed[-1]


def _column_clear(world: World, block: Body, top: float) -> bool:
    column = Body(-1, block.x, (block.bottom + top) / 2, block.width, top - block.bottom)
    return not any(touches(column, ob) for ob in world.obstacles)


def connect_action(g: SceneGraph, target, world: Optional[World] = None) -> Optional[LowLevelAction]:
    """Reach ``target``: a drop that contains its centre, else grow a clear column under it."""
    world = world_from_graph(g) if world is None else world
    hits, stacks = [], []
    for a, x, width, block in _candidates(g, world):
        key = (width, abs(x - target.x), a.anchor, a.offset_index)
        if contains_point(block, target.x, target.y):
            hits.append((key, a))
        elif (block.left - EPS <= target.x <= block.right + EPS and block.top <= target.y
              and _column_clear(world, block, target.top)):
            stacks.append((key, a))
    for group in (hits, stacks):
        if group:
            return min(group, key=lambda t: t[0])[1]
    return None


def cover_action(g: SceneGraph, ob, world: Optional[World] = None) -> Optional[LowLevelAction]:
    """Build a small tower on each side of ``ob``, then bridge it."""
    world = world_from_graph(g) if world is None else world
    base = covered_length(ob, world.placed)
    if base >= COVER_THRESHOLD * ob.width:
        return None
    for side in (LEFT, RIGHT):
        t = side_target(g, ob, side)
        if not target_connected(t, world):
            return connect_action(g, t, world)
    best = None
    for a, x, width, block in _candidates(g, world):
        gain = covered_length(ob, world.placed + (block,)) - base
        if gain <= EPS:
            continue
        key = (-round(gain, 9), width, abs(x - ob.x), a.anchor, a.offset_index)
        if best is None or key < best[0]:
            best = (key, a)
    return None if best is None else best[1]


def fill_action(g: SceneGraph) -> Optional[LowLevelAction]:
    """Drop a same-width block straight onto the lowest unfilled target."""
    todo = unsatisfied_targets(g)
    if not todo:
        return None
    t = min(todo, key=lambda n: (n.y, n.x, n.id))
    picked = [n for n in g.of_kind(ObjectKind.AVAILABLE) if abs(n.width - t.width) <= EPS]
    if not picked:
        return None
    return LowLevelAction(min(picked, key=lambda n: n.id).id, t.id, (N_OFFSETS - 1) // 2)


def oracle_policy(g: SceneGraph) -> LowLevelAction:
    """Pick a low-level action for the observed graph ``g``."""
    active = g.active
    action = None
    if active is not None and active.kind == ObjectKind.TARGET:
        action = connect_action(g, active)
    elif active is not None and active.kind == ObjectKind.OBSTACLE:
        action = cover_action(g, active)
    elif active is None:
        action = fill_action(g)
    return idle_action(g) if action is None else action


__all__ = ["connect_action", "cover_action", "fill_action", "idle_action", "oracle_policy"]
