"""Deterministic quasi-static block settling.

Stands in for a rigid-body simulator. A placed block falls straight down
from above the scene and stops on the highest support it overlaps. When
the block's centre is not over that support it skips it and keeps
falling. Blocks that are already placed never move. Touching an obstacle
anywhere along the path, even at a boundary, ends the drop as a contact.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .kinds import BLOCK_HEIGHT, EPS, N_OFFSETS, ObjectKind, SCENE_SIZE
from .scene_graph import (
    LowLevelAction, SceneGraph, SceneNode, check_low_level, offset_value,
)

FLOOR_ID = 0
FLOOR_THICKNESS = 0.7


@dataclass(frozen=True)
class Body:
    """Axis-aligned box given by its centre and size."""

    id: int
    x: float
    y: float
    width: float
    height: float = BLOCK_HEIGHT
    sticky: bool = False

    @property
    def left(self) -> float:
        return self.x - self.width / 2

    @property
    def right(self) -> float:
        return self.x + self.width / 2

    @property
    def bottom(self) -> float:
        return self.y - self.height / 2

    @property
    def top(self) -> float:
        return self.y + self.height / 2


@dataclass(frozen=True)
class World:
    """Ground-truth geometry of one scene.

    ``palette`` holds the pick-up blocks shown below the floor; their
    positions only matter for the observation. ``active_id`` is the
    object flagged active in observations, if any.
    """

    width: float = SCENE_SIZE
    obstacles: tuple = ()
    targets: tuple = ()
    placed: tuple = ()
    bonds: frozenset = frozenset()
    palette: tuple = ()
    active_id: Optional[int] = None
    next_id: int = 1

    @property
    def floor(self) -> Body:
        return Body(FLOOR_ID, self.width / 2, -FLOOR_THICKNESS / 2, self.width, FLOOR_THICKNESS)

    def body(self, body_id: int) -> Body:
        for group in (self.obstacles, self.targets, self.placed, self.palette):
            for b in group:
                if b.id == body_id:
                    return b
        if body_id == FLOOR_ID:
            return self.floor
        raise KeyError(body_id)


@dataclass(frozen=True)
class SettleResult:
    final_pose: Optional[tuple] = None
    obstacle_contact: bool = False
    fell_off_scene: bool = False
    block_id: Optional[int] = None
    supports: tuple = field(default=())

    @property
    def rested(self) -> bool:
        return self.final_pose is not None


def h_overlap(a, b) -> float:
    """Signed length of the horizontal overlap of two boxes."""
    return min(a.right, b.right) - max(a.left, b.left)


def touches(a, b) -> bool:
    """Closed-box intersection; shared boundaries count."""
    return (a.left <= b.right + EPS and b.left <= a.right + EPS
            and a.bottom <= b.top + EPS and b.bottom <= a.top + EPS)


def supported(x: float, block, supports: Sequence) -> bool:
    """Centre of the block lies over the hull of its support contacts."""
    lo = min(max(block.left, s.left) for s in supports)
    hi = max(min(block.right, s.right) for s in supports)
    return lo <= x <= hi


def drop_block(w: World, width: float, x_center: float, sticky: bool = False,
               height: float = BLOCK_HEIGHT) -> tuple:
    """Drop a block at ``x_center`` and let it settle.

    Returns ``(world, result)``; on contact or when the block misses the
    scene the input world is returned unchanged.
    """
    if not 0.0 <= x_center <= w.width:
        return w, SettleResult(fell_off_scene=True)
    probe = Body(-1, x_center, 0.0, width, height)
    candidates = [b for b in w.placed if h_overlap(b, probe) > 0]
    floor = w.floor
    while True:
        level = max([b.top for b in candidates] + [floor.top])
        contacts = [b for b in candidates if b.top >= level - EPS]
        on_floor = floor.top >= level - EPS
        if on_floor:
            contacts.append(floor)
        resting = dataclasses.replace(probe, y=level + height / 2)
        if on_floor or sticky or supported(x_center, resting, contacts):
            break
        dropped = {b.id for b in contacts}
        candidates = [b for b in candidates if b.id not in dropped]

    swept = Body(-1, x_center, (level + 1e6) / 2, width, 1e6 - level)
    if any(touches(swept, ob) for ob in w.obstacles):
        return w, SettleResult(obstacle_contact=True)

    block = Body(w.next_id, x_center, level + height / 2, width, height, sticky)
    bonds = w.bonds
    if sticky:
        bonds = bonds | frozenset((block.id, s.id) for s in contacts)
    new_world = dataclasses.replace(
        w, placed=w.placed + (block,), bonds=bonds, next_id=w.next_id + 1,
    )
    return new_world, SettleResult(
        final_pose=(block.x, block.y), block_id=block.id,
        supports=tuple(sorted(s.id for s in contacts)),
    )


def placement_x(g: SceneGraph, a: LowLevelAction) -> tuple:
    """Return (x_center, picked width) for a low-level action on graph ``g``."""
    picked, anchor = check_low_level(g, a)
    return anchor.x + offset_value(a.offset_index, anchor.width + picked.width, N_OFFSETS), picked.width


def place_relative(w: World, a: LowLevelAction, g: SceneGraph) -> tuple:
    """Place the picked palette block next to ``a.anchor`` as seen in ``g``.

    The anchor geometry is read from ``g`` (which may be a controller-edited
    view); only the resulting x position reaches the world.
    """
    x, width = placement_x(g, a)
    return drop_block(w, width, x, a.sticky)


def overlap_fraction(block, target) -> float:
    """Area of ``block`` intersected with ``target`` over the target's area."""
    dx = min(block.right, target.right) - max(block.left, target.left)
    dy = min(block.top, target.top) - max(block.bottom, target.bottom)
    if dx <= 0 or dy <= 0:
        return 0.0
    return min(1.0, (dx * dy) / (target.width * target.height))


def interval_union_length(intervals: Iterable[tuple]) -> float:
    total = 0.0
    cur_lo = cur_hi = None
    for lo, hi in sorted(intervals):
        if hi <= lo:
            continue
        if cur_hi is None or lo > cur_hi:
            if cur_hi is not None:
                total += cur_hi - cur_lo
            cur_lo, cur_hi = lo, hi
        else:
            cur_hi = max(cur_hi, hi)
    if cur_hi is not None:
        total += cur_hi - cur_lo
    return total


def covered_length(obstacle, placed: Iterable) -> float:
    """Length of the obstacle's top spanned by blocks resting above it."""
    spans = [
        (max(b.left, obstacle.left), min(b.right, obstacle.right))
        for b in placed if b.bottom >= obstacle.top
    ]
    return interval_union_length(spans)


def contains_point(box, x: float, y: float) -> bool:
    return box.left <= x <= box.right and box.bottom <= y <= box.top


def target_connected(target, w: World) -> bool:
    """Some placed block contains the target's centre (closed boundaries)."""
    return any(contains_point(b, target.x, target.y) for b in w.placed)


def is_resting(w: World, block: Body) -> bool:
    """Post-hoc audit: the block is on the floor, bonded, or over its supports' hull."""
    if abs(block.bottom - w.floor.top) <= EPS:
        return True
    if any(block.id == a for a, _ in w.bonds):
        return True
    supports = [
        b for b in w.placed
        if b.id < block.id and h_overlap(b, block) > 0 and abs(b.top - block.bottom) <= EPS
    ]
    return bool(supports) and supported(block.x, block, supports)


# -- graph conversion ---------------------------------------------------------

def _node(b: Body, kind: ObjectKind, active_id: Optional[int]) -> SceneNode:
    return SceneNode(b.id, kind, b.x, b.y, b.width, b.height, active=(b.id == active_id),
                     sticky=b.sticky and kind == ObjectKind.PLACED)


def world_to_graph(w: World) -> SceneGraph:
    """Observation of ``w``: floor, palette, obstacles, targets and placed blocks, by id."""
    nodes = [_node(w.floor, ObjectKind.FLOOR, w.active_id)]
    nodes += [_node(b, ObjectKind.AVAILABLE, None) for b in w.palette]
    nodes += [_node(b, ObjectKind.OBSTACLE, w.active_id) for b in w.obstacles]
    nodes += [_node(b, ObjectKind.TARGET, w.active_id) for b in w.targets]
    nodes += [_node(b, ObjectKind.PLACED, w.active_id) for b in w.placed]
    nodes.sort(key=lambda n: n.id)
    return SceneGraph(tuple(nodes))


def world_from_graph(g: SceneGraph) -> World:
    """Rebuild a world from an observation (sticky bonds are not observable)."""
    def body(n: SceneNode) -> Body:
        return Body(n.id, n.x, n.y, n.width, n.height, n.sticky)

    active = g.active
    return World(
        width=g.floor.width,
        obstacles=tuple(body(n) for n in g.of_kind(ObjectKind.OBSTACLE)),
        targets=tuple(body(n) for n in g.of_kind(ObjectKind.TARGET)),
        placed=tuple(body(n) for n in g.of_kind(ObjectKind.PLACED)),
        palette=tuple(body(n) for n in g.of_kind(ObjectKind.AVAILABLE)),
        active_id=None if active is None else active.id,
        next_id=max(g.ids) + 1,
    )
