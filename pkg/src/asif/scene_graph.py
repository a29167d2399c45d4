"""Scene-graph observations and the controller's graph edits.

A scene graph is a fully connected directed graph over the objects of a
scene. Node attributes hold geometry, kind and the ``active``/``sticky``
flags; edges are implicit and enumerated in (source id, destination id)
order so that per-edge outputs line up reproducibly.

All functions here are pure: they return new graphs and never mutate.
"""

from __future__ import annotations

import dataclasses
import functools
from dataclasses import dataclass
from typing import Iterable, Optional, Union

from .kinds import BLOCK_HEIGHT, EPS, N_ADD_OFFSETS, N_OFFSETS, ObjectKind, TaskKind

# Hard-attention band: 1.5 block heights either side of the selected centre.
BAND_HALF_WIDTH = 1.05
# Slack on the band test so rows built from accumulated sums are not split.
BAND_TOL = 1e-9


class InvalidActionError(ValueError):
    """Raised for actions referencing missing or ineligible nodes."""


@dataclass(frozen=True)
class SceneNode:
    id: int
    kind: ObjectKind
    x: float
    y: float
    width: float
    height: float
    active: bool = False
    sticky: bool = False

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"node {self.id}: non-positive size")
        if self.sticky and self.kind != ObjectKind.PLACED:
            raise ValueError(f"node {self.id}: only placed blocks can be sticky")

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

    @property
    def is_scene_object(self) -> bool:
        return self.kind not in (ObjectKind.FLOOR, ObjectKind.AVAILABLE)


@dataclass(frozen=True)
class SceneGraph:
    nodes: tuple

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node ids")
        if sum(n.kind == ObjectKind.FLOOR for n in self.nodes) != 1:
            raise ValueError("a scene graph needs exactly one floor node")
        if sum(n.active for n in self.nodes) > 1:
            raise ValueError("at most one node may be active")

    def __len__(self) -> int:
        return len(self.nodes)

    @functools.cached_property
    def _index(self) -> dict:
        return {n.id: i for i, n in enumerate(self.nodes)}

    def index_of(self, node_id: int) -> int:
        try:
            return self._index[node_id]
        except KeyError:
            raise InvalidActionError(f"no node with id {node_id}") from None

    def node(self, node_id: int) -> SceneNode:
        return self.nodes[self.index_of(node_id)]

    def __contains__(self, node_id) -> bool:
        return node_id in self._index

    @property
    def ids(self) -> list:
        return [n.id for n in self.nodes]

    @property
    def floor(self) -> SceneNode:
        return next(n for n in self.nodes if n.kind == ObjectKind.FLOOR)

    @property
    def active(self) -> Optional[SceneNode]:
        return next((n for n in self.nodes if n.active), None)

    def of_kind(self, *kinds: ObjectKind) -> list:
        return [n for n in self.nodes if n.kind in kinds]

    @functools.cached_property
    def edges(self) -> list:
        return enumerate_edges(self)

    @functools.cached_property
    def edge_index(self) -> dict:
        return {e: i for i, e in enumerate(self.edges)}


def enumerate_edges(g: SceneGraph) -> list:
    """All ordered pairs of distinct node ids, sorted by (source, destination)."""
    ids = sorted(n.id for n in g.nodes)
    return [(u, v) for u in ids for v in ids if u != v]


def _scene_node(g: SceneGraph, v: int) -> SceneNode:
    node = g.node(v)
    if node.kind == ObjectKind.AVAILABLE:
        raise InvalidActionError(f"node {v} is a palette block")
    return node


def edit_active(g: SceneGraph, v: int) -> SceneGraph:
    """Move the single active flag onto node ``v``."""
    _scene_node(g, v)
    return SceneGraph(tuple(dataclasses.replace(n, active=(n.id == v)) for n in g.nodes))


def in_band(y: float, y_center: float) -> bool:
    return abs(y - y_center) <= BAND_HALF_WIDTH + BAND_TOL


def delete_band(g: SceneGraph, v: int) -> SceneGraph:
    """Keep only scene objects vertically near ``v``, then re-base their heights.

    Floor and palette nodes are always kept and never moved. Kept scene
    objects are shifted by a common amount so the lowest bottom sits at 0.
    """
    y_v = _scene_node(g, v).y
    kept = [
        n for n in g.nodes
        if not n.is_scene_object or n.id == v or in_band(n.y, y_v)
    ]
    shift = min(n.bottom for n in kept if n.is_scene_object)
    return SceneGraph(tuple(
        dataclasses.replace(n, y=n.y - shift) if n.is_scene_object and shift != 0.0 else n
        for n in kept
    ))


def offset_value(index: int, span: float, n: int) -> float:
    """The ``index``-th of ``n`` evenly spaced values over [-span/2, span/2].

    Computed relative to the grid midpoint so the middle index is exactly 0.
    """
    if not 0 <= index < n:
        raise InvalidActionError(f"offset index {index} outside [0, {n})")
    return (index - (n - 1) / 2) * (span / (n - 1))


def add_target(g: SceneGraph, edge: tuple, x: int) -> SceneGraph:
    """Append a synthetic target shaped like palette block ``u``, placed relative to ``v``.

    The lateral offset comes from a 7-point grid over the combined half
    widths. A target overlapping ``v`` horizontally sits on top of it;
    otherwise it is beside ``v`` with aligned bottoms.
    """
    u, v = edge
    src = g.node(u)
    if src.kind != ObjectKind.AVAILABLE:
        raise InvalidActionError(f"edge start {u} is not a palette block")
    dst = _scene_node(g, v)
    cx = dst.x + offset_value(x, src.width + dst.width, N_ADD_OFFSETS)
    overlap = min(cx + src.width / 2, dst.right) - max(cx - src.width / 2, dst.left)
    if overlap > EPS:
        cy = dst.top + src.height / 2
    else:
        cy = dst.bottom + src.height / 2
    new = SceneNode(
        id=max(g.ids) + 1,
        kind=ObjectKind.TARGET,
        x=cx,
        y=cy,
        width=src.width,
        height=src.height,
        active=g.active is None,
    )
    return SceneGraph(g.nodes + (new,))


# -- low-level actions --------------------------------------------------------

@dataclass(frozen=True)
class LowLevelAction:
    """Pick palette block ``picked`` and drop it relative to ``anchor``."""

    picked: int
    anchor: int
    offset_index: int
    sticky: bool = False

    @property
    def edge(self) -> tuple:
        return (self.picked, self.anchor)


def check_low_level(g: SceneGraph, a: LowLevelAction) -> tuple:
    """Return the (picked, anchor) nodes of ``a``, raising if it is not valid for ``g``."""
    picked = g.node(a.picked)
    anchor = g.node(a.anchor)
    if picked.kind != ObjectKind.AVAILABLE:
        raise InvalidActionError(f"picked node {a.picked} is not a palette block")
    if anchor.kind == ObjectKind.AVAILABLE:
        raise InvalidActionError(f"anchor node {a.anchor} is a palette block")
    if not 0 <= a.offset_index < N_OFFSETS:
        raise InvalidActionError(f"offset index {a.offset_index} outside [0, {N_OFFSETS})")
    return picked, anchor


# -- controller actions -------------------------------------------------------

@dataclass(frozen=True)
class EditActive:
    node: int


@dataclass(frozen=True)
class DeleteBand:
    node: int


@dataclass(frozen=True)
class AddTarget:
    source: int
    dest: int
    x: int

    @property
    def edge(self) -> tuple:
        return (self.source, self.dest)


@dataclass(frozen=True)
class NoOp:
    pass


ControllerAction = Union[EditActive, DeleteBand, AddTarget, NoOp]


def apply_controller_action(
    g: SceneGraph,
    action: ControllerAction,
    task: TaskKind,
    subtask: Optional[TaskKind] = None,
) -> SceneGraph:
    """Dispatch a controller action; combined episodes gate additions on the sub-task."""
    if isinstance(action, NoOp):
        return g
    if isinstance(action, EditActive):
        return edit_active(g, action.node)
    if isinstance(action, DeleteBand):
        return delete_band(g, action.node)
    if isinstance(action, AddTarget):
        if task.is_combined and (subtask is None or subtask.family != "add"):
            return g
        return add_target(g, action.edge, action.x)
    raise TypeError(f"not a controller action: {action!r}")


# -- record format ------------------------------------------------------------

RECORD_FIELDS = ("id", "kind", "x", "y", "width", "height", "active", "sticky")


def node_record(n: SceneNode) -> str:
    return "\t".join([
        str(n.id), n.kind.name.lower(), repr(float(n.x)), repr(float(n.y)),
        repr(float(n.width)), repr(float(n.height)), str(int(n.active)), str(int(n.sticky)),
    ])


def to_records(g: SceneGraph) -> str:
    """One tab-separated line per node, fields in ``RECORD_FIELDS`` order."""
    return "".join(node_record(n) + "\n" for n in g.nodes)


def from_records(lines: Union[str, Iterable[str]]) -> SceneGraph:
    if isinstance(lines, str):
        lines = lines.splitlines()
    nodes = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        f = line.split("\t")
        if len(f) != len(RECORD_FIELDS):
            raise ValueError(f"bad scene record: {line!r}")
        nodes.append(SceneNode(
            id=int(f[0]), kind=ObjectKind[f[1].upper()], x=float(f[2]), y=float(f[3]),
            width=float(f[4]), height=float(f[5]), active=f[6] == "1", sticky=f[7] == "1",
        ))
    return SceneGraph(tuple(nodes))


def graph_equal(a: SceneGraph, b: SceneGraph) -> bool:
    return a.nodes == b.nodes


def band_members(g: SceneGraph, v: int) -> set:
    """Ids of the scene objects a delete-band at ``v`` keeps (original coordinates)."""
    y_v = g.node(v).y
    return {n.id for n in g.nodes if n.is_scene_object and (n.id == v or in_band(n.y, y_v))}


__all__ = [
    "AddTarget", "BAND_HALF_WIDTH", "BLOCK_HEIGHT", "ControllerAction", "DeleteBand",
    "EditActive", "InvalidActionError", "LowLevelAction", "NoOp", "ObjectKind", "SceneGraph", "SceneNode",
    "add_target", "apply_controller_action", "delete_band", "edit_active", "enumerate_edges",
    "from_records", "offset_value", "to_records",
]
