import pytest

from asif.heuristics import (
    HeuristicState, edit_cover_steps, heuristic_add, heuristic_delete, heuristic_edit,
)
from asif.kinds import ObjectKind, TaskKind
from asif.physics import Body, World, world_to_graph
from asif.scene_graph import AddTarget, DeleteBand, EditActive, NoOp, apply_controller_action
from asif.tasks import generate_scene, obstacle_body

PALETTE = (Body(1, 1.0, -1.4, 0.7), Body(2, 2.0, -1.4, 0.7), Body(3, 3.0, -1.4, 2.1),
           Body(4, 5.0, -1.4, 3.5))


def edit_graph():
    ob = obstacle_body(10, 8.0, 1, 2.1)
    t = Body(11, 8.0, ob.top + 0.1 + 0.35, 0.7)
    return world_to_graph(World(palette=PALETTE, obstacles=(ob,), targets=(t,), active_id=11, next_id=12)), ob


def test_edit_schedule():
    g, ob = edit_graph()
    k = edit_cover_steps(ob)
    assert k == 2 * 2 + 1
    h = HeuristicState()
    seen = []
    for _ in range(k + 2):
        a, h = heuristic_edit(g, h)
        seen.append(a)
    assert seen[:k] == [EditActive(10)] * k
    assert seen[k:] == [EditActive(11)] * 2


def test_edit_fixed_even_if_covered():
    g, ob = edit_graph()
    bridge = Body(12, 8.0, ob.top + 0.1 + 0.35, 3.5)
    g2 = world_to_graph(World(palette=PALETTE, obstacles=(ob,), placed=(bridge,),
                              targets=(Body(11, 8.0, 5.0, 0.7),), active_id=11, next_id=13))
    a, h = heuristic_edit(g2, HeuristicState())
    assert a == EditActive(10)


def test_edit_override_k():
    g, _ = edit_graph()
    a, h = heuristic_edit(g, HeuristicState(), cover_steps=0)
    assert a == EditActive(11)


def delete_graph(placed=()):
    ts = (Body(10, 4.0, 1.05, 0.7), Body(11, 2.0, 0.35, 2.1), Body(12, 9.0, 0.35, 0.7))
    return world_to_graph(World(palette=PALETTE, targets=ts, placed=placed, next_id=20))


def test_delete_lowest_then_next():
    assert heuristic_delete(delete_graph()) == DeleteBand(11)
    filled = (Body(20, 2.0, 0.35, 2.1),)
    assert heuristic_delete(delete_graph(filled)) == DeleteBand(12)
    filled += (Body(21, 9.0, 0.35, 0.7), Body(22, 4.0, 1.05, 0.7))
    assert heuristic_delete(delete_graph(filled)) == NoOp()


def test_delete_stateless_on_generated():
    w, g = generate_scene(TaskKind.DELETE_TRANSFER, 4)
    assert heuristic_delete(g) == heuristic_delete(g)
    lowest = min(w.targets, key=lambda t: (t.y, t.x, t.id))
    assert heuristic_delete(g) == DeleteBand(lowest.id)


def add_graph(placed=()):
    obs = (obstacle_body(10, 10.0, 1, 0.7), obstacle_body(11, 4.0, 1, 2.1))
    return world_to_graph(World(palette=PALETTE, obstacles=obs, placed=placed, next_id=20))


def test_add_phases():
    a, h = heuristic_add(add_graph(), HeuristicState())
    assert a == AddTarget(1, 11, 0)
    left = apply_controller_action(add_graph(), a, TaskKind.ADD_TRANSFER).nodes[-1]
    tower = (Body(20, left.x, 0.35, 0.7), Body(21, left.x, 1.05, 0.7))
    a, h = heuristic_add(add_graph(tower), h)
    assert a == AddTarget(1, 11, 6)
    right = apply_controller_action(add_graph(tower), a, TaskKind.ADD_TRANSFER).nodes[-1]
    towers = tower + (Body(22, right.x, 0.35, 0.7), Body(23, right.x, 1.05, 0.7))
    a, h = heuristic_add(add_graph(towers), h)
    assert a == AddTarget(4, 11, 3)


def test_add_all_covered_noop():
    ob = obstacle_body(10, 4.0, 0, 0.7)
    g = world_to_graph(World(palette=PALETTE, obstacles=(ob,), placed=(Body(20, 4.0, 1.05, 3.5),),
                             next_id=21))
    assert heuristic_add(g, HeuristicState())[0] == NoOp()


@pytest.mark.parametrize("seed", range(10))
def test_actions_valid_for_task(seed):
    _, g = generate_scene(TaskKind.ADD_TRANSFER, seed)
    a, _ = heuristic_add(g, HeuristicState())
    assert g.node(a.source).kind == ObjectKind.AVAILABLE
    assert g.node(a.dest).kind == ObjectKind.OBSTACLE and 0 <= a.x < 7
    _, g = generate_scene(TaskKind.EDIT_TRANSFER, seed)
    a, _ = heuristic_edit(g, HeuristicState())
    assert g.node(a.node).kind in (ObjectKind.OBSTACLE, ObjectKind.TARGET)
