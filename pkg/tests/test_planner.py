import random
from collections import deque

import pytest

from sparcas.planner import (
    PlanningError, Reservation, TimedPath, distances_to, horizon_for,
    prioritized_plan, shortest_path, space_time_astar,
)
from sparcas.simulator import detect_collision
from sparcas.workspace import LANE, WorkspaceError, generate_grid


def bfs_len(w, a, b):
    """Plain forward BFS; independent of the planner's A* and reverse search."""
    seen = {a: 0}
    q = deque([a])
    while q:
        c = q.popleft()
        if c == b:
            return seen[c]
        for s in w.successor[c]:
            if s not in seen:
                seen[s] = seen[c] + 1
                q.append(s)
    return None


def test_shortest_paths_match_bfs(ws16):
    rng = random.Random(7)
    road = ws16.road_cells
    for _ in range(50):
        a, b = rng.choice(road), rng.choice(road)
        p = shortest_path(ws16, a, b)
        assert len(p) - 1 == bfs_len(ws16, a, b)
        assert p[0] == a and p[-1] == b
        for x, y in zip(p.cells, p.cells[1:]):
            assert y in ws16.successor[x]


def test_distances_match_bfs(ws16):
    rng = random.Random(3)
    goal = rng.choice(ws16.road_cells)
    dist = distances_to(ws16, goal)
    for c in rng.sample(ws16.road_cells, 30):
        assert dist[c] == bfs_len(ws16, c, goal)


def test_same_cell_path(ws16):
    c = ws16.road_cells[0]
    assert shortest_path(ws16, c, c).cells == (c,)


def test_straight_lane(ws100):
    # k steps down a westbound lane away from any ring
    w = ws100
    start = w.at(0, 60)
    assert w.cell(start).kind == LANE and w.cell(start).direction == "W"
    goal = w.at(0, 58)
    assert shortest_path(w, start, goal).cells == (start, w.at(0, 59), goal)


def test_service_goal_rejected(ws16):
    road = ws16.road_cells[0]
    with pytest.raises(WorkspaceError):
        shortest_path(ws16, road, ws16.service_cells[0])


def test_horizon():
    w = generate_grid(16, 16)
    assert horizon_for(w) == 4 * 32


def test_timed_path_at():
    tp = TimedPath(3, (10, 11, 12))
    assert tp.end == 5
    assert [tp.at(t) for t in range(2, 7)] == [None, 10, 11, 12, None]


def test_reservation_rejects_double_booking():
    res = Reservation()
    res.reserve(0, TimedPath(0, (1, 2)), park=False)
    assert not res.free(2, 1) and res.free(2, 2)
    with pytest.raises(PlanningError):
        res.reserve(1, TimedPath(1, (2,)), park=False)


def test_single_robot_prioritized_is_shortest(ws16):
    rng = random.Random(11)
    for _ in range(10):
        a, b = rng.sample(ws16.road_cells, 2)
        (tp,) = prioritized_plan(ws16, [(a, b, 0)])
        # equal-length routes may differ, so compare lengths and legality
        assert len(tp.cells) - 1 == bfs_len(ws16, a, b)
        assert tp.start == 0 and tp.cells[0] == a and tp.cells[-1] == b
        for x, y in zip(tp.cells, tp.cells[1:]):
            assert y in ws16.successor[x]


def _timeline(plans):
    end = max(p.end for p in plans)
    for t in range(end):
        here = {i: p.at(t) for i, p in enumerate(plans) if p.at(t) is not None}
        there = {i: p.at(t + 1) for i, p in enumerate(plans) if p.at(t + 1) is not None}
        yield here, there


def test_crossing_robots_do_not_collide(ws16):
    rng = random.Random(5)
    road = ws16.road_cells
    for trial in range(5):
        reqs = []
        starts = rng.sample(road, 8)
        for s in starts:
            reqs.append((s, rng.choice(road), 0))
        plans = prioritized_plan(ws16, reqs)
        assert all(p is not None for p in plans)
        for here, there in _timeline(plans):
            assert not detect_collision(here, there)
        # robots sharing a start cell at t=0 is impossible by construction
        assert len({p.at(p.start) for p in plans if p.start == 0}) == \
            sum(1 for p in plans if p.start == 0)


def test_later_robot_waits_off_road(ws16):
    # both want the same lane at the same time; the second one waits to enter
    a = ws16.road_cells[5]
    b = next(iter(ws16.successor[a]))
    p1, p2 = prioritized_plan(ws16, [(a, b, 0), (a, b, 0)])
    assert p1.start == 0
    assert p2.start >= 1


def test_park_at_goal_blocks_followers(ws16):
    a = ws16.road_cells[5]
    b = next(iter(ws16.successor[a]))
    first, second = prioritized_plan(ws16, [(a, b, 0), (a, b, 0)], park_at_goal=True, horizon=30)
    assert first is not None
    assert second is None


def test_negative_start_rejected(ws16):
    with pytest.raises(PlanningError):
        prioritized_plan(ws16, [(ws16.road_cells[0], ws16.road_cells[1], -1)])


def test_deadline_raises(ws100):
    with pytest.raises(TimeoutError):
        space_time_astar(ws100, ws100.road_cells[0], ws100.road_cells[-1], 0, Reservation(),
                         horizon_for(ws100), deadline=0.0)
