"""Single-robot A* and the space-time prioritized-planning baseline."""

from __future__ import annotations

import heapq
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .workspace import Workspace, WorkspaceError


class PlanningError(Exception):
    pass


class Unreachable(PlanningError):
    pass


@dataclass(frozen=True)
class Path:
    cells: Tuple[int, ...]

    def __len__(self):
        return len(self.cells)

    def __getitem__(self, i):
        return self.cells[i]


def shortest_path(w: Workspace, source: int, goal: int) -> Path:
    """A* over the directed road graph with a Manhattan heuristic.

    Ties on f-score go to the smaller cell id so plans are deterministic.
    """
    w.cell(source)
    w.cell(goal)
    if not (w.is_road(source) and w.is_road(goal)):
        raise WorkspaceError("shortest_path works on road cells")
    g = {source: 0}
    parent: Dict[int, int] = {}
    heap = [(w.manhattan(source, goal), source)]
    closed: Set[int] = set()
    while heap:
        _, c = heapq.heappop(heap)
        if c in closed:
            continue
        if c == goal:
            cells = [c]
            while c in parent:
                c = parent[c]
                cells.append(c)
            return Path(tuple(reversed(cells)))
        closed.add(c)
        for s in w.successor[c]:
            ng = g[c] + 1
            if s not in closed and ng < g.get(s, 1 << 60):
                g[s] = ng
                parent[s] = c
                heapq.heappush(heap, (ng + w.manhattan(s, goal), s))
    raise Unreachable(f"cell {goal} is not reachable from {source}")


def distances_to(w: Workspace, goal: int) -> Dict[int, int]:
    """Exact remaining distance to ``goal`` from every road cell that reaches it."""
    pred: Dict[int, List[int]] = _predecessors(w)
    dist = {goal: 0}
    queue = deque([goal])
    while queue:
        c = queue.popleft()
        for p in pred.get(c, ()):
            if p not in dist:
                dist[p] = dist[c] + 1
                queue.append(p)
    return dist


_PRED_CACHE: Dict[int, Tuple[Workspace, Dict[int, List[int]]]] = {}


def _predecessors(w: Workspace) -> Dict[int, List[int]]:
    hit = _PRED_CACHE.get(id(w))
    if hit is not None and hit[0] is w:
        return hit[1]
    pred: Dict[int, List[int]] = {}
    for c in w.road_cells:
        for s in w.successor[c]:
            pred.setdefault(s, []).append(c)
    _PRED_CACHE.clear()
    _PRED_CACHE[id(w)] = (w, pred)
    return pred


# --------------------------------------------------------------------------
# prioritized planning

@dataclass
class Reservation:
    """Space-time occupancy claimed by already-planned robots."""

    occupancy: Dict[Tuple[int, int], int] = field(default_factory=dict)
    # (from, to, t) means the move from->to happens between t and t+1
    moves: Dict[Tuple[int, int, int], int] = field(default_factory=dict)
    # cell -> (time from which it is held forever, robot)
    parked: Dict[int, Tuple[int, int]] = field(default_factory=dict)

    def free(self, cell: int, t: int) -> bool:
        if (cell, t) in self.occupancy:
            return False
        hold = self.parked.get(cell)
        return hold is None or t < hold[0]

    def reserve(self, robot: int, timed: "TimedPath", park: bool) -> None:
        for k, c in enumerate(timed.cells):
            t = timed.start + k
            if (c, t) in self.occupancy:
                raise PlanningError(f"cell {c} at t={t} reserved twice")
            self.occupancy[(c, t)] = robot
            if k + 1 < len(timed.cells):
                self.moves[(c, timed.cells[k + 1], t)] = robot
        if park and timed.cells:
            self.parked[timed.cells[-1]] = (timed.start + len(timed.cells) - 1, robot)


@dataclass(frozen=True)
class TimedPath:
    """Robot at ``cells[k]`` during timestep ``start + k``; leaves after the last."""

    start: int
    cells: Tuple[int, ...]

    @property
    def end(self) -> int:
        return self.start + len(self.cells) - 1

    def at(self, t: int) -> Optional[int]:
        k = t - self.start
        return self.cells[k] if 0 <= k < len(self.cells) else None


def horizon_for(w: Workspace) -> int:
    return 4 * (w.width + w.height)


def space_time_astar(w: Workspace, source: int, goal: int, start: int, res: Reservation,
                     horizon: int, dist: Optional[Dict[int, int]] = None,
                     deadline: Optional[float] = None) -> Optional[TimedPath]:
    """Earliest-arrival plan avoiding reserved cells and head-on swaps.

    The robot may wait off the road before entering at ``source``; once on
    the road it may advance or wait in place.  Returns None if nothing fits
    within ``horizon`` steps after ``start``.
    """
    if dist is None:
        dist = distances_to(w, goal)
    if source not in dist:
        return None
    limit = start + horizon
    OFF = -1
    heap = [(start + dist[source] + 1, start, OFF)]
    parent: Dict[Tuple[int, int], Tuple[int, int]] = {}
    seen = {(OFF, start)}
    if res.free(source, start):
        # enter right away at the arrival step
        heapq.heappush(heap, (start + dist[source], start, source))
        seen.add((source, start))
        parent[(source, start)] = (OFF, start)
    expansions = 0
    while heap:
        _, t, c = heapq.heappop(heap)
        expansions += 1
        if deadline is not None and expansions % 512 == 0 and time.perf_counter() > deadline:
            raise TimeoutError("prioritized planning timed out")
        if c == goal:
            cells = []
            node = (c, t)
            while node[0] != OFF:
                cells.append(node[0])
                node = parent[node]
            return TimedPath(t - len(cells) + 1, tuple(reversed(cells)))
        if t >= limit:
            continue
        nt = t + 1
        if c == OFF:
            options = [OFF, source]
        else:
            options = [c, *sorted(w.successor[c])]
        for s in options:
            if s != OFF:
                if s not in dist or not res.free(s, nt):
                    continue
                # head-on swap with a reserved move
                if s != c and c != OFF and (s, c, t) in res.moves:
                    continue
            key = (s, nt)
            if key in seen:
                continue
            seen.add(key)
            parent[key] = (c, t)
            h = dist[source] + 1 if s == OFF else dist[s]
            heapq.heappush(heap, (nt + h, nt, s))
    return None


def prioritized_plan(w: Workspace, robots: Sequence[Tuple[int, int, int]],
                     horizon: Optional[int] = None, park_at_goal: bool = False,
                     deadline: Optional[float] = None) -> List[Optional[TimedPath]]:
    """Plan robots one after another in list order.

    Each robot treats the timed paths of all earlier robots as moving
    obstacles.  Robots leave the road when they reach their goal unless
    ``park_at_goal`` is set, in which case they hold the goal cell forever.
    A robot that cannot reach its goal within the horizon gets ``None``
    and reserves nothing.
    """
    horizon = horizon_for(w) if horizon is None else horizon
    res = Reservation()
    out: List[Optional[TimedPath]] = []
    dist_cache: Dict[int, Dict[int, int]] = {}
    for idx, (source, goal, start) in enumerate(robots):
        if start < 0:
            raise PlanningError("start times must be >= 0")
        if goal not in dist_cache:
            dist_cache[goal] = distances_to(w, goal)
        timed = space_time_astar(w, source, goal, start, res, horizon, dist_cache[goal], deadline)
        if timed is not None:
            res.reserve(idx, timed, park_at_goal)
        out.append(timed)
    return out
