"""Hand-built robot placements used by regression tests and ``verify``."""

from __future__ import annotations

from typing import List, Tuple

from .planner import Path
from .simulator import ACTIVE, CLASS_WEIGHTS, PENDING, RobotState
from .workspace import Workspace, generate_grid


def _ring_walk(w: Workspace, k: int, start_pos: int, slots: int, tail: int) -> List[int]:
    """Ring cells from ``start_pos`` for ``slots`` slots, then out through the exit."""
    rb = w.intersections[k]
    cells = [rb.ring[(start_pos + i) % rb.m] for i in range(slots)]
    last = (start_pos + slots - 1) % rb.m
    cell = rb.exits[last]
    cells.append(cell)
    for _ in range(tail):
        (cell,) = w.successor[cell]
        cells.append(cell)
    return cells


def ring_lock_fixture(w: Workspace = None) -> Tuple[Workspace, List[RobotState]]:
    """Two robots inside a four-slot ring and two about to enter.

    The ring robots sit on opposite slots and each entrant targets the slot
    one of them is about to move into.  Every robot wants to keep circling,
    so once all four slots fill nobody can move.  Entrants are premium and
    ring robots economy, so a value-greedy contest lets both entrants in.
    """
    w = w or generate_grid(16, 16)
    k = next(rb.id for rb in w.intersections if len(rb.entries) == 4 and len(rb.exits) == 4)
    rb = w.intersections[k]
    entry_of = {p: lane for lane, p in rb.entries.items()}
    specs = [
        # (class, path) -- ring robots at slots 0 and 2
        ("economy", _ring_walk(w, k, 0, 3, 2)),
        ("economy", _ring_walk(w, k, 2, 3, 2)),
        # entrants into slots 1 and 3
        ("premium", [entry_of[1]] + _ring_walk(w, k, 1, 3, 2)),
        ("premium", [entry_of[3]] + _ring_walk(w, k, 3, 3, 2)),
    ]
    robots = []
    for rid, (cls, cells) in enumerate(specs):
        robots.append(RobotState(rid, cls, CLASS_WEIGHTS[cls], -1, -1, Path(tuple(cells)),
                                 arrival_time=0, status=PENDING, plan_calls=1))
    return w, robots
