"""Brute-force references for the auction and for joint planning.

Nothing here reuses the feasibility or argmax code in :mod:`sparcas.mechanism`;
only its plain data types are shared.  The enumeration walks all 2**n
stay/advance vectors and filters them through a predicate written from the
target positions directly.
"""

from __future__ import annotations

import heapq
import itertools
import random
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .mechanism import Announcement, AuctionOutcome, Configuration, Move
from .workspace import Roundabout, Workspace

MAX_AUCTION = 12


class OracleRefusal(Exception):
    """Instance too large for exhaustive treatment."""


def _allowed(r: Roundabout, anns: Sequence[Announcement], bits: Sequence[int],
             blocked) -> bool:
    ring = set(r.ring)
    after = []
    for a, b in zip(anns, bits):
        if b and (a.next == a.current or a.next in blocked):
            return False
        after.append(a.next if b else a.current)
    if len(set(after)) != len(after):
        return False
    where_now = {a.current: idx for idx, a in enumerate(anns)}
    for idx, (a, b) in enumerate(zip(anns, bits)):
        if not b:
            continue
        j = where_now.get(a.next)
        if j is None:
            continue
        # the occupant has to leave, and not towards us
        if not bits[j] or anns[j].next == a.current:
            return False
    entered = any(b and a.current not in ring and a.next in ring for a, b in zip(anns, bits))
    if entered and sum(1 for c in after if c in ring) > r.m - 1:
        return False
    return True


def oracle_auction(r: Roundabout, anns: Sequence[Announcement],
                   blocked=frozenset()) -> AuctionOutcome:
    anns = sorted(anns, key=lambda a: a.robot)
    n = len(anns)
    if n > MAX_AUCTION:
        raise OracleRefusal(f"{n} robots exceeds the exhaustive cap of {MAX_AUCTION}")
    blocked = set(blocked)
    vectors = [bits for bits in itertools.product((0, 1), repeat=n)
               if _allowed(r, anns, bits, blocked)]

    def best(skip: Optional[int]) -> Tuple[Fraction, Tuple[int, ...]]:
        top, arg = None, None
        for bits in vectors:
            total = sum((a.reported_value for a, b in zip(anns, bits)
                         if b and a.robot != skip), Fraction(0))
            if top is None or total > top:
                top, arg = total, bits
        return top, arg

    welfare, chosen = best(None)
    payments = {}
    for i, a in enumerate(anns):
        others_best, _ = best(a.robot)
        others_now = welfare - (a.reported_value if chosen[i] else 0)
        payments[a.robot] = others_best - others_now
    cfg = Configuration(tuple((a.robot, Move(b)) for a, b in zip(anns, chosen)))
    return AuctionOutcome(cfg, payments, welfare)


def oracle_max_welfare(r: Roundabout, anns: Sequence[Announcement], blocked=frozenset(),
                       skip: Optional[int] = None) -> Fraction:
    """Largest achievable value sum, ignoring robot ``skip``'s value."""
    anns = sorted(anns, key=lambda a: a.robot)
    top = Fraction(0)
    for bits in itertools.product((0, 1), repeat=len(anns)):
        if _allowed(r, anns, bits, set(blocked)):
            top = max(top, sum((a.reported_value for a, b in zip(anns, bits)
                                if b and a.robot != skip), Fraction(0)))
    return top


def all_feasible_keys(r: Roundabout, anns: Sequence[Announcement], blocked=frozenset()):
    anns = sorted(anns, key=lambda a: a.robot)
    return [bits for bits in itertools.product((0, 1), repeat=len(anns))
            if _allowed(r, anns, bits, set(blocked))]


# --------------------------------------------------------------------------
# truthfulness

EPS = Fraction(1, 1000)


@dataclass
class Deviation:
    robot: int
    misreport: Fraction
    truthful_payoff: Fraction
    deviating_payoff: Fraction


@dataclass
class Verdict:
    checked: int = 0
    deviations: List[Deviation] = field(default_factory=list)

    @property
    def truthful(self) -> bool:
        return not self.deviations


def misreport_grid(anns: Sequence[Announcement], robot: int) -> List[Fraction]:
    """Integers 0..10, the robot's own value, and rivals' bids nudged by +-EPS."""
    grid = {Fraction(v) for v in range(11)}
    for a in anns:
        if a.robot == robot:
            grid.add(a.reported_value)
        else:
            for d in (-EPS, 0, EPS):
                if a.reported_value + d >= 0:
                    grid.add(a.reported_value + d)
    # sums of rival bids are where the welfare comparison can flip
    rivals = [a.reported_value for a in anns if a.robot != robot]
    for k in range(2, len(rivals) + 1):
        for combo in itertools.combinations(rivals, k):
            s = sum(combo)
            grid.update(x for x in (s - EPS, s, s + EPS) if x >= 0)
    return sorted(grid)


def misreport_sweep(r: Roundabout, anns: Sequence[Announcement],
                    grid: Optional[Sequence[Fraction]] = None, blocked=frozenset(),
                    auction: Optional[Callable[..., AuctionOutcome]] = None) -> Verdict:
    """Try every grid misreport for every robot; truthful values are ``anns``.

    ``auction`` defaults to the production mechanism, which is what is under
    test here.
    """
    if len(anns) > 5:
        raise OracleRefusal("misreport sweep is capped at 5 robots")
    if auction is None:
        from .mechanism import sparcas_auction as auction
    verdict = Verdict()
    truth = auction(r, anns, blocked)
    for a in anns:
        def payoff(out: AuctionOutcome) -> Fraction:
            gained = a.reported_value if out.chosen.moves[a.robot] == Move.ADVANCE else 0
            return gained - out.payments[a.robot]

        honest = payoff(truth)
        for v in (grid if grid is not None else misreport_grid(anns, a.robot)):
            lie = [Announcement(b.robot, b.current, b.next, v) if b.robot == a.robot else b
                   for b in anns]
            verdict.checked += 1
            dev = payoff(auction(r, lie, blocked))
            if dev > honest:
                verdict.deviations.append(Deviation(a.robot, Fraction(v), honest, dev))
    return verdict


# --------------------------------------------------------------------------
# random auction instances

def random_instance(rng: random.Random, r: Roundabout, n: int, values: Callable[[], Fraction],
                    p_blocked: float = 0.2) -> Tuple[List[Announcement], frozenset]:
    """A physically consistent set of ``n`` participants around ``r``.

    At most m-1 robots start inside the ring.  Exit lanes are occupied by
    outside robots with probability ``p_blocked`` each.
    """
    slots = list(range(r.m))
    lanes = sorted(r.entries)
    max_inside = min(r.m - 1, n)
    choices = [("ring", p) for p in slots] + [("lane", c) for c in lanes]
    while True:
        picked = rng.sample(choices, n)
        if sum(1 for kind, _ in picked if kind == "ring") <= max_inside:
            break
    anns = []
    for rid, (kind, x) in enumerate(picked):
        if kind == "ring":
            cur = r.ring[x]
            options = [r.ring[(x + 1) % r.m]]
            if x in r.exits:
                options.append(r.exits[x])
            nxt = rng.choice(options)
        else:
            cur = x
            nxt = r.ring[r.entries[x]]
        anns.append(Announcement(rid, cur, nxt, values()))
    blocked = frozenset(c for c in r.exits.values() if rng.random() < p_blocked)
    return anns, blocked


# --------------------------------------------------------------------------
# joint-state optimal schedule along fixed paths

@dataclass
class JointResult:
    sum_of_costs: int
    makespan: int
    expanded: int


def _joint_moves(w: Workspace, paths: Sequence[Sequence[int]], state: Tuple[int, ...]):
    """Feasible successor index vectors; index len(path) - 1 means finished."""
    live = [i for i, k in enumerate(state) if k < len(paths[i]) - 1]
    for bits in itertools.product((0, 1), repeat=len(live)):
        new = list(state)
        for i, b in zip(live, bits):
            new[i] += b
        before = {i: paths[i][state[i]] for i in live}
        after = {i: paths[i][new[i]] for i in live}
        if len(set(after.values())) != len(after):
            continue
        ok = True
        holder = {c: i for i, c in before.items()}
        for i in live:
            if after[i] == before[i]:
                continue
            j = holder.get(after[i])
            if j is not None and (after[j] == before[j] or after[j] == before[i]):
                ok = False
                break
        if not ok:
            continue
        for rb in w.intersections:
            ring = set(rb.ring)
            entering = any(before[i] not in ring and after[i] in ring for i in live)
            if entering and sum(1 for c in after.values() if c in ring) > rb.m - 1:
                ok = False
                break
        if ok:
            yield tuple(new), len(live)


def joint_optimal(w: Workspace, paths: Sequence[Sequence[int]], step_cap: int = 500,
                  max_robots: int = 3) -> JointResult:
    """Optimal sum-of-costs and optimal makespan for robots on fixed paths.

    All robots start at step 0 on the first cell of their path and leave
    the road when they reach the last one.
    """
    if len(paths) > max_robots:
        raise OracleRefusal(f"joint search is capped at {max_robots} robots")
    if len({p[0] for p in paths}) != len(paths):
        raise ValueError("start cells must be distinct")
    start = tuple(0 for _ in paths)
    goal = tuple(len(p) - 1 for p in paths)

    dist = {start: 0}
    heap = [(0, 0, start)]
    expanded = 0
    soc = None
    while heap:
        cost, t, s = heapq.heappop(heap)
        if cost > dist.get(s, cost):
            continue
        if s == goal:
            soc = cost
            break
        expanded += 1
        if expanded > step_cap * 1000 or t >= step_cap:
            raise OracleRefusal("joint search exceeded its cap")
        for nxt, c in _joint_moves(w, paths, s):
            nc = cost + c
            if nc < dist.get(nxt, 1 << 60):
                dist[nxt] = nc
                heapq.heappush(heap, (nc, t + 1, nxt))
    if soc is None:
        raise OracleRefusal("no joint schedule exists")

    depth = {start: 0}
    queue = deque([start])
    makespan = None
    while queue:
        s = queue.popleft()
        if s == goal:
            makespan = depth[s]
            break
        if depth[s] >= step_cap:
            continue
        for nxt, _ in _joint_moves(w, paths, s):
            if nxt not in depth:
                depth[nxt] = depth[s] + 1
                queue.append(nxt)
    return JointResult(soc, makespan, expanded)
