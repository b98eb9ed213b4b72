"""Synchronous discrete-time traffic engine.

Every timestep each robot on the road either advances one cell along its
precomputed shortest path or stays.  Robots on plain lane cells advance iff
their next cell is empty.  Robots inside or entering a roundabout take part
in that roundabout's auction.  All moves are applied at once, collected
payments are redistributed, finished robots leave and new robots enter.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from . import mechanism as mech
from .mechanism import AUTHORITY, Announcement, Decision, Move
from .planner import Path, prioritized_plan, shortest_path, Unreachable
from .workspace import Workspace, generate_grid

CLASS_WEIGHTS: Dict[str, Fraction] = {
    "economy": Fraction("0.02"),
    "regular": Fraction("0.065"),
    "premium": Fraction("0.2"),
}
CLASSES = tuple(CLASS_WEIGHTS)

PENDING, ACTIVE, DONE = "pending", "active", "done"
MECHANISMS = ("sparcas", "naive", "prioritized")
TRACE_HEADER = "# sparcas-trace v1 "


class InvariantViolation(RuntimeError):
    """A collision happened under a mechanism that must prevent it."""

    def __init__(self, message: str, trace: Sequence[str] = ()):
        super().__init__(message)
        self.trace = list(trace)


@dataclass
class RobotState:
    id: int
    cls: str
    weight: Fraction
    source: int  # service cell
    goal: int  # service cell
    path: Path
    arrival_time: int = 0
    status: str = PENDING
    path_index: int = 0
    t_wait: int = 0
    entered_at: Optional[int] = None
    done_at: Optional[int] = None
    value: Fraction = Fraction(0)
    paid: Fraction = Fraction(0)
    credited: Fraction = Fraction(0)
    plan_time: float = 0.0
    plan_calls: int = 0

    @property
    def position(self) -> Optional[int]:
        return self.path[self.path_index] if self.status == ACTIVE else None

    @property
    def next_cell(self) -> int:
        return self.path[self.path_index + 1]

    def current_value(self) -> Fraction:
        return (self.t_wait + 1) * self.weight


@dataclass
class SimConfig:
    width: int = 100
    height: int = 100
    block_spacing: int = 7
    n: int = 10
    classes: Tuple[str, ...] = CLASSES
    arrival: str = "all_at_start"  # or "uniform"
    arrival_fraction: float = 0.5  # share of robots arriving late under "uniform"
    arrival_horizon: Optional[int] = None  # defaults to the workspace width
    mechanism: str = "sparcas"
    seed: int = 0
    step_limit: Optional[int] = None
    mini_slot: float = 0.06
    deadlock_window: int = 10
    timeout: Optional[float] = None
    manager: bool = True

    def __post_init__(self):
        self.classes = tuple(self.classes)
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"mechanism must be one of {MECHANISMS}, got {self.mechanism!r}")
        if self.arrival not in ("all_at_start", "uniform"):
            raise ValueError(f"unknown arrival model {self.arrival!r}")
        if self.n < 0:
            raise ValueError("n must be >= 0")
        for c in self.classes:
            if c not in CLASS_WEIGHTS:
                raise ValueError(f"unknown robot class {c!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["classes"] = list(self.classes)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "SimConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown SimConfig fields: {sorted(extra)}")
        return cls(**d)


@dataclass
class SimReport:
    mechanism: str
    n: int
    makespan: int = 0
    steps: int = 0
    completed: int = 0
    path_exec_time: Dict[int, int] = field(default_factory=dict)
    wait: Dict[int, int] = field(default_factory=dict)
    robot_class: Dict[int, str] = field(default_factory=dict)
    payments: Dict[int, Fraction] = field(default_factory=dict)
    credits: Dict[int, Fraction] = field(default_factory=dict)
    values: Dict[int, Fraction] = field(default_factory=dict)
    collisions: int = 0
    collision_ids: List[int] = field(default_factory=list)
    deadlock: bool = False
    timed_out: bool = False
    step_limit_hit: bool = False
    failures: List[int] = field(default_factory=list)
    ring_overflows: int = 0
    max_ring_occupancy: int = 0
    authority_total: Fraction = Fraction(0)
    # (t, paid, credited, to authority, every paying intersection had outsiders)
    step_money: List[Tuple[int, Fraction, Fraction, Fraction, bool]] = field(default_factory=list)
    negative_payments: List[Tuple[int, int, Fraction]] = field(default_factory=list)
    negative_payoffs: List[Tuple[int, int, Fraction, Fraction]] = field(default_factory=list)
    auction_count: int = 0
    offline_time: float = 0.0
    offline_total: float = 0.0
    auction_time: float = 0.0
    auction_wall: float = 0.0
    planning_time: float = 0.0
    mini_slot: float = 0.06

    @property
    def sum_of_costs(self) -> int:
        return sum(self.path_exec_time.values())

    @property
    def mean_path_exec(self) -> float:
        v = list(self.path_exec_time.values())
        return sum(v) / len(v) if v else 0.0

    @property
    def frac_never_paid(self) -> float:
        if not self.payments:
            return 1.0
        return sum(1 for p in self.payments.values() if p == 0) / len(self.payments)

    def class_means(self) -> Dict[str, Dict[str, float]]:
        out: Dict[str, Dict[str, float]] = {}
        for cls in CLASSES:
            ids = [i for i, c in self.robot_class.items() if c == cls and i in self.wait]
            if ids:
                out[cls] = {
                    "count": len(ids),
                    "mean_wait": sum(self.wait[i] for i in ids) / len(ids),
                    "mean_payment": float(sum(self.payments[i] for i in ids) / len(ids)),
                    "mean_value": float(sum(self.values[i] for i in ids) / len(ids)),
                }
        return out

    def to_dict(self) -> dict:
        return {
            "mechanism": self.mechanism,
            "n": self.n,
            "makespan": self.makespan,
            "steps": self.steps,
            "completed": self.completed,
            "sum_of_costs": self.sum_of_costs,
            "mean_path_exec": self.mean_path_exec,
            "collisions": self.collisions,
            "deadlock": self.deadlock,
            "timed_out": self.timed_out,
            "step_limit_hit": self.step_limit_hit,
            "failures": self.failures,
            "ring_overflows": self.ring_overflows,
            "frac_never_paid": self.frac_never_paid,
            "total_paid": str(sum(self.payments.values(), Fraction(0))),
            "total_credited": str(sum(self.credits.values(), Fraction(0))),
            "authority_total": str(self.authority_total),
            "class_means": self.class_means(),
            "offline_time": self.offline_time,
            "auction_time": self.auction_time,
            "auction_wall": self.auction_wall,
            "planning_time": self.planning_time,
        }


@dataclass
class CollisionReport:
    same_cell: List[int] = field(default_factory=list)
    into_stayer: List[int] = field(default_factory=list)
    swaps: List[int] = field(default_factory=list)

    @property
    def ids(self) -> List[int]:
        return sorted(set(self.same_cell) | set(self.into_stayer) | set(self.swaps))

    def __bool__(self):
        return bool(self.same_cell or self.into_stayer or self.swaps)


def detect_collision(prev: Mapping[int, int], nxt: Mapping[int, int]) -> CollisionReport:
    """Compare robot positions before and after one synchronous move.

    Robots missing from ``prev`` have just entered; robots missing from
    ``nxt`` have left.
    """
    rep = CollisionReport()
    holders: Dict[int, List[int]] = {}
    for r, c in nxt.items():
        holders.setdefault(c, []).append(r)
    for c, rs in holders.items():
        if len(rs) > 1:
            rep.same_cell.extend(rs)
    at_prev = {c: r for r, c in prev.items()}
    for r, c in nxt.items():
        if r not in prev or prev[r] == c:
            continue
        j = at_prev.get(c)
        if j is None or j == r:
            continue
        if nxt.get(j) == c:
            rep.into_stayer.append(r)
        elif nxt.get(j) == prev[r]:
            rep.swaps.extend([r, j])
    rep.same_cell.sort()
    rep.into_stayer.sort()
    rep.swaps = sorted(set(rep.swaps))
    return rep


def detect_deadlock(history: Sequence[Tuple[int, int]], window: int = 10) -> bool:
    """``history`` holds (robots advanced, robots on the road) per step.

    True iff the last ``window`` steps all had robots on the road and none of
    them advanced.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if len(history) < window:
        return False
    return all(adv == 0 and active > 0 for adv, active in history[-window:])


def _fmt(x: Fraction) -> str:
    return str(x)


class Simulation:
    def __init__(self, w: Workspace, robots: Sequence[RobotState], mechanism: str = "sparcas",
                 deadlock_window: int = 10, manager: bool = True, strict: bool = False):
        if mechanism not in ("sparcas", "naive"):
            raise ValueError("Simulation runs the sparcas or naive mechanism")
        self.w = w
        self.robots = sorted(robots, key=lambda r: r.id)
        self.by_id = {r.id: r for r in self.robots}
        self.mechanism = mechanism
        self.window = deadlock_window
        self.manager = manager
        self.strict = strict
        self.t = 0
        self.trace: List[str] = []
        self.audit: List[str] = []
        self.history: List[Tuple[int, int]] = []
        self.interactions: Set[frozenset] = set()
        self.report = SimReport(mechanism, len(self.robots))
        self.deadlocked = False
        self._inject()

    # -- helpers ---------------------------------------------------------

    def active(self) -> List[RobotState]:
        return [r for r in self.robots if r.status == ACTIVE]

    def positions(self) -> Dict[int, int]:
        return {r.id: r.position for r in self.robots if r.status == ACTIVE}

    def ring_occupancy(self) -> List[int]:
        counts = [0] * len(self.w.intersections)
        for r in self.active():
            k = self.w.ring_of(r.position)
            if k is not None:
                counts[k] += 1
        return counts

    def finished(self) -> bool:
        return all(r.status == DONE for r in self.robots)

    def _touch(self, a: int, b: int) -> None:
        if a != b:
            self.interactions.add(frozenset((a, b)))

    def _inject(self) -> None:
        occupied = {r.position for r in self.robots if r.status == ACTIVE}
        holder = {r.position: r.id for r in self.robots if r.status == ACTIVE}
        pending = sorted((r for r in self.robots if r.status == PENDING),
                         key=lambda r: (r.arrival_time, r.id))
        for r in pending:
            if r.arrival_time > self.t:
                continue
            cell = r.path[r.path_index]
            if cell in occupied:
                self._touch(r.id, holder[cell])
                continue
            r.status = ACTIVE
            r.entered_at = self.t
            # time spent queueing for a free start cell counts as waiting
            r.t_wait += self.t - r.arrival_time
            occupied.add(cell)
            holder[cell] = r.id
            if r.path_index == len(r.path) - 1:
                r.status = DONE
                r.done_at = self.t
                occupied.discard(cell)

    # -- one timestep ----------------------------------------------------

    def step(self) -> None:
        t = self.t
        w = self.w
        active = self.active()
        occ = {r.position: r for r in active}
        members: Dict[int, List[RobotState]] = {}
        moves: Dict[int, bool] = {}
        for r in active:
            k = w.ring_of(r.position)
            if k is None:
                k = w.ring_of(r.next_cell)
            if k is None:
                blocker = occ.get(r.next_cell)
                moves[r.id] = blocker is None
                if blocker is not None:
                    self._touch(r.id, blocker.id)
            else:
                members.setdefault(k, []).append(r)

        pay: Dict[int, Fraction] = {}
        collected: Dict[int, Fraction] = {}
        auction_log = []
        t0 = time.perf_counter()
        for k in sorted(members):
            group = members[k]
            ids = {r.id for r in group}
            anns = [Announcement(r.id, r.position, r.next_cell, r.current_value()) for r in group]
            blocked = set()
            for r in group:
                o = occ.get(r.next_cell)
                if o is not None and o.id not in ids:
                    blocked.add(r.next_cell)
                    self._touch(r.id, o.id)
            for a in group:
                for b in group:
                    self._touch(a.id, b.id)
            rb = w.intersections[k]
            if self.mechanism == "sparcas":
                out = mech.sparcas_auction(rb, anns, blocked, manager=self.manager)
                chosen = out.chosen
                payments = out.payments
            else:
                decided = {}
                payments = {}
                for a in anns:
                    others = list(anns)
                    o = occ.get(a.next)
                    if o is not None and o.id not in ids:
                        others.append(Announcement(o.id, o.position, o.next_cell, o.current_value()))
                    d, p = mech.naive_step(a, others)
                    decided[a.robot] = Move.ADVANCE if d == Decision.GO else Move.STAY
                    payments[a.robot] = p
                chosen = mech.Configuration.from_moves(decided)
            self.report.auction_count += 1
            for rid, mv in chosen.items:
                moves[rid] = mv == Move.ADVANCE
            pay.update(payments)
            collected[k] = sum(payments.values(), Fraction(0))
            auction_log.append((k, anns, chosen, payments))
        self.report.auction_wall += time.perf_counter() - t0

        # apply all moves at once
        prev = {r.id: r.position for r in active}
        for r in active:
            if moves[r.id]:
                r.path_index += 1
        nxt = {r.id: r.position for r in active}
        rep = detect_collision(prev, nxt)
        if rep:
            self.report.collisions += 1
            self.report.collision_ids.extend(rep.ids)
            if self.strict:
                raise InvariantViolation(f"collision at t={t}: robots {rep.ids}", self.trace)

        # money and values
        present = [r.id for r in active]
        transfers = mech.redistribute(
            collected, {k: [r.id for r in g] for k, g in members.items()}, present)
        credit: Dict[int, Fraction] = {}
        to_authority = Fraction(0)
        by_k: Dict[int, List[mech.Transfer]] = {}
        for tr in transfers:
            by_k.setdefault(tr.intersection, []).append(tr)
            if tr.payee == AUTHORITY:
                to_authority += tr.amount
            else:
                credit[tr.payee] = credit.get(tr.payee, Fraction(0)) + tr.amount
        for k, anns, chosen, payments in auction_log:
            self.audit.append(mech.audit_record(t, k, anns, chosen, payments, by_k.get(k, [])))
        paid_total = sum(pay.values(), Fraction(0))
        credit_total = sum(credit.values(), Fraction(0))
        self.report.authority_total += to_authority
        outsiders_everywhere = all(tr.payee != AUTHORITY for tr in transfers)
        self.report.step_money.append((t, paid_total, credit_total, to_authority, outsiders_everywhere))

        advanced = 0
        for r in active:
            v = r.current_value()
            p = pay.get(r.id, Fraction(0))
            c = credit.get(r.id, Fraction(0))
            gained = v if moves[r.id] else Fraction(0)
            if moves[r.id]:
                advanced += 1
                r.value += v
            else:
                r.t_wait += 1
            r.paid += p
            r.credited += c
            if p < 0:
                self.report.negative_payments.append((t, r.id, p))
            if r.id in pay and gained - p < 0:
                self.report.negative_payoffs.append((t, r.id, gained, p))
            self.trace.append(
                f"{t}\t{r.id}\t{prev[r.id]}\t{'A' if moves[r.id] else 'S'}\t{_fmt(gained)}\t{_fmt(p)}\t{_fmt(c)}")

        # exits, then arrivals for t + 1
        for r in active:
            if r.path_index == len(r.path) - 1:
                r.status = DONE
                r.done_at = t + 1
        self.t = t + 1
        self._inject()
        occupancy = self.ring_occupancy()
        for k, count in enumerate(occupancy):
            self.report.max_ring_occupancy = max(self.report.max_ring_occupancy, count)
            if count > w.intersections[k].m - 1:
                self.report.ring_overflows += 1
        self.history.append((advanced, len(active)))
        if detect_deadlock(self.history, self.window):
            self.deadlocked = True

    def run(self, step_limit: int, deadline: Optional[float] = None) -> SimReport:
        while not self.finished() and not self.deadlocked:
            if self.t >= step_limit:
                self.report.step_limit_hit = True
                break
            if deadline is not None and time.perf_counter() > deadline:
                self.report.timed_out = True
                break
            self.step()
        return self.finalize()

    def finalize(self) -> SimReport:
        rep = self.report
        rep.deadlock = self.deadlocked
        rep.steps = self.t
        for r in self.robots:
            rep.robot_class[r.id] = r.cls
            rep.payments[r.id] = r.paid
            rep.credits[r.id] = r.credited
            rep.values[r.id] = r.value
            if r.status == DONE:
                rep.path_exec_time[r.id] = r.done_at - r.arrival_time
                rep.wait[r.id] = r.t_wait
        rep.completed = len(rep.path_exec_time)
        done = [r.done_at for r in self.robots if r.status == DONE]
        rep.makespan = max(done) if done else 0
        return rep

    def trace_text(self, header: str = "") -> str:
        lines = [header] if header else []
        lines.extend(self.trace)
        lines.append(f"# end records={len(self.trace)} authority={_fmt(self.report.authority_total)}")
        return "\n".join(lines) + "\n"

    def audit_text(self) -> str:
        return "".join(line + "\n" for line in self.audit)


# --------------------------------------------------------------------------
# robot population

def _workspace_for(config: SimConfig) -> Workspace:
    return cached_grid(config.width, config.height, config.block_spacing)


_GRIDS: Dict[Tuple[int, int, int], Workspace] = {}


def cached_grid(width: int, height: int, spacing: int) -> Workspace:
    key = (width, height, spacing)
    if key not in _GRIDS:
        _GRIDS[key] = generate_grid(width, height, spacing)
    return _GRIDS[key]


def draw_robots(config: SimConfig, w: Workspace) -> List[Tuple[str, int, int, int]]:
    """(class, source, goal, arrival) for each robot, from the seed alone."""
    rng = random.Random(config.seed)
    service = w.service_cells
    horizon = config.arrival_horizon if config.arrival_horizon is not None else w.width
    late = set()
    if config.arrival == "uniform":
        k = int(round(config.n * config.arrival_fraction))
        late = set(rng.sample(range(config.n), k)) if k else set()
    out = []
    for i in range(config.n):
        cls = rng.choice(config.classes)
        src = rng.choice(service)
        goal = rng.choice(service)
        while w.access[goal] == w.access[src]:
            goal = rng.choice(service)
        arrival = int(rng.uniform(0, horizon)) if i in late else 0
        out.append((cls, src, goal, arrival))
    return out


def plan_robot(w: Workspace, rid: int, cls: str, source: int, goal: int, arrival: int) -> RobotState:
    t0 = time.perf_counter()
    path = shortest_path(w, w.access[source], w.access[goal])
    elapsed = time.perf_counter() - t0
    return RobotState(rid, cls, CLASS_WEIGHTS[cls], source, goal, path, arrival,
                      plan_time=elapsed, plan_calls=1)


def make_robots(config: SimConfig, w: Optional[Workspace] = None) -> List[RobotState]:
    w = w or _workspace_for(config)
    return [plan_robot(w, i, *spec) for i, spec in enumerate(draw_robots(config, w))]


def default_step_limit(w: Workspace) -> int:
    return 20 * (w.width + w.height)


@dataclass
class RunResult:
    report: SimReport
    trace: str
    audit: str
    paths: Dict[int, Tuple[int, ...]] = field(default_factory=dict)
    interactions: Set[frozenset] = field(default_factory=set)


def trace_header(config: SimConfig) -> str:
    return TRACE_HEADER + json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))


def run(config: SimConfig, robots: Optional[List[RobotState]] = None,
        strict: bool = False) -> RunResult:
    """Run one experiment; the trace depends only on ``config`` (and ``robots``)."""
    w = _workspace_for(config)
    deadline = None if config.timeout is None else time.perf_counter() + config.timeout
    robots = make_robots(config, w) if robots is None else robots
    step_limit = config.step_limit or default_step_limit(w)
    if config.mechanism == "prioritized":
        return _run_prioritized(config, w, robots, step_limit, deadline)
    sim = Simulation(w, robots, config.mechanism, config.deadlock_window, config.manager, strict)
    rep = sim.run(step_limit, deadline)
    rep.mini_slot = config.mini_slot
    rep.offline_time = max((r.plan_time for r in robots), default=0.0)
    rep.offline_total = sum(r.plan_time for r in robots)
    rep.auction_time = rep.makespan * config.mini_slot
    rep.planning_time = rep.offline_time + rep.auction_time
    return RunResult(rep, sim.trace_text(trace_header(config)), sim.audit_text(),
                     {r.id: r.path.cells for r in robots}, sim.interactions)


def _run_prioritized(config: SimConfig, w: Workspace, robots: List[RobotState],
                     step_limit: int, deadline: Optional[float]) -> RunResult:
    rep = SimReport("prioritized", len(robots), mini_slot=config.mini_slot)
    order = sorted(robots, key=lambda r: (r.arrival_time, r.id))
    reqs = [(w.access[r.source], w.access[r.goal], r.arrival_time) for r in order]
    t0 = time.perf_counter()
    try:
        plans = prioritized_plan(w, reqs, deadline=deadline)
    except TimeoutError:
        plans = []
        rep.timed_out = True
    rep.planning_time = time.perf_counter() - t0
    rep.offline_time = rep.planning_time
    if rep.timed_out:
        rep.planning_time = config.timeout or rep.planning_time
        for r in robots:
            rep.robot_class[r.id] = r.cls
        return RunResult(rep, trace_header(config) + "\n# end records=0 authority=0\n", "")

    timed = {}
    for r, plan in zip(order, plans):
        rep.robot_class[r.id] = r.cls
        rep.payments[r.id] = Fraction(0)
        rep.credits[r.id] = Fraction(0)
        rep.values[r.id] = Fraction(0)
        if plan is None:
            rep.failures.append(r.id)
        else:
            timed[r.id] = plan
    rep.failures.sort()
    trace: List[str] = []
    horizon = max((p.end for p in timed.values()), default=0)
    waits = {rid: 0 for rid in timed}
    robot_by_id = {r.id: r for r in robots}
    for t in range(horizon + 1):
        here = {rid: p.at(t) for rid, p in timed.items() if p.at(t) is not None}
        there = {rid: p.at(t + 1) for rid, p in timed.items() if p.at(t + 1) is not None}
        if detect_collision(here, there):
            rep.collisions += 1
            rep.collision_ids.extend(detect_collision(here, there).ids)
        for rid in sorted(here):
            if t == timed[rid].end:
                continue
            r = robot_by_id[rid]
            moved = there.get(rid) != here[rid]
            v = (waits[rid] + 1) * r.weight if moved else Fraction(0)
            if moved:
                rep.values[rid] += v
            else:
                waits[rid] += 1
            trace.append(f"{t}\t{rid}\t{here[rid]}\t{'A' if moved else 'S'}\t{_fmt(v)}\t0\t0")
    for r in robots:
        if r.id in timed:
            p = timed[r.id]
            rep.path_exec_time[r.id] = p.end - r.arrival_time
            rep.wait[r.id] = p.end - r.arrival_time - (len(p.cells) - 1) + waits[r.id]
    rep.completed = len(rep.path_exec_time)
    rep.makespan = horizon if timed else 0
    rep.steps = rep.makespan
    text = "\n".join([trace_header(config), *trace,
                      f"# end records={len(trace)} authority=0"]) + "\n"
    return RunResult(rep, text, "", {r.id: timed[r.id].cells for r in robots if r.id in timed})


# --------------------------------------------------------------------------
# entry / exit robustness

@dataclass
class EntryExitReport:
    perturbation: dict
    paths_unchanged: bool
    replans: int
    base_collisions: int
    perturbed_collisions: int
    perturbed_deadlock: bool
    budget_balanced: bool
    makespan_delta: Dict[int, int]
    untouched_traces_equal: Optional[bool] = None

    @property
    def ok(self) -> bool:
        return (self.paths_unchanged and self.replans == 0 and self.perturbed_collisions == 0
                and not self.perturbed_deadlock and self.budget_balanced
                and self.untouched_traces_equal is not False)


def _movement(trace: str, skip: Iterable[int] = ()) -> List[Tuple[str, str, str, str]]:
    skip = {str(s) for s in skip}
    out = []
    for line in trace.splitlines():
        if line.startswith("#"):
            continue
        t, rid, cell, act = line.split("\t")[:4]
        if rid not in skip:
            out.append((t, rid, cell, act))
    return out


def budget_balanced(rep: SimReport) -> bool:
    return all(paid == credited + auth for _, paid, credited, auth, _ in rep.step_money)


def entry_exit_check(config: SimConfig, perturbation: Mapping) -> EntryExitReport:
    """Run ``config`` with and without one robot and compare.

    ``perturbation`` is ``{"remove": robot_id}`` or ``{"add": {"cls", "source",
    "goal", "arrival"}}``.  Surviving robots keep the path they planned
    offline; they are never asked to plan again.
    """
    w = _workspace_for(config)
    base_robots = make_robots(config, w)
    base = run(config, base_robots)
    survivors = [RobotState(r.id, r.cls, r.weight, r.source, r.goal, r.path, r.arrival_time,
                            plan_time=r.plan_time, plan_calls=r.plan_calls)
                 for r in base_robots]
    removed: List[int] = []
    if "remove" in perturbation:
        rid = perturbation["remove"]
        survivors = [r for r in survivors if r.id != rid]
        removed.append(rid)
    elif "add" in perturbation:
        spec = perturbation["add"]
        new_id = max((r.id for r in survivors), default=-1) + 1
        survivors.append(plan_robot(w, new_id, spec["cls"], spec["source"], spec["goal"],
                                    spec.get("arrival", 0)))
        removed.append(new_id)
    else:
        raise ValueError("perturbation must contain 'remove' or 'add'")
    pert = run(config, survivors)
    base_paths = base.paths
    unchanged = all(base_paths[r.id] == r.path.cells for r in survivors if r.id in base_paths)
    replans = sum(r.plan_calls - 1 for r in survivors if r.id in base_paths)
    delta = {rid: pert.report.path_exec_time.get(rid, -1) - base.report.path_exec_time.get(rid, -1)
             for rid in base.report.path_exec_time if rid not in removed}
    untouched = None
    if "remove" in perturbation:
        rid = perturbation["remove"]
        if not any(rid in pair for pair in base.interactions):
            untouched = _movement(base.trace, removed) == _movement(pert.trace, removed)
    return EntryExitReport(dict(perturbation), unchanged, replans, base.report.collisions,
                           pert.report.collisions, pert.report.deadlock,
                           budget_balanced(pert.report), delta, untouched)


__all__ = [
    "CLASS_WEIGHTS", "RobotState", "SimConfig", "SimReport", "Simulation", "run",
    "detect_collision", "detect_deadlock", "entry_exit_check", "make_robots",
    "InvariantViolation", "Unreachable",
]
