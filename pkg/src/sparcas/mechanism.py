"""Per-intersection spot auctions.

All money is held as :class:`fractions.Fraction` so that budget balance can be
checked with exact equality.  Configurations are enumerated once per
instance; the efficient choice and every exclusion choice are argmaxes over
that same feasible set with different objectives.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from enum import Enum, IntEnum
from fractions import Fraction
from typing import (Callable, Collection, Dict, Iterable, List, Mapping, Optional,
                    Sequence, Tuple, Union)

from .workspace import Roundabout

AUTHORITY = "authority"


class MechanismError(ValueError):
    pass


class Move(IntEnum):
    # Stay < Advance fixes the tie-break order
    STAY = 0
    ADVANCE = 1


class Decision(Enum):
    GO = "go"
    STOP = "stop"


@dataclass(frozen=True)
class Announcement:
    robot: int
    current: int
    next: int
    reported_value: Fraction

    def __post_init__(self):
        if self.reported_value < 0:
            raise MechanismError(f"robot {self.robot}: negative reported value")


@dataclass(frozen=True)
class Configuration:
    """Stay/advance decision for each participant, ordered by robot id."""

    items: Tuple[Tuple[int, Move], ...]

    @classmethod
    def from_moves(cls, moves: Mapping[int, Move]) -> "Configuration":
        return cls(tuple(sorted((r, Move(m)) for r, m in moves.items())))

    @property
    def moves(self) -> Dict[int, Move]:
        return dict(self.items)

    @property
    def key(self) -> Tuple[int, ...]:
        return tuple(int(m) for _, m in self.items)

    def advancing(self) -> List[int]:
        return [r for r, m in self.items if m == Move.ADVANCE]


@dataclass(frozen=True)
class AuctionOutcome:
    chosen: Configuration
    payments: Dict[int, Fraction]
    welfare: Fraction


@dataclass(frozen=True)
class Transfer:
    payee: Union[int, str]  # robot id or AUTHORITY
    amount: Fraction
    intersection: int


# test hooks used by ``sparcas verify --mutate``; never set in normal runs
_MUTATION: Optional[str] = None
MUTATIONS = ("tie-break", "payment-sign")


def set_mutation(name: Optional[str]) -> None:
    global _MUTATION
    if name is not None and name not in MUTATIONS:
        raise MechanismError(f"unknown mutation {name!r}")
    _MUTATION = name


def valuation(a: Configuration, ann: Announcement) -> Fraction:
    moves = a.moves
    if ann.robot not in moves:
        raise MechanismError(f"robot {ann.robot} is not part of the configuration")
    return ann.reported_value if moves[ann.robot] == Move.ADVANCE else Fraction(0)


def _validate(r: Roundabout, anns: Sequence[Announcement]) -> None:
    ring = set(r.ring)
    exits = set(r.exits.values())
    seen_robots = set()
    seen_cells = set()
    for a in anns:
        if a.robot in seen_robots:
            raise MechanismError(f"robot {a.robot} announced twice")
        if a.current in seen_cells:
            raise MechanismError(f"two robots announced cell {a.current}")
        seen_robots.add(a.robot)
        seen_cells.add(a.current)
        if a.current in ring:
            p = r.ring.index(a.current)
            legal = {r.ring[(p + 1) % r.m], a.current}
            if p in r.exits:
                legal.add(r.exits[p])
        elif a.current in r.entries:
            legal = {r.ring[r.entries[a.current]], a.current}
        else:
            raise MechanismError(
                f"robot {a.robot}: cell {a.current} is neither in roundabout {r.id} nor one of its entries")
        if a.next not in legal:
            raise MechanismError(
                f"robot {a.robot}: move {a.current}->{a.next} does not follow roundabout {r.id}")
        if a.current not in ring and a.next not in ring and a.next not in exits:
            raise MechanismError(f"robot {a.robot} does not take part in roundabout {r.id}")


def feasible_configurations(r: Roundabout, anns: Collection[Announcement],
                            blocked: Collection[int] = frozenset()) -> List[Configuration]:
    """Every collision-free stay/advance assignment for the participants.

    ``blocked`` holds cells occupied by robots outside the auction; nobody
    may advance into them.  Returned in lexicographic order of
    :attr:`Configuration.key`, so the all-stay assignment comes first.
    """
    anns = sorted(anns, key=lambda a: a.robot)
    _validate(r, anns)
    ring = set(r.ring)
    blocked = set(blocked)
    n = len(anns)
    cur = [a.current for a in anns]
    nxt = [a.next for a in anns]
    options = []
    for a in anns:
        can_move = a.next != a.current and a.next not in blocked
        options.append((Move.STAY, Move.ADVANCE) if can_move else (Move.STAY,))
    in_ring_now = sum(1 for c in cur if c in ring)

    out: List[Configuration] = []
    moves: List[Move] = [Move.STAY] * n
    target: List[int] = [0] * n

    def compatible(i: int) -> bool:
        for j in range(i):
            if target[i] == target[j]:
                return False
            ai, aj = moves[i] == Move.ADVANCE, moves[j] == Move.ADVANCE
            if ai and not aj and nxt[i] == cur[j]:
                return False
            if aj and not ai and nxt[j] == cur[i]:
                return False
            if ai and aj and nxt[i] == cur[j] and nxt[j] == cur[i]:
                return False
        return True

    def within_capacity() -> bool:
        entering = False
        occupancy = in_ring_now
        for i in range(n):
            if moves[i] == Move.ADVANCE:
                was, will = cur[i] in ring, nxt[i] in ring
                if will and not was:
                    entering = True
                    occupancy += 1
                elif was and not will:
                    occupancy -= 1
        return not entering or occupancy <= r.m - 1

    def extend(i: int) -> None:
        if i == n:
            if within_capacity():
                out.append(Configuration(tuple((anns[k].robot, moves[k]) for k in range(n))))
            return
        for mv in options[i]:
            moves[i] = mv
            target[i] = nxt[i] if mv == Move.ADVANCE else cur[i]
            if compatible(i):
                extend(i + 1)
        moves[i] = Move.STAY

    extend(0)
    return out


def _welfare(cfg: Configuration, values: Mapping[int, Fraction]) -> Fraction:
    return sum((values[r] for r, m in cfg.items if m == Move.ADVANCE), Fraction(0))


def _argmax(feasible: Sequence[Configuration], values: Mapping[int, Fraction]) -> Configuration:
    best: List[Configuration] = []
    best_w: Optional[Fraction] = None
    for cfg in feasible:  # lexicographic order
        wv = _welfare(cfg, values)
        if best_w is None or wv > best_w:
            best_w, best = wv, [cfg]
        elif wv == best_w:
            best.append(cfg)
    if _MUTATION == "tie-break":
        return random.SystemRandom().choice(best)
    return best[0]


def efficient_configuration(r: Roundabout, anns: Collection[Announcement],
                            blocked: Collection[int] = frozenset()) -> Configuration:
    if not anns:
        raise MechanismError("no announcements")
    feasible = feasible_configurations(r, anns, blocked)
    return _argmax(feasible, {a.robot: a.reported_value for a in anns})


def exclusion_configuration(r: Roundabout, anns: Collection[Announcement], excluded: int,
                            blocked: Collection[int] = frozenset()) -> Configuration:
    """Welfare-maximizing configuration for everybody except ``excluded``.

    The excluded robot keeps its body in the instance (it still occupies its
    cell and may be moved if that helps the others) but its value no longer
    counts towards the objective.
    """
    values = {a.robot: a.reported_value for a in anns}
    if excluded not in values:
        raise MechanismError(f"robot {excluded} did not announce")
    values[excluded] = Fraction(0)
    return _argmax(feasible_configurations(r, anns, blocked), values)


def _outcome(r: Roundabout, anns: Sequence[Announcement],
             blocked: Collection[int]) -> AuctionOutcome:
    feasible = feasible_configurations(r, anns, blocked)
    values = {a.robot: a.reported_value for a in anns}
    chosen = _argmax(feasible, values)
    welfare = _welfare(chosen, values)
    payments: Dict[int, Fraction] = {}
    for a in anns:
        others = dict(values)
        others[a.robot] = Fraction(0)
        excl = _argmax(feasible, others)
        pay = _welfare(excl, others) - _welfare(chosen, others)
        payments[a.robot] = -pay if _MUTATION == "payment-sign" else pay
    return AuctionOutcome(chosen, payments, welfare)


def sparcas_auction(r: Roundabout, anns: Collection[Announcement],
                    blocked: Collection[int] = frozenset(),
                    manager: bool = True) -> AuctionOutcome:
    """Efficient allocation plus externality payments at one roundabout.

    With ``manager=True`` the outcome is computed once, as an intersection
    manager would.  Otherwise every participant evaluates the auction on its
    own copy of the announcements and only its own decision and payment are
    kept, which is what the fully decentralized protocol does.
    """
    anns = sorted(anns, key=lambda a: a.robot)
    if not anns:
        raise MechanismError("no announcements")
    if manager:
        return _outcome(r, anns, blocked)
    moves: Dict[int, Move] = {}
    payments: Dict[int, Fraction] = {}
    welfare = None
    for a in anns:
        local = _outcome(r, list(anns), blocked)
        moves[a.robot] = local.chosen.moves[a.robot]
        payments[a.robot] = local.payments[a.robot]
        welfare = local.welfare
    return AuctionOutcome(Configuration.from_moves(moves), payments, welfare)


def naive_step(me: Announcement, others: Iterable[Announcement]) -> Tuple[Decision, Fraction]:
    """One robot's decision under the first-come pairwise contest.

    Robots whose target is currently occupied stop without bidding.  Among
    the rest, robots sharing a target cell contest it: the highest value
    wins (ties go to the lower id) and pays the highest losing bid.
    """
    others = [o for o in others if o.robot != me.robot]
    if any(o.current == me.next for o in others):
        return Decision.STOP, Fraction(0)
    rivals = [o for o in others if o.next == me.next and o.next != o.current]
    for o in rivals:
        if o.reported_value > me.reported_value or (
                o.reported_value == me.reported_value and o.robot < me.robot):
            return Decision.STOP, Fraction(0)
    if not rivals:
        return Decision.GO, Fraction(0)
    return Decision.GO, max(o.reported_value for o in rivals)


def redistribute(collected: Mapping[int, Fraction],
                 participants: Mapping[int, Collection[int]],
                 present: Iterable[int]) -> List[Transfer]:
    """Split each intersection's takings equally among non-participants.

    When every robot present took part in that intersection, the takings
    go to the authority instead.
    """
    present = sorted(set(present))
    transfers: List[Transfer] = []
    for k in sorted(collected):
        total = collected[k]
        if total < 0:
            raise MechanismError(f"intersection {k}: negative total {total}")
        if total == 0:
            continue
        inside = set(participants.get(k, ()))
        outside = [i for i in present if i not in inside]
        if not outside:
            transfers.append(Transfer(AUTHORITY, total, k))
            continue
        share = total / len(outside)
        transfers.extend(Transfer(i, share, k) for i in outside)
    return transfers


# --------------------------------------------------------------------------
# audit log: one JSON object per line and per (t, intersection)

def _frac(x: Fraction) -> str:
    return str(x)


def audit_record(t: int, k: int, anns: Sequence[Announcement], chosen: Configuration,
                 payments: Mapping[int, Fraction], transfers: Sequence[Transfer]) -> str:
    rec = {
        "t": t,
        "k": k,
        "anns": [[a.robot, a.current, a.next, _frac(a.reported_value)]
                 for a in sorted(anns, key=lambda a: a.robot)],
        "chosen": [[r, "A" if m == Move.ADVANCE else "S"] for r, m in chosen.items],
        "payments": [[r, _frac(payments[r])] for r in sorted(payments)],
        "transfers": [[tr.payee, _frac(tr.amount)] for tr in transfers],
    }
    return json.dumps(rec, separators=(",", ":"))


@dataclass(frozen=True)
class AuditEntry:
    t: int
    k: int
    anns: Tuple[Announcement, ...]
    chosen: Configuration
    payments: Dict[int, Fraction]
    transfers: Tuple[Transfer, ...]


def parse_audit_line(line: str, lineno: int = 0) -> AuditEntry:
    try:
        rec = json.loads(line)
        anns = tuple(Announcement(r, c, n, Fraction(v)) for r, c, n, v in rec["anns"])
        chosen = Configuration(tuple((r, Move.ADVANCE if m == "A" else Move.STAY)
                                     for r, m in rec["chosen"]))
        payments = {r: Fraction(p) for r, p in rec["payments"]}
        transfers = tuple(Transfer(p, Fraction(a), rec["k"]) for p, a in rec["transfers"])
        return AuditEntry(rec["t"], rec["k"], anns, chosen, payments, transfers)
    except (ValueError, KeyError, TypeError) as exc:
        raise MechanismError(f"audit line {lineno}: {exc}") from None


AuctionFn = Callable[..., AuctionOutcome]
