"""Directed road grid with slotted lanes and roundabout intersections.

The generated pattern is a lattice of two-cell-wide road bands (one lane per
direction, right-hand traffic) spaced ``block_spacing`` cells apart.  Every
crossing of a horizontal and a vertical band is a 2x2 roundabout of four ring
slots circulating counter-clockwise (north up).  Lanes that run off the edge
of the grid U-turn into the opposite lane of their band.  Non-road cells next
to a lane are service cells where robots start and finish.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple

LANE = "lane"
RING = "ring"
SERVICE = "service"

# (drow, dcol) for each compass direction; row grows southwards.
DIRECTIONS = {"N": (-1, 0), "S": (1, 0), "E": (0, 1), "W": (0, -1)}

MIN_SIZE = 8
MIN_SPACING = 4
DEFAULT_SPACING = 7


class WorkspaceError(ValueError):
    """Invalid workspace parameters or an invalid cell reference."""


class WorkspaceParseError(WorkspaceError):
    def __init__(self, line: int, fieldname: str, message: str):
        super().__init__(f"line {line}: field '{fieldname}': {message}")
        self.line = line
        self.field = fieldname


@dataclass(frozen=True)
class Cell:
    id: int
    kind: str  # LANE, RING or SERVICE
    row: int
    col: int
    direction: Optional[str] = None  # lanes only
    intersection: Optional[int] = None  # ring slots only
    ring_pos: Optional[int] = None  # ring slots only


@dataclass(frozen=True)
class Roundabout:
    """A ring of ``m`` slots with unidirectional flow.

    ``ring[p]`` is followed by ``ring[(p + 1) % m]``.  ``entries`` maps an
    approach-lane cell to the ring position it feeds; ``exits`` maps a ring
    position to the departure-lane cell it feeds.
    """

    id: int
    ring: Tuple[int, ...]
    entries: Mapping[int, int]
    exits: Mapping[int, int]

    @property
    def m(self) -> int:
        return len(self.ring)

    def __hash__(self):
        return hash((self.id, self.ring))


@dataclass(frozen=True, eq=True)
class Workspace:
    width: int
    height: int
    cells: Tuple[Cell, ...]
    intersections: Tuple[Roundabout, ...]
    successor: Mapping[int, FrozenSet[int]]
    # service cell -> lane cell where the robot joins or leaves the road
    access: Mapping[int, int] = field(default_factory=dict)

    # derived lookups, rebuilt on construction
    _ring_of: Dict[int, int] = field(default_factory=dict, compare=False, repr=False)
    _by_coord: Dict[Tuple[int, int], int] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        for k, rb in enumerate(self.intersections):
            if rb.id != k:
                raise WorkspaceError(f"roundabout {rb.id} stored at index {k}")
            for c in rb.ring:
                self._ring_of[c] = k
        for cell in self.cells:
            self._by_coord[(cell.row, cell.col)] = cell.id

    def __hash__(self):
        return id(self)

    @property
    def size(self) -> int:
        return len(self.cells)

    def cell(self, c: int) -> Cell:
        if not isinstance(c, int) or not 0 <= c < len(self.cells):
            raise WorkspaceError(f"invalid cell id {c!r}")
        return self.cells[c]

    def at(self, row: int, col: int) -> Optional[int]:
        return self._by_coord.get((row, col))

    def ring_of(self, c: int) -> Optional[int]:
        """Index of the roundabout whose ring contains ``c``, else None."""
        return self._ring_of.get(c)

    def is_road(self, c: int) -> bool:
        return self.cells[c].kind != SERVICE

    @property
    def service_cells(self) -> List[int]:
        return [c.id for c in self.cells if c.kind == SERVICE]

    @property
    def road_cells(self) -> List[int]:
        return [c.id for c in self.cells if c.kind != SERVICE]

    def manhattan(self, a: int, b: int) -> int:
        ca, cb = self.cells[a], self.cells[b]
        return abs(ca.row - cb.row) + abs(ca.col - cb.col)


def successors(w: Workspace, c: int) -> FrozenSet[int]:
    """Legal next cells of ``c`` under the traffic rules."""
    w.cell(c)
    return w.successor[c]


def _band_starts(size: int, spacing: int) -> Tuple[List[int], int]:
    count = (size - 2) // spacing + 1
    if count >= 2:
        return [k * spacing for k in range(count)], (count - 1) * spacing + 2
    return [0], size


def generate_grid(width: int, height: int, block_spacing: int = DEFAULT_SPACING) -> Workspace:
    """Build the regular roundabout lattice.

    Sizes are rounded down to ``(k - 1) * block_spacing + 2`` so that road
    bands sit on both borders; with spacing 7 this reproduces the sizes
    16, 100, 198, 401 and 499.  A dimension holding a single band keeps its
    requested size and its lanes U-turn at the far edge.
    """
    if width < MIN_SIZE or height < MIN_SIZE:
        raise WorkspaceError(
            f"workspace {width}x{height} cannot hold a roundabout with service "
            f"cells; both dimensions must be >= {MIN_SIZE}")
    if block_spacing < MIN_SPACING:
        raise WorkspaceError(f"block_spacing must be >= {MIN_SPACING}, got {block_spacing}")

    row_bands, height = _band_starts(height, block_spacing)
    col_bands, width = _band_starts(width, block_spacing)
    road_rows = {b: "W" for b in row_bands} | {b + 1: "E" for b in row_bands}
    road_cols = {b: "S" for b in col_bands} | {b + 1: "N" for b in col_bands}

    kinds: Dict[Tuple[int, int], Tuple[str, Optional[str]]] = {}
    for r in range(height):
        for c in range(width):
            if r in road_rows and c in road_cols:
                kinds[(r, c)] = (RING, None)
            elif r in road_rows:
                kinds[(r, c)] = (LANE, road_rows[r])
            elif c in road_cols:
                kinds[(r, c)] = (LANE, road_cols[c])
    for r in range(height):
        for c in range(width):
            if (r, c) in kinds:
                continue
            for dr, dc in DIRECTIONS.values():
                if kinds.get((r + dr, c + dc), (None,))[0] == LANE:
                    kinds[(r, c)] = (SERVICE, None)
                    break

    ids = {rc: i for i, rc in enumerate(sorted(kinds))}

    # ring slots in traversal order: NW -> SW -> SE -> NE
    corners = [(0, 0), (1, 0), (1, 1), (0, 1)]
    exit_dir = ["W", "S", "E", "N"]
    entry_from = ["N", "W", "S", "E"]
    ring_meta: Dict[Tuple[int, int], Tuple[int, int]] = {}
    intersections: List[Roundabout] = []
    for br in row_bands:
        for bc in col_bands:
            k = len(intersections)
            ring = tuple(ids[(br + dr, bc + dc)] for dr, dc in corners)
            entries: Dict[int, int] = {}
            exits: Dict[int, int] = {}
            for p, (dr, dc) in enumerate(corners):
                r, c = br + dr, bc + dc
                ring_meta[(r, c)] = (k, p)
                er, ec = DIRECTIONS[exit_dir[p]]
                if kinds.get((r + er, c + ec), (None,))[0] == LANE:
                    exits[p] = ids[(r + er, c + ec)]
                nr, nc = DIRECTIONS[entry_from[p]]
                if kinds.get((r + nr, c + nc), (None,))[0] == LANE:
                    entries[ids[(r + nr, c + nc)]] = p
            intersections.append(Roundabout(k, ring, entries, exits))

    cells: List[Cell] = []
    succ: Dict[int, FrozenSet[int]] = {}
    access: Dict[int, int] = {}
    for (r, c), i in ids.items():
        kind, d = kinds[(r, c)]
        if kind == RING:
            k, p = ring_meta[(r, c)]
            rb = intersections[k]
            cells.append(Cell(i, RING, r, c, intersection=k, ring_pos=p))
            nxt = {rb.ring[(p + 1) % 4]}
            if p in rb.exits:
                nxt.add(rb.exits[p])
            succ[i] = frozenset(nxt)
        elif kind == LANE:
            cells.append(Cell(i, LANE, r, c, direction=d))
            dr, dc = DIRECTIONS[d]
            target = (r + dr, c + dc)
            if target not in kinds or kinds[target][0] == SERVICE:
                target = _uturn(r, c, d)
            succ[i] = frozenset({ids[target]})
        else:
            cells.append(Cell(i, SERVICE, r, c))
            lanes = [ids[(r + dr, c + dc)] for dr, dc in DIRECTIONS.values()
                     if kinds.get((r + dr, c + dc), (None,))[0] == LANE]
            access[i] = min(lanes)
            succ[i] = frozenset({access[i]})

    w = Workspace(width, height, tuple(cells), tuple(intersections), succ, access)
    check_invariants(w)
    return w


def _uturn(r: int, c: int, d: str) -> Tuple[int, int]:
    # the opposite lane of the band sits on the driver's left
    return {"W": (r + 1, c), "E": (r - 1, c), "S": (r, c + 1), "N": (r, c - 1)}[d]


def standalone_roundabout(m: int, approach: int = 2) -> Workspace:
    """A single ring of ``m`` slots, each with one entry and one exit lane.

    Used for auction instances with m != 4.  Each slot gets an incoming lane
    and an outgoing lane of ``approach`` cells; the outgoing lane loops back
    to the incoming lane of the same slot so the graph is strongly connected.
    Coordinates are synthetic (slot p sits at column 3p of row 0).
    """
    if m < 3:
        raise WorkspaceError("roundabout capacity must be >= 3")
    cells: List[Cell] = []

    def add(kind, row, col, **kw):
        cells.append(Cell(len(cells), kind, row, col, **kw))
        return cells[-1].id

    ring = tuple(add(RING, 0, 3 * p, intersection=0, ring_pos=p) for p in range(m))
    entries: Dict[int, int] = {}
    exits: Dict[int, int] = {}
    succ: Dict[int, set] = {c: {ring[(p + 1) % m]} for p, c in enumerate(ring)}
    for p in range(m):
        # inbound[-1] and outbound[0] touch the ring
        inbound = [add(LANE, approach - j, 3 * p, direction="N") for j in range(approach)]
        outbound = [add(LANE, 1 + j, 3 * p + 1, direction="S") for j in range(approach)]
        for a, b in zip(inbound, inbound[1:]):
            succ[a] = {b}
        for a, b in zip(outbound, outbound[1:]):
            succ[a] = {b}
        succ[inbound[-1]] = {ring[p]}
        succ[outbound[-1]] = {inbound[0]}
        entries[inbound[-1]] = p
        exits[p] = outbound[0]
        succ[ring[p]].add(outbound[0])
    rb = Roundabout(0, ring, entries, exits)
    frozen = {c: frozenset(s) for c, s in succ.items()}
    return Workspace(1 + 3 * m, 1 + approach, tuple(cells), (rb,), frozen, {})


def strongly_connected_road(w: Workspace) -> bool:
    road = w.road_cells
    if not road:
        return True
    pred: Dict[int, List[int]] = {c: [] for c in road}
    for c in road:
        for s in w.successor[c]:
            pred[s].append(c)
    for adj in (lambda c: w.successor[c], lambda c: pred[c]):
        seen = {road[0]}
        queue = deque([road[0]])
        while queue:
            for nb in adj(queue.popleft()):
                if nb not in seen:
                    seen.add(nb)
                    queue.append(nb)
        if len(seen) != len(road):
            return False
    return True


# --------------------------------------------------------------------------
# text format

FORMAT_HEADER = "sparcas-workspace v1"


def serialize(w: Workspace) -> str:
    m = w.intersections[0].m if w.intersections else 0
    lines = [FORMAT_HEADER, f"width {w.width}", f"height {w.height}", f"m {m}",
             f"cells {len(w.cells)}", f"roundabouts {len(w.intersections)}"]
    for cell in w.cells:
        if cell.kind == LANE:
            kind = f"lane:{cell.direction}"
        elif cell.kind == RING:
            kind = f"ring:{cell.intersection}:{cell.ring_pos}"
        else:
            kind = f"service:{w.access[cell.id]}"
        succ = ",".join(str(s) for s in sorted(w.successor[cell.id]))
        lines.append(f"cell {cell.id} {kind} {cell.row} {cell.col} -> {succ}")
    for rb in w.intersections:
        ring = ",".join(map(str, rb.ring))
        entries = ",".join(f"{c}:{p}" for c, p in sorted(rb.entries.items())) or "-"
        exits = ",".join(f"{p}:{c}" for p, c in sorted(rb.exits.items())) or "-"
        lines.append(f"roundabout {rb.id} ring={ring} entries={entries} exits={exits}")
    return "\n".join(lines) + "\n"


def _int(tok: str, line: int, name: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise WorkspaceParseError(line, name, f"expected integer, got {tok!r}") from None


def _pairs(tok: str, line: int, name: str) -> List[Tuple[int, int]]:
    if tok == "-":
        return []
    out = []
    for item in tok.split(","):
        a, sep, b = item.partition(":")
        if not sep:
            raise WorkspaceParseError(line, name, f"expected a:b pair, got {item!r}")
        out.append((_int(a, line, name), _int(b, line, name)))
    return out


def parse(text: str) -> Workspace:
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise WorkspaceParseError(1, "header", "empty input")
    if lines[0].strip() != FORMAT_HEADER:
        raise WorkspaceParseError(1, "header", f"expected {FORMAT_HEADER!r}")
    header: Dict[str, int] = {}
    for no, name in enumerate(("width", "height", "m", "cells", "roundabouts"), start=2):
        if no > len(lines):
            raise WorkspaceParseError(no, name, "missing header line")
        parts = lines[no - 1].split()
        if len(parts) != 2 or parts[0] != name:
            raise WorkspaceParseError(no, name, f"expected '{name} <int>'")
        header[name] = _int(parts[1], no, name)

    cells: List[Cell] = []
    succ: Dict[int, FrozenSet[int]] = {}
    access: Dict[int, int] = {}
    rbs: List[Roundabout] = []
    body = lines[6:]
    expected = header["cells"] + header["roundabouts"]
    if len(body) != expected:
        raise WorkspaceParseError(len(lines) + 1, "records",
                                  f"expected {expected} records, found {len(body)}")
    for offset, raw in enumerate(body):
        no = offset + 7
        parts = raw.split()
        if offset < header["cells"]:
            if len(parts) != 7 or parts[0] != "cell" or parts[5] != "->":
                if len(parts) == 6 and parts[0] == "cell" and parts[5] == "->":
                    parts.append("")
                else:
                    raise WorkspaceParseError(no, "cell", "expected 'cell <id> <kind> <row> <col> -> <succ>'")
            cid = _int(parts[1], no, "id")
            if cid != offset:
                raise WorkspaceParseError(no, "id", f"expected id {offset}, got {cid}")
            row, col = _int(parts[3], no, "row"), _int(parts[4], no, "col")
            kind = parts[2].split(":")
            if kind[0] == LANE and len(kind) == 2 and kind[1] in DIRECTIONS:
                cells.append(Cell(cid, LANE, row, col, direction=kind[1]))
            elif kind[0] == RING and len(kind) == 3:
                cells.append(Cell(cid, RING, row, col, intersection=_int(kind[1], no, "kind"),
                                  ring_pos=_int(kind[2], no, "kind")))
            elif kind[0] == SERVICE and len(kind) == 2:
                cells.append(Cell(cid, SERVICE, row, col))
                access[cid] = _int(kind[1], no, "kind")
            else:
                raise WorkspaceParseError(no, "kind", f"unknown cell kind {parts[2]!r}")
            targets = [_int(s, no, "successors") for s in parts[6].split(",") if s]
            succ[cid] = frozenset(targets)
        else:
            if len(parts) != 5 or parts[0] != "roundabout":
                raise WorkspaceParseError(no, "roundabout", "expected 'roundabout <id> ring= entries= exits='")
            rid = _int(parts[1], no, "id")
            fields_ = {}
            for tok, name in zip(parts[2:], ("ring", "entries", "exits")):
                key, sep, val = tok.partition("=")
                if key != name or not sep:
                    raise WorkspaceParseError(no, name, f"expected '{name}=...'")
                fields_[name] = val
            ring = tuple(_int(s, no, "ring") for s in fields_["ring"].split(","))
            entries = dict(_pairs(fields_["entries"], no, "entries"))
            exits = dict(_pairs(fields_["exits"], no, "exits"))
            rbs.append(Roundabout(rid, ring, entries, exits))

    n = len(cells)
    for cid, targets in succ.items():
        for t in targets:
            if not 0 <= t < n:
                raise WorkspaceParseError(7 + cid, "successors", f"unknown cell {t}")
    try:
        w = Workspace(header["width"], header["height"], tuple(cells), tuple(rbs), succ, access)
    except WorkspaceError as exc:
        raise WorkspaceParseError(7 + header["cells"], "roundabout", str(exc)) from None
    check_invariants(w)
    return w


def check_invariants(w: Workspace) -> None:
    """Raise WorkspaceError if structural invariants do not hold."""
    n = len(w.cells)
    for rb in w.intersections:
        if rb.m < 3:
            raise WorkspaceError(f"roundabout {rb.id}: capacity {rb.m} < 3")
        if len(set(rb.ring)) != rb.m:
            raise WorkspaceError(f"roundabout {rb.id}: repeated ring cells")
        for p, c in enumerate(rb.ring):
            cell = w.cells[c]
            if cell.kind != RING or cell.intersection != rb.id or cell.ring_pos != p:
                raise WorkspaceError(f"roundabout {rb.id}: cell {c} is not ring slot {p}")
            ring_next = [s for s in w.successor[c] if w.ring_of(s) == rb.id]
            if ring_next != [rb.ring[(p + 1) % rb.m]]:
                raise WorkspaceError(f"roundabout {rb.id}: ring does not cycle at slot {p}")
        for lane, p in rb.entries.items():
            if not (0 <= lane < n and 0 <= p < rb.m) or rb.ring[p] not in w.successor[lane]:
                raise WorkspaceError(f"roundabout {rb.id}: bad entry {lane}->{p}")
        for p, lane in rb.exits.items():
            if not (0 <= lane < n and 0 <= p < rb.m) or lane not in w.successor[rb.ring[p]]:
                raise WorkspaceError(f"roundabout {rb.id}: bad exit {p}->{lane}")
    for cell in w.cells:
        if cell.kind == LANE and len(w.successor[cell.id]) != 1:
            raise WorkspaceError(f"lane cell {cell.id} has {len(w.successor[cell.id])} successors")
        if cell.kind == RING and w.ring_of(cell.id) is None:
            raise WorkspaceError(f"ring cell {cell.id} belongs to no roundabout")
        if cell.kind == SERVICE and w.access.get(cell.id) not in w.successor[cell.id]:
            raise WorkspaceError(f"service cell {cell.id} has no access lane")
    # a lane cell fed from two directions would need its own contest
    for c, count in lane_predecessor_counts(w).items():
        if count != 1:
            raise WorkspaceError(f"lane cell {c} has {count} predecessors")


def lane_predecessor_counts(w: Workspace) -> Dict[int, int]:
    """Number of road predecessors of every lane cell."""
    counts = {c.id: 0 for c in w.cells if c.kind == LANE}
    for c in w.road_cells:
        for s in w.successor[c]:
            if s in counts:
                counts[s] += 1
    return counts


def ring_cells(w: Workspace) -> Iterable[int]:
    for rb in w.intersections:
        yield from rb.ring
