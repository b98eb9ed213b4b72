from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from sparcas.workspace import (
    LANE, RING, SERVICE, DIRECTIONS, WorkspaceError, WorkspaceParseError, check_invariants,
    generate_grid, lane_predecessor_counts, parse, serialize, standalone_roundabout,
    strongly_connected_road, successors,
)

GOLDEN = Path(__file__).parent / "golden"


# independent geometry helpers ------------------------------------------------

def full_road_lines(w):
    """Rows and columns made entirely of road cells, found by scanning coordinates."""
    rows = [r for r in range(w.height)
            if all(w.at(r, c) is not None and w.is_road(w.at(r, c)) for c in range(w.width))]
    cols = [c for c in range(w.width)
            if all(w.at(r, c) is not None and w.is_road(w.at(r, c)) for r in range(w.height))]
    return rows, cols


def left_of(d):
    return {"N": "W", "W": "S", "S": "E", "E": "N"}[d]


OPPOSITE = {"N": "S", "S": "N", "E": "W", "W": "E"}


# sizes ---------------------------------------------------------------------

@pytest.mark.parametrize("req, size", [(16, 16), (100, 100), (198, 198), (401, 401), (499, 499),
                                       (20, 16), (105, 100)])
def test_sizes_round_to_band_lattice(req, size):
    # bands at 0, 7, 14, ... each two cells wide; the last band closes the grid
    assert (size - 2) % 7 == 0
    w = generate_grid(req, req)
    assert (w.width, w.height) == (size, size)


def test_small_grid_has_one_roundabout():
    w = generate_grid(8, 8)
    assert len(w.intersections) == 1
    check_invariants(w)
    assert strongly_connected_road(w)


@pytest.mark.parametrize("width, height", [(7, 10), (10, 3), (0, 0)])
def test_too_small_rejected(width, height):
    with pytest.raises(WorkspaceError, match=">= 8"):
        generate_grid(width, height)


def test_spacing_too_small():
    with pytest.raises(WorkspaceError, match="block_spacing"):
        generate_grid(20, 20, block_spacing=3)


@pytest.mark.parametrize("size", [16, 100])
def test_intersection_count_matches_band_scan(size):
    w = generate_grid(size, size)
    rows, cols = full_road_lines(w)
    # two lanes per band, a roundabout at each band crossing
    assert len(rows) % 2 == 0 and len(cols) % 2 == 0
    assert len(w.intersections) == (len(rows) // 2) * (len(cols) // 2)
    assert len(w.intersections) == {16: 9, 100: 225}[size]


def test_grid_cell_count_100(ws100):
    # 15 bands of 2 lines each way: 60 full lines, 900 ring cells among them
    road = 2 * 15 * 100 * 2 - (2 * 15) ** 2
    assert len(w_road := ws100.road_cells) == road
    ring = [c for c in w_road if ws100.cell(c).kind == RING]
    assert len(ring) == 225 * 4


# adjacency -----------------------------------------------------------------

def test_successors_are_neighbours(ws100):
    for cell in ws100.cells:
        for s in ws100.successor[cell.id]:
            assert ws100.manhattan(cell.id, s) == 1


def test_lanes_follow_direction_or_uturn(ws100):
    w = ws100
    for cell in w.cells:
        if cell.kind != LANE:
            continue
        (s,) = w.successor[cell.id]
        dr, dc = DIRECTIONS[cell.direction]
        ahead = w.at(cell.row + dr, cell.col + dc)
        if ahead is not None and w.is_road(ahead):
            assert s == ahead
        else:
            # at the border: over to the opposite lane
            assert w.cell(s).direction == OPPOSITE[cell.direction]


def test_right_hand_traffic(ws100):
    w = ws100
    for cell in w.cells:
        if cell.kind != LANE:
            continue
        dr, dc = DIRECTIONS[left_of(cell.direction)]
        other = w.cell(w.at(cell.row + dr, cell.col + dc))
        assert other.kind == LANE and other.direction == OPPOSITE[cell.direction]


def test_rings_turn_counter_clockwise(ws16):
    for rb in ws16.intersections:
        coords = [(ws16.cell(c).row, ws16.cell(c).col) for c in rb.ring]
        r0, c0 = coords[0]
        assert coords == [(r0, c0), (r0 + 1, c0), (r0 + 1, c0 + 1), (r0, c0 + 1)]
        for p, c in enumerate(rb.ring):
            assert rb.ring[(p + 1) % 4] in ws16.successor[c]


def test_entries_and_exits_consistent(ws16):
    for rb in ws16.intersections:
        for lane, p in rb.entries.items():
            assert ws16.successor[lane] == {rb.ring[p]}
        for p, lane in rb.exits.items():
            assert lane in ws16.successor[rb.ring[p]]
            assert ws16.cell(lane).kind == LANE


def test_service_cells(ws16):
    for c in ws16.service_cells:
        lane = ws16.access[c]
        assert ws16.cell(lane).kind == LANE
        assert ws16.manhattan(c, lane) == 1
        assert ws16.successor[c] == {lane}
    # road cells never lead off the road
    for c in ws16.road_cells:
        assert all(ws16.is_road(s) for s in ws16.successor[c])


def test_lane_predecessors(ws16):
    # each lane cell is fed from exactly one cell, so lanes never need a contest
    counts = lane_predecessor_counts(ws16)
    assert counts and set(counts.values()) == {1}


@pytest.mark.parametrize("size", [8, 16, 30, 100])
def test_strongly_connected(size):
    assert strongly_connected_road(generate_grid(size, size))


def test_successors_rejects_bad_id(ws16):
    with pytest.raises(WorkspaceError):
        successors(ws16, -1)
    with pytest.raises(WorkspaceError):
        successors(ws16, ws16.size)
    assert successors(ws16, 0) == ws16.successor[0]


@settings(max_examples=20, deadline=None)
@given(st.integers(8, 40), st.integers(8, 40), st.integers(4, 9))
def test_generated_grids_valid(width, height, spacing):
    w = generate_grid(width, height, spacing)
    check_invariants(w)
    assert strongly_connected_road(w)
    assert w.width <= width and w.height <= height


# standalone rings ------------------------------------------------------------

@pytest.mark.parametrize("m", [3, 5, 6, 8])
def test_standalone_roundabout(m):
    w = standalone_roundabout(m)
    (rb,) = w.intersections
    assert rb.m == m and len(rb.entries) == m and len(rb.exits) == m
    check_invariants(w)
    assert strongly_connected_road(w)


def test_standalone_capacity_floor():
    with pytest.raises(WorkspaceError):
        standalone_roundabout(2)


# serialization ---------------------------------------------------------------

@pytest.mark.parametrize("size", [8, 16, 30])
def test_round_trip(size):
    w = generate_grid(size, size)
    back = parse(serialize(w))
    assert back == w
    assert serialize(back) == serialize(w)


def test_round_trip_standalone():
    w = standalone_roundabout(6)
    assert parse(serialize(w)) == w


def test_golden_file():
    text = (GOLDEN / "grid_8x8.txt").read_text()
    assert serialize(generate_grid(8, 8)) == text


def test_hand_written_fixture():
    w = parse((GOLDEN / "one_roundabout.txt").read_text())
    check_invariants(w)
    (rb,) = w.intersections
    assert rb.ring == (0, 1, 2, 3)
    assert dict(rb.entries) == {4: 0} and dict(rb.exits) == {2: 5}
    assert w.successor[2] == {3, 5}
    assert strongly_connected_road(w)


@pytest.mark.parametrize("text, line, fieldname", [
    ("", 1, "header"),
    ("not a workspace\n", 1, "header"),
    ("sparcas-workspace v1\nwidth x\n", 2, "width"),
    ("sparcas-workspace v1\nwidth 3\nheight 3\nm 4\ncells 6\nroundabouts 1\n"
     "cell 0 ring:0:0 0 0 -> 9\n", 8, "records"),
])
def test_parse_errors_name_line_and_field(text, line, fieldname):
    with pytest.raises(WorkspaceParseError) as info:
        parse(text)
    assert str(info.value).startswith(f"line {line}: field '{fieldname}'")


def test_lane_with_two_feeders_rejected():
    text = (GOLDEN / "one_roundabout.txt").read_text().replace("-> 3,5", "-> 3,5,4")
    with pytest.raises(WorkspaceError):
        check_invariants(parse(text))


def test_parse_unknown_successor():
    text = (GOLDEN / "one_roundabout.txt").read_text().replace("-> 4", "-> 42")
    with pytest.raises(WorkspaceParseError, match="successors"):
        parse(text)


def test_kinds_partition(ws16):
    kinds = {c.kind for c in ws16.cells}
    assert kinds == {LANE, RING, SERVICE}
