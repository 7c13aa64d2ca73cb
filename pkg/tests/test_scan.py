"""Scan module tests: grids, maps, zones, dimension, transport, rendering."""

import math

import numpy as np
import pytest

from qptopo.fields import builtin_model
from qptopo.foliation import Label
from qptopo.scan import (
    DirectionGrid,
    ScanError,
    StabilityMap,
    boundary_points,
    box_dimension,
    render_map,
    scan_full,
    scan_reduced,
    transport_regime,
    zones,
)


@pytest.fixture(scope="module")
def c3():
    return builtin_model("c3")


@pytest.fixture(scope="module")
def small_map(c3):
    return scan_full(c3, 0.0, DirectionGrid(5), resolution=48)


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

def test_grid_cells_coprime():
    g = DirectionGrid(5)
    assert len(g.cells) == 25
    for d in g.cells:
        assert math.gcd(math.gcd(abs(d.vector[0]), abs(d.vector[1])),
                        abs(d.vector[2])) == 1
    assert g.cells[0].vector == (0, 0, 1)
    assert g.cells[-1].vector == (1, 1, 1)


def test_grid_window():
    g = DirectionGrid(3, window=(0.0, 0.5, 0.0, 0.5))
    assert g.cells[g.index(2, 2)].vector == (1, 1, 2)
    with pytest.raises(ScanError):
        DirectionGrid(1)


# ---------------------------------------------------------------------------
# stability maps
# ---------------------------------------------------------------------------

def test_scan_full_small(small_map):
    kinds = {e.kind for e in small_map.entries}
    assert "open_stable" in kinds
    assert small_map.label_at(0, 0).kind == "all_closed"   # direction (0,0,1)
    # the reference direction's zone dominates the chart near the origin
    assert small_map.label_at(1, 0).vector == (0, 0, 1)


def test_scan_mirror_symmetry(small_map):
    # the model is invariant under swapping x and y, so the map is mirror
    # symmetric with the label's first two components swapped
    n = small_map.grid.n
    for j in range(n):
        for i in range(n):
            a = small_map.label_at(i, j)
            b = small_map.label_at(j, i)
            assert a.kind == b.kind
            if a.kind == "open_stable":
                sw = (a.vector[1], a.vector[0], a.vector[2])
                from qptopo.homology import sign_normalize
                assert tuple(sign_normalize(list(sw))) == b.vector


def test_scan_determinism(c3, small_map):
    again = scan_full(c3, 0.0, DirectionGrid(5), resolution=48)
    assert [e.kind for e in again.entries] == [e.kind for e in small_map.entries]
    assert again.to_csv() == small_map.to_csv()
    assert render_map(again) == render_map(small_map)


def test_scan_reduced_inside_interval(c3, small_map):
    # at a level inside every open interval the reduced map agrees with the
    # full map on open cells; far outside it is all AllClosed
    red = scan_reduced(c3, 0.0, DirectionGrid(5), resolution=48)
    for full_e, red_e in zip(small_map.entries, red.entries):
        if full_e.kind == "open_stable" and red_e.kind == "open_stable":
            assert full_e.vector == red_e.vector
    far = scan_reduced(c3, 2.5, DirectionGrid(3), resolution=32)
    assert all(e.kind == "all_closed" for e in far.entries)


def test_csv_format(small_map):
    lines = small_map.to_csv().splitlines()
    assert lines[0] == "bx_num,bx_den,by_num,by_den,label_or_status"
    assert len(lines) == 26
    assert lines[1].startswith("0,1,0,1,")


# ---------------------------------------------------------------------------
# zones
# ---------------------------------------------------------------------------

def test_zones_small_map(small_map):
    zs = zones(small_map)
    assert zs, "no zones found"
    assert zs[0].label == (0, 0, 1)
    total = sum(z.area_fraction for z in zs)
    assert 0 < total <= 1.0
    # zone cells are connected and share the label
    for z in zs:
        for (i, j) in z.cells:
            assert small_map.label_at(i, j).vector == z.label


def test_zones_synthetic():
    g = DirectionGrid(3)
    all_closed = StabilityMap(g, [Label.all_closed()] * 9)
    assert zones(all_closed) == []
    one = StabilityMap(g, [Label.open_stable((0, 0, 1))] * 9)
    zs = zones(one)
    assert len(zs) == 1 and zs[0].area_fraction == 1.0


# ---------------------------------------------------------------------------
# box dimension
# ---------------------------------------------------------------------------

def test_box_dimension_calibrations():
    rng = np.random.default_rng(3)
    square = {(float(x), float(y)) for x, y in rng.uniform(0, 1, size=(40000, 2))}
    assert box_dimension(square, [0.05, 0.1, 0.2]) == pytest.approx(2.0, abs=0.05)
    segment = {(x / 2000, 0.37) for x in range(2000)}
    assert box_dimension(segment, [0.01, 0.03, 0.1]) == pytest.approx(1.0, abs=0.05)
    # Sierpinski carpet sample, depth 5
    pts = {(0.0, 0.0)}
    for _ in range(5):
        pts = {((x + i) / 3, (y + j) / 3)
               for x, y in pts
               for i in range(3) for j in range(3) if not (i == 1 and j == 1)}
    assert box_dimension(pts, [3 ** -k for k in range(1, 5)]) == \
        pytest.approx(math.log(8) / math.log(3), abs=0.05)


def test_box_dimension_errors():
    with pytest.raises(ScanError):
        box_dimension(set(), [0.1, 0.2])
    with pytest.raises(ScanError):
        box_dimension({(0.5, 0.5)}, [0.1])
    with pytest.raises(ScanError):
        box_dimension({(0.5, 0.5)}, [0.1, 0.2])   # constant counts


def test_boundary_points(small_map):
    pts = boundary_points(small_map)
    assert pts
    for x, y in pts:
        assert 0.0 <= x <= 1.0 and 0.0 <= y <= 1.0


# ---------------------------------------------------------------------------
# transport and rendering
# ---------------------------------------------------------------------------

def test_transport_regimes():
    assert transport_regime(Label.all_closed()).tag == "closed"
    r = transport_regime(Label.open_stable((0, 1, 0)), b=(0, 0, 1))
    assert r.tag == "anisotropic"
    assert r.axis == (1, 0, 0)
    assert transport_regime(Label.undetermined("x")).tag == "unclassified"


def test_render_map_styles():
    g = DirectionGrid(3)
    m = StabilityMap(g, [Label.all_closed()] * 9)
    img = render_map(m, cell_px=2)
    assert img.startswith(b"P6\n6 6\n255\n")
    assert set(img[11:]) == {255}          # all white
    two = StabilityMap(g, [Label.open_stable((0, 0, 1))] * 5
                       + [Label.open_stable((1, 0, 0))] * 4)
    img2 = render_map(two, cell_px=1)
    body = img2.split(b"255\n", 1)[1]
    pixels = {tuple(body[3 * k: 3 * k + 3]) for k in range(9)}
    assert len(pixels) == 2 and (255, 255, 255) not in pixels
    svg = render_map(two, style="svg")
    assert svg.startswith(b"<svg") and svg.count(b"<rect") == 9
    with pytest.raises(ScanError):
        render_map(two, style="gif")
