"""Direction-space scans: stability maps, zones, fractal dimension, transport.

A stability map evaluates the topological label on a rational grid in the
bz = 1 chart of direction space.  Zones are connected same-label
regions; the complement (zone boundaries and undetermined cells) feeds the
box-counting dimension estimate.  Rendering and CSV round-trips are
deterministic so maps can serve as regression artifacts.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .foliation import Direction, Label, compute_label, level_analysis
from .homology import primitive_vector, sign_normalize


class ScanError(ValueError):
    pass


@dataclass(frozen=True)
class DirectionGrid:
    """Uniform N x N rational grid over a window of the bz = 1 chart.

    Cell (i, j) is the direction (x0 + i*w/(n-1), y0 + j*h/(n-1), 1),
    cleared of denominators and coprime-normalized.
    """

    n: int
    window: tuple = (0.0, 1.0, 0.0, 1.0)   # x0, x1, y0, y1

    def __post_init__(self):
        if self.n < 2:
            raise ScanError("grid needs at least 2 cells per side")

    def fractions(self):
        """Per-cell chart coordinates as exact fractions ((bx, by) pairs)."""
        x0, x1, y0, y1 = (Fraction(v).limit_denominator(10 ** 6) for v in self.window)
        m = self.n - 1
        out = []
        for j in range(self.n):
            for i in range(self.n):
                out.append((x0 + (x1 - x0) * i / m, y0 + (y1 - y0) * j / m))
        return out

    @property
    def cells(self):
        out = []
        for bx, by in self.fractions():
            den = bx.denominator * by.denominator // math.gcd(bx.denominator,
                                                              by.denominator)
            v = (bx.numerator * (den // bx.denominator),
                 by.numerator * (den // by.denominator), den)
            out.append(Direction.rational(v))
        return out

    def index(self, i, j):
        return j * self.n + i


@dataclass
class StabilityMap:
    grid: DirectionGrid
    entries: list
    metadata: dict = field(default_factory=dict)

    def label_at(self, i, j) -> Label:
        return self.entries[self.grid.index(i, j)]

    def to_csv(self) -> str:
        lines = ["bx_num,bx_den,by_num,by_den,label_or_status"]
        for (bx, by), lab in zip(self.grid.fractions(), self.entries):
            if lab.kind == "open_stable":
                s = ":".join(str(x) for x in lab.vector)
            else:
                s = lab.kind
            lines.append(f"{bx.numerator},{bx.denominator},"
                         f"{by.numerator},{by.denominator},{s}")
        return "\n".join(lines) + "\n"


def _label_cell(fld, level, direction, resolution):
    try:
        return compute_label(fld, level, direction, resolution=resolution)
    except Exception as exc:   # per-cell failures become data, not crashes
        return Label.undetermined(f"{type(exc).__name__}: {exc}")


def scan_full(fld, level, grid: DirectionGrid, resolution=64,
              progress=None) -> StabilityMap:
    """Label every grid direction at a fixed level.

    Cells are evaluated in deterministic order; any per-cell error becomes
    an Undetermined entry.  The level analysis (mesh + homology bases) is
    cached across cells, so the per-cell cost is the foliation work only.
    """
    cells = grid.cells
    entries = []
    for k, d in enumerate(cells):
        entries.append(_label_cell(fld, level, d, resolution))
        if progress is not None:
            progress(k + 1, len(cells))
    meta = {"model": getattr(fld, "name", ""), "level": float(level),
            "resolution": int(resolution), "mode": "full"}
    return StabilityMap(grid, entries, meta)


def scan_reduced(fld, fermi_level, grid: DirectionGrid, resolution=64,
                 progress=None) -> StabilityMap:
    """Reduced map at one level: the label where that level carries open
    sections, AllClosed elsewhere.

    A level lies in a direction's open interval exactly when its sections
    contain open curves, so a single openness probe replaces the full
    interval computation for each cell.
    """
    from .fields import evaluate_grid
    from .foliation import _has_open_section

    sample = evaluate_grid(fld, resolution)
    cells = grid.cells
    entries = []
    for k, d in enumerate(cells):
        bvec = np.asarray(d.vector, dtype=np.int64)
        try:
            is_open = _has_open_section(fld, float(fermi_level), bvec,
                                        resolution, sample)
        except Exception as exc:
            entries.append(Label.undetermined(f"{type(exc).__name__}: {exc}"))
            continue
        if not is_open:
            entries.append(Label.all_closed())
        else:
            entries.append(_label_cell(fld, fermi_level, d, resolution))
        if progress is not None:
            progress(k + 1, len(cells))
    meta = {"model": getattr(fld, "name", ""), "level": float(fermi_level),
            "resolution": int(resolution), "mode": "reduced"}
    return StabilityMap(grid, entries, meta)


@dataclass
class ZoneRecord:
    label: tuple
    cells: list              # (i, j) grid indices
    area_fraction: float


def zones(stability_map: StabilityMap):
    """Connected same-label regions of open-stable cells, largest first."""
    n = stability_map.grid.n
    seen = [[False] * n for _ in range(n)]
    out = []
    for j0 in range(n):
        for i0 in range(n):
            if seen[j0][i0]:
                continue
            lab = stability_map.label_at(i0, j0)
            seen[j0][i0] = True
            if lab.kind != "open_stable":
                continue
            # flood fill over 4-neighbors with the same label vector
            comp = [(i0, j0)]
            stack = [(i0, j0)]
            while stack:
                i, j = stack.pop()
                for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    x, y = i + di, j + dj
                    if 0 <= x < n and 0 <= y < n and not seen[y][x]:
                        other = stability_map.label_at(x, y)
                        if other.kind == "open_stable" and other.vector == lab.vector:
                            seen[y][x] = True
                            comp.append((x, y))
                            stack.append((x, y))
            out.append(ZoneRecord(lab.vector, sorted(comp), len(comp) / (n * n)))
    out.sort(key=lambda z: (-z.area_fraction, z.label))
    return out


def boundary_points(stability_map: StabilityMap):
    """Chart points of cells that are undetermined or touch a different
    label: the numerical shadow of the exceptional direction set."""
    n = stability_map.grid.n
    pts = set()
    fracs = stability_map.grid.fractions()
    for j in range(n):
        for i in range(n):
            lab = stability_map.label_at(i, j)
            on_boundary = lab.kind == "undetermined"
            if not on_boundary:
                for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    x, y = i + di, j + dj
                    if 0 <= x < n and 0 <= y < n:
                        other = stability_map.label_at(x, y)
                        if other.kind != lab.kind or (
                                lab.kind == "open_stable"
                                and other.vector != lab.vector):
                            on_boundary = True
                            break
            if on_boundary:
                bx, by = fracs[stability_map.grid.index(i, j)]
                pts.add((float(bx), float(by)))
    return pts


def box_dimension(points, scales) -> float:
    """Box-counting dimension: least-squares slope of log(occupied boxes)
    against log(1/scale)."""
    pts = np.asarray(list(points), dtype=float)
    if pts.size == 0:
        raise ScanError("no points to measure")
    scales = sorted(float(s) for s in scales)
    if len(scales) < 2:
        raise ScanError("need at least two scales")
    counts = []
    for s in scales:
        cells = np.floor(pts / s).astype(np.int64)
        counts.append(len(np.unique(cells, axis=0)))
    if len(set(counts)) < 2:
        raise ScanError("degenerate box counts; widen the scale range")
    slope = np.polyfit(np.log(1.0 / np.asarray(scales)), np.log(counts), 1)[0]
    return float(slope)


@dataclass(frozen=True)
class TransportRegime:
    tag: str
    axis: tuple = None       # in-plane anisotropy axis for open labels
    description: str = ""


def transport_regime(label: Label, b=None) -> TransportRegime:
    """Conductivity regime implied by a label in a strong magnetic field."""
    if label.kind == "all_closed":
        return TransportRegime(
            "closed",
            description="both in-plane conductivities fall off as "
                        "(omega_B tau)^-2")
    if label.kind == "open_stable":
        axis = None
        if b is not None:
            bv = [int(x) for x in Direction.rational(b).vector]
            lv = list(label.vector)
            cross = [bv[1] * lv[2] - bv[2] * lv[1],
                     bv[2] * lv[0] - bv[0] * lv[2],
                     bv[0] * lv[1] - bv[1] * lv[0]]
            if any(cross):
                axis = tuple(sign_normalize(primitive_vector(cross)))
        return TransportRegime(
            "anisotropic", axis,
            "one in-plane conductivity saturates along the open-orbit axis")
    return TransportRegime(
        "unclassified", description="undetermined label; possibly chaotic")


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

def _label_color(vector):
    digest = hashlib.sha256(repr(tuple(vector)).encode()).digest()
    r, g, b = digest[0], digest[1], digest[2]
    # keep colors away from the reserved white/black
    return (32 + r * 192 // 255, 32 + g * 192 // 255, 32 + b * 192 // 255)


def render_map(stability_map: StabilityMap, style="ppm", cell_px=8) -> bytes:
    """Deterministic raster of a map: labels hashed to fixed colors,
    AllClosed white, Undetermined black.  P6 PPM or SVG bytes."""
    n = stability_map.grid.n
    colors = []
    for j in range(n - 1, -1, -1):       # image rows top-down, by increasing up
        for i in range(n):
            lab = stability_map.label_at(i, j)
            if lab.kind == "all_closed":
                colors.append((255, 255, 255))
            elif lab.kind == "undetermined":
                colors.append((0, 0, 0))
            else:
                colors.append(_label_color(lab.vector))
    if style == "ppm":
        w = n * cell_px
        header = f"P6\n{w} {w}\n255\n".encode()
        row_px = bytearray()
        body = bytearray()
        for j in range(n):
            row_px.clear()
            for i in range(n):
                row_px.extend(bytes(colors[j * n + i]) * cell_px)
            body.extend(bytes(row_px) * cell_px)
        return header + bytes(body)
    if style == "svg":
        parts = [f'<svg xmlns="http://www.w3.org/2000/svg" '
                 f'width="{n * cell_px}" height="{n * cell_px}">']
        for j in range(n):
            for i in range(n):
                r, g, b = colors[j * n + i]
                parts.append(
                    f'<rect x="{i * cell_px}" y="{j * cell_px}" '
                    f'width="{cell_px}" height="{cell_px}" '
                    f'fill="rgb({r},{g},{b})"/>')
        parts.append("</svg>")
        return "\n".join(parts).encode()
    raise ScanError(f"unknown style {style!r} (use 'ppm' or 'svg')")
