"""Foliation of a periodic level surface by parallel plane sections.

For an integer (rational) direction B the height b(p) = <B, p> is well
defined modulo 1 on the 3-torus, and restricting it to an extracted level
surface foliates the surface by section curves.  This module finds the
critical points of that height, cuts the surface along section curves at
regular heights between critical values, groups the pieces into cylinders
of closed curves and open-curve components, and computes the topological
label: the coprime integer 3-vector that is the common (up to sign)
homology class of the open components as 2-cycles in the torus.

Two independent routes produce the label and must agree:

- symplectic route: the classes of closed section curves span a subspace of
  H1 of the surface; the push-forward of its symplectic orthogonal into
  H1(T^3, Z) is a rank-2 sublattice whose integer annihilator is the label;
- direct route: each open component, capped with flat disks in the section
  planes along its (null-homotopic in T^3) boundary curves, is a 2-cycle
  whose class is read off from lifted signed projected areas, with the caps
  contributing boundary integrals by Green's theorem.

Any disagreement, degeneracy, or failed exactness check yields an
Undetermined label rather than a guess.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import gcd

import numpy as np

from .homology import (
    HomologyError,
    SurfaceLoop,
    annihilator_direction,
    class_from_coordinates,
    cycle_basis,
    integer_rank,
    loop_coordinates,
    primitive_vector,
    sign_normalize,
    sublattice_from_rows,
    symplectic_orthogonal,
)
from .mesh import MeshError, TorusMesh, extract_isosurface, split_components, validate_mesh

MERGE_TOL = 1e-7          # critical values closer than this are one cluster
DEFAULT_RESOLUTION = 96
INTERVAL_RESOLUTION = 64
COARSE_LEVELS = 64
MAX_BISECTIONS = 30


class FoliationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# directions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Direction:
    """A projective direction: coprime integer 3-vector or real unit vector."""

    kind: str
    vector: tuple

    @staticmethod
    def rational(v) -> "Direction":
        v = [int(x) for x in v]
        if len(v) != 3 or all(x == 0 for x in v):
            raise FoliationError(f"not a rational direction: {v!r}")
        return Direction("rational", tuple(sign_normalize(primitive_vector(v))))

    @staticmethod
    def real(v) -> "Direction":
        a = np.asarray(v, dtype=float)
        n = float(np.linalg.norm(a))
        if a.shape != (3,) or n < 1e-12:
            raise FoliationError(f"not a real direction: {v!r}")
        a = a / n
        for x in a:
            if abs(x) > 1e-12:
                if x < 0:
                    a = -a
                break
        return Direction("real", tuple(float(x) for x in a))

    @property
    def chart(self):
        """Coordinates (bx/bz, by/bz) in the bz = 1 chart, or None."""
        bx, by, bz = self.vector
        if bz == 0:
            return None
        return (bx / bz, by / bz)

    def unit(self) -> np.ndarray:
        a = np.asarray(self.vector, dtype=float)
        return a / np.linalg.norm(a)


def as_direction(b) -> Direction:
    if isinstance(b, Direction):
        return b
    seq = list(b)
    if all(float(x) == int(x) for x in seq):
        return Direction.rational([int(x) for x in seq])
    return Direction.real(seq)


@dataclass(frozen=True)
class SaddlePoint:
    vertex: int
    position: tuple
    value: float          # height mod 1
    index: int            # Morse index contribution (1 - alternations/2)


@dataclass
class SectionLoop:
    """One connected section curve at height h (mod 1).

    ``class3`` is the curve's homology class in H1(T^3, Z); (0, 0, 0) means
    a closed (compact in the plane) orbit.  ``walk`` is a homologous closed
    vertex walk on the mesh, used for pairing against H1 bases; ``polyline``
    holds the lifted crossing points (consistent lift, so it closes exactly
    when class3 is zero).
    """

    h: float
    class3: tuple
    walk: list
    polyline: np.ndarray
    component: int
    region_below: int = -1
    region_above: int = -1

    @property
    def is_closed(self) -> bool:
        return self.class3 == (0, 0, 0)


@dataclass
class Cylinder:
    heights: list
    core_class: tuple = (0, 0, 0)
    loop_ids: list = field(default_factory=list)

    @property
    def interval(self):
        return (min(self.heights), max(self.heights))


@dataclass
class OpenComponent:
    triangle_ids: np.ndarray
    two_cycle_class: tuple
    loop_ids: list
    boundary_loop_ids: list


@dataclass
class FoliationDecomposition:
    direction: Direction
    cylinders: list
    open_components: list
    saddles: list
    loops: list
    notes: list = field(default_factory=list)

    @property
    def open_loops(self):
        return [lp for lp in self.loops if not lp.is_closed]


@dataclass(frozen=True)
class Label:
    kind: str             # "open_stable" | "all_closed" | "undetermined"
    vector: tuple = None
    reason: str = ""

    @staticmethod
    def open_stable(v) -> "Label":
        return Label("open_stable", tuple(sign_normalize(list(v))))

    @staticmethod
    def all_closed() -> "Label":
        return Label("all_closed")

    @staticmethod
    def undetermined(reason) -> "Label":
        return Label("undetermined", reason=str(reason))


@dataclass(frozen=True)
class EnergyInterval:
    low: float
    upp: float
    tolerance: float
    status: str = "interval"    # "interval" | "point" | "empty"
    note: str = ""


# ---------------------------------------------------------------------------
# per-mesh cached geometry
# ---------------------------------------------------------------------------

def _mesh_data(mesh: TorusMesh):
    """Direction-independent arrays attached to the mesh on first use."""
    cache = getattr(mesh, "_foliation_data", None)
    if cache is not None:
        return cache
    tris = mesh.triangles
    nf = len(tris)
    # corner frame offsets within each triangle's local lift
    off = np.zeros((nf, 3, 3), dtype=np.int64)
    if nf:
        off[:, 1] = mesh.shifts[:, 0]
        off[:, 2] = mesh.shifts[:, 0] + mesh.shifts[:, 1]
    # vertex rings in rotation order, flattened
    succ = {}
    for t, s in zip(tris, mesh.shifts):
        a, b, c = (int(x) for x in t)
        succ.setdefault(a, {})[b] = c
        succ.setdefault(b, {})[c] = a
        succ.setdefault(c, {})[a] = b
    shift_map = mesh.edge_shift_map()
    ring_owner, ring_nb, ring_shift, ring_start = [], [], [], []
    pos = 0
    nv = mesh.vertex_count
    for v in range(nv):
        ring_start.append(pos)
        nxt = succ.get(v)
        if not nxt:
            continue
        start = next(iter(nxt))
        x = start
        while True:
            ring_owner.append(v)
            ring_nb.append(x)
            ring_shift.append(shift_map[(v, x)])
            pos += 1
            x = nxt[x]
            if x == start:
                break
    ring_start.append(pos)
    ring_start = np.asarray(ring_start, dtype=np.int64)
    ring_next = np.arange(pos, dtype=np.int64) + 1
    ring_next[ring_start[1:] - 1] = ring_start[:-1]

    comps = split_components(mesh)
    tri_component = np.full(nf, -1, dtype=np.int64)
    for ci, comp in enumerate(comps):
        tri_component[comp.triangle_ids] = ci

    cache = {
        "corner_offsets": off,
        "ring_owner": np.asarray(ring_owner, dtype=np.int64),
        "ring_nb": np.asarray(ring_nb, dtype=np.int64),
        "ring_shift": np.asarray(ring_shift, dtype=np.int64).reshape(-1, 3),
        "ring_start": ring_start,
        "ring_next": ring_next,
        "components": comps,
        "tri_component": tri_component,
        "shift_map": shift_map,
    }
    mesh._foliation_data = cache
    return cache


def _heights(mesh, data, bvec):
    hv = mesh.positions @ bvec
    hc = hv[mesh.triangles] + data["corner_offsets"] @ bvec
    return hv, hc


# ---------------------------------------------------------------------------
# critical points
# ---------------------------------------------------------------------------

def _bfloat(bvec):
    return np.asarray(bvec, dtype=float)


def _link_alternations(mesh, data, bvec):
    """Sign alternation count of the height difference around each vertex."""
    hv = mesh.positions @ _bfloat(bvec)
    owner = data["ring_owner"]
    nb = data["ring_nb"]
    delta = hv[nb] + data["ring_shift"] @ _bfloat(bvec) - hv[owner]
    # exact ties between symmetry-related vertices carry float noise around
    # 1e-15 * |B|, while genuinely distinct lifted heights differ by at
    # least ~1e-6 * |B| (vertices are clamped off grid corners), so this
    # window separates the two and the id tie-break stays a total order
    tie = 1e-12 * (1.0 + float(np.abs(bvec).sum()))
    s = np.where(delta > tie, 1, np.where(delta < -tie, -1,
                 np.where(nb > owner, 1, -1))).astype(np.int8)
    changes = (s != s[data["ring_next"]]).astype(np.int64)
    return np.add.reduceat(changes, data["ring_start"][:-1]) if len(s) else np.zeros(0, np.int64)


def critical_points(mesh: TorusMesh, b) -> list:
    """Saddle points of the section height on the mesh.

    A vertex whose link heights alternate in sign 2k times contributes Morse
    index 1 - k; saddles are the vertices with k >= 2.  Extrema (k = 0) are
    regular for this purpose but their heights still separate bands.
    """
    direction = as_direction(b)
    if direction.kind != "rational":
        raise FoliationError("critical points require a rational direction")
    data = _mesh_data(mesh)
    bvec = np.asarray(direction.vector, dtype=np.int64)
    alt = _link_alternations(mesh, data, bvec)
    out = []
    hv = mesh.positions @ _bfloat(bvec)
    for v in np.nonzero(alt >= 4)[0]:
        out.append(SaddlePoint(int(v), tuple(float(x) for x in mesh.positions[v]),
                               float(hv[v] % 1.0), 1 - int(alt[v]) // 2))
    return out


def _critical_values(mesh, data, bvec):
    """(saddles, merged critical heights mod 1, index sum including extrema)."""
    alt = _link_alternations(mesh, data, bvec)
    hv = mesh.positions @ _bfloat(bvec)
    crit = np.nonzero((alt >= 4) | (alt == 0))[0]
    saddle_ids = np.nonzero(alt >= 4)[0]
    index_sum = int(np.sum(1 - alt[crit] // 2))
    values = np.sort(np.mod(hv[crit], 1.0)) if len(crit) else np.zeros(0)
    merged = []
    for x in values:
        if not merged or x - merged[-1] > MERGE_TOL:
            merged.append(float(x))
    # circular merge across the wrap
    if len(merged) >= 2 and (merged[0] + 1.0) - merged[-1] <= MERGE_TOL:
        merged.pop()
    saddles = [SaddlePoint(int(v), tuple(float(x) for x in mesh.positions[v]),
                           float(hv[v] % 1.0), 1 - int(alt[v]) // 2)
               for v in saddle_ids]
    return saddles, merged, index_sum


def _gap_midpoints(merged, hv, scale):
    """Regular cut heights between consecutive critical clusters.

    Midpoints are nudged off every vertex height so section curves never
    pass through a vertex; gaps thinner than 10x the merge tolerance are
    skipped (reported by the caller).
    """
    frac = np.sort(np.mod(hv, 1.0))
    eps = 1e-9 * scale

    def nudge(h):
        h = h % 1.0
        for k in range(64):
            probe = (h + k * 3 * eps) % 1.0
            i = np.searchsorted(frac, probe)
            lo = frac[i - 1] if i > 0 else frac[-1] - 1.0
            hi = frac[i] if i < len(frac) else frac[0] + 1.0
            if min(probe - lo, hi - probe) > eps:
                return probe
        raise FoliationError("could not find a regular section height")

    if not merged:
        return [nudge(0.2816)], []
    mids, skipped = [], []
    g = len(merged)
    for i in range(g):
        a = merged[i]
        b = merged[(i + 1) % g] + (1.0 if i == g - 1 else 0.0)
        if b - a < 10 * MERGE_TOL:
            skipped.append((a, b))
            continue
        mids.append(nudge((a + b) / 2.0))
    if not mids:
        raise FoliationError("all height bands thinner than tolerance")
    return sorted(mids), skipped


# ---------------------------------------------------------------------------
# section curves
# ---------------------------------------------------------------------------

def _section_instances(mesh, data, bvec, hc, cut_heights):
    """Vectorized crossing data for all cuts in ``cut_heights`` at once.

    Returns per-instance arrays: triangle id, cut index, integer lift k, and
    for the oriented segment (uphill on the left) the entry/exit edge slots.
    """
    nf = len(mesh.triangles)
    out = []
    mn = hc.min(axis=1)
    mx = hc.max(axis=1)
    for ci, h in enumerate(cut_heights):
        k0 = np.ceil(mn - h).astype(np.int64)
        k1 = np.floor(mx - h).astype(np.int64)
        cnt = np.maximum(k1 - k0 + 1, 0)
        total = int(cnt.sum())
        if total == 0:
            continue
        tri = np.repeat(np.arange(nf), cnt)
        starts = np.repeat(np.cumsum(cnt) - cnt, cnt)
        kk = k0[tri] + (np.arange(total) - starts)
        lvl = h + kk
        below = hc[tri] < lvl[:, None]          # (total, 3)
        nb = below.sum(axis=1)
        # lone corner: the single vertex on the minority side
        lone = np.where(nb[:, None] == 1, below, ~below).argmax(axis=1)
        # slots touching the lone corner: slot lone (lone -> lone+1) and
        # slot lone-1 ((lone-1) -> lone); direction of crossing decides
        # entry (down-crossing) vs exit (up-crossing)
        nxt = (lone + 1) % 3
        htri = hc[tri]
        up_on_slot_lone = htri[np.arange(total), lone] < lvl
        slot_a = lone                  # edge lone -> lone+1
        slot_b = (lone + 2) % 3        # edge lone-1 -> lone
        # slot_a is an up-crossing iff the lone corner is below
        entry = np.where(up_on_slot_lone, slot_b, slot_a)   # down-crossing
        exit_ = np.where(up_on_slot_lone, slot_a, slot_b)   # up-crossing
        out.append((ci, tri, kk, lvl, entry, exit_))
    return out


def _slot_site_keys(mesh, data, bvec, tri, kk, slot):
    """Canonical site key arrays for crossings on edge slot of triangles.

    A site is a crossing point on a mesh edge; the canonical key is
    (min(u,v), max(u,v), lift index in the frame of min(u,v)).
    """
    tris = mesh.triangles
    offs = data["corner_offsets"]
    u = tris[tri, slot]
    v = tris[tri, (slot + 1) % 3]
    mu = offs[tri, slot] @ bvec
    mv = offs[tri, (slot + 1) % 3] @ bvec
    ku = kk - mu
    kv = kk - mv
    lo = np.minimum(u, v)
    klo = np.where(u <= v, ku, kv)
    hi = np.maximum(u, v)
    return lo, hi, klo


def _slot_points(mesh, data, tri, slot, lvl, hc):
    """Lifted crossing point and below-vertex for each (tri, slot, level)."""
    tris = mesh.triangles
    offs = data["corner_offsets"]
    n = len(tri)
    idx = np.arange(n)
    a = slot
    b = (slot + 1) % 3
    ha = hc[tri, a]
    hb = hc[tri, b]
    t = (lvl - ha) / (hb - ha)
    qa = mesh.positions[tris[tri, a]] + offs[tri, a]
    qb = mesh.positions[tris[tri, b]] + offs[tri, b]
    pts = qa + t[:, None] * (qb - qa)
    below = np.where(ha < lvl, tris[tri, a], tris[tri, b])
    return pts, below


def section_curves(mesh: TorusMesh, b, h: float) -> list:
    """All connected section curves of the surface at height h (mod 1)."""
    direction = as_direction(b)
    if direction.kind != "rational":
        raise FoliationError("mesh sections require a rational direction; "
                             "use the planar tracer for real directions")
    data = _mesh_data(mesh)
    bvec = np.asarray(direction.vector, dtype=np.int64)
    if mesh.triangle_count == 0:
        return []
    hv, hc = _heights(mesh, data, bvec.astype(float))
    scale = 1.0 + float(np.abs(bvec).sum())
    h = _gap_midpoints([], hv, scale)[0][0] if h is None else float(h)
    # keep the requested height but nudge off vertex heights
    frac = np.sort(np.mod(hv, 1.0))
    eps = 1e-9 * scale
    probe = h % 1.0
    for k in range(64):
        i = np.searchsorted(frac, probe)
        lo = frac[i - 1] if i > 0 else frac[-1] - 1.0
        hi = frac[i] if i < len(frac) else frac[0] + 1.0
        if min(probe - lo, hi - probe) > eps:
            break
        probe = (probe + 3 * eps) % 1.0
    else:
        raise FoliationError("could not shift the section height off vertices")
    loops, _incidence = _trace_cuts(mesh, data, bvec, hc, [probe])
    return loops


def _trace_cuts(mesh, data, bvec, hc, cut_heights):
    """Trace all section loops at the given cut heights.

    Returns (loops, incidence) where incidence[i] = (tri, kk) of the first
    instance of loop i (used by the decomposition to locate it in the piece
    ladder).
    """
    instances = _section_instances(mesh, data, bvec, hc, cut_heights)
    kin_cols, kout_cols = [], []
    pin_l, pout_l, bin_l, bout_l, tri_l, kk_l, ci_l = ([] for _ in range(7))
    for ci, tri, kk, lvl, entry, exit_ in instances:
        pts_in, below_in = _slot_points(mesh, data, tri, entry, lvl, hc)
        pts_out, below_out = _slot_points(mesh, data, tri, exit_, lvl, hc)
        ki = _slot_site_keys(mesh, data, bvec, tri, kk, entry)
        ko = _slot_site_keys(mesh, data, bvec, tri, kk, exit_)
        cic = np.full(len(tri), ci, dtype=np.int64)
        kin_cols.append(np.column_stack([ki[0], ki[1], ki[2], cic]))
        kout_cols.append(np.column_stack([ko[0], ko[1], ko[2], cic]))
        pin_l.append(pts_in)
        pout_l.append(pts_out)
        bin_l.append(below_in)
        bout_l.append(below_out)
        tri_l.append(tri)
        kk_l.append(kk)
        ci_l.append(cic)
    if not kin_cols:
        return [], []
    kin = np.concatenate(kin_cols).astype(np.int64)
    kout = np.concatenate(kout_cols).astype(np.int64)
    p_in = np.concatenate(pin_l)
    p_out = np.concatenate(pout_l)
    b_in = np.concatenate(bin_l)
    b_out = np.concatenate(bout_l)
    tri_all = np.concatenate(tri_l)
    kk_all = np.concatenate(kk_l)
    ci_all = np.concatenate(ci_l)
    n = len(kin)
    # pack each (lo, hi, lift, cut) site key into one int64 so that the
    # entry of each record can be matched to the exit pointing at it with
    # a single sort + binary search
    both = np.concatenate([kin, kout])
    mins = both.min(axis=0)
    spans = (both.max(axis=0) - mins + 1).tolist()
    if spans[0] * spans[1] * spans[2] * spans[3] >= 2 ** 63:
        raise FoliationError("site key ranges overflow the packed index")

    def pack(k):
        code = k[:, 0] - mins[0]
        for c in range(1, 4):
            code = code * spans[c] + (k[:, c] - mins[c])
        return code

    code_in = pack(kin)
    code_out = pack(kout)
    order = np.argsort(code_in, kind="stable")
    sorted_in = code_in[order]
    if n > 1 and np.any(sorted_in[1:] == sorted_in[:-1]):
        raise FoliationError("degenerate section: duplicate entry site")
    pos = np.searchsorted(sorted_in, code_out)
    if np.any(pos >= n) or np.any(sorted_in[np.minimum(pos, n - 1)] != code_out):
        raise FoliationError("section curve hit a boundary (open mesh?)")
    nxt = order[pos]
    # frame matching: exit point and the next entry point are the same
    # physical point seen from two triangle lifts
    deltas = np.rint(p_out - p_in[nxt]).astype(np.int64)
    # follow the successor permutation to list each cycle contiguously
    nxt_list = nxt.tolist()
    seen = bytearray(n)
    flat = []
    bounds = [0]
    for start in range(n):
        if seen[start]:
            continue
        i = start
        while not seen[i]:
            seen[i] = 1
            flat.append(i)
            i = nxt_list[i]
        bounds.append(len(flat))
    flat = np.asarray(flat, dtype=np.int64)
    bounds = np.asarray(bounds, dtype=np.int64)
    lens = np.diff(bounds)
    d_flat = deltas[flat]
    # integer lift offset accumulated before each record of its cycle
    pre = np.concatenate([np.zeros((1, 3), np.int64), np.cumsum(d_flat, axis=0)])
    offs = pre[:-1] - np.repeat(pre[bounds[:-1]], lens, axis=0)
    totals = pre[bounds[1:]] - pre[bounds[:-1]]
    pa = p_in[flat] + offs
    pb = p_out[flat] + offs
    wa = b_in[flat]
    wb = b_out[flat]
    loops = []
    incidence = []
    for li in range(len(lens)):
        s, e = bounds[li], bounds[li + 1]
        m = int(e - s)
        poly = np.empty((2 * m, 3))
        poly[0::2] = pa[s:e]
        poly[1::2] = pb[s:e]
        # closed vertex walk homologous to the curve (push to below-vertices)
        iw = np.empty(2 * m, dtype=np.int64)
        iw[0::2] = wa[s:e]
        iw[1::2] = wb[s:e]
        keep = np.empty(2 * m, dtype=bool)
        keep[0] = True
        keep[1:] = iw[1:] != iw[:-1]
        w = iw[keep].tolist()
        if w[0] != w[-1]:
            w.append(w[0])
        start = int(flat[s])
        ci = int(ci_all[start])
        tri0 = int(tri_all[start])
        loops.append(SectionLoop(
            h=float(cut_heights[ci]),
            class3=(int(totals[li, 0]), int(totals[li, 1]), int(totals[li, 2])),
            walk=w if len(w) > 3 else [],
            polyline=poly,
            component=int(data["tri_component"][tri0]),
        ))
        incidence.append((tri0, int(kk_all[start]), ci))
    return loops, incidence


# ---------------------------------------------------------------------------
# piece-ladder decomposition
# ---------------------------------------------------------------------------

def _piece_ladder(mesh, data, bvec, hc, cuts):
    """Cut every triangle by all lifted cut planes and label the pieces.

    rho(x) counts cut values <= x (over all integer lifts); a triangle whose
    corner heights span [mn, mx] splits into rho(mx) - rho(mn) + 1 pieces.
    Gluing matched edge-piece ranges and running connected components gives
    the regions of the surface cut along every section curve at once.
    """
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    cuts = np.asarray(cuts, dtype=float)
    g = len(cuts)

    def rho(x):
        x = np.asarray(x, dtype=float)
        fl = np.floor(x)
        return (g * fl + np.searchsorted(cuts, x - fl, side="right")).astype(np.int64)

    mn = hc.min(axis=1)
    mx = hc.max(axis=1)
    rho_mn = rho(mn)
    npieces = rho(mx) - rho_mn + 1
    offsets = np.concatenate([[0], np.cumsum(npieces)])
    total = int(offsets[-1])

    # glue pieces across shared edges: every undirected edge occurs exactly
    # twice; sorting the edge keys pairs the two occurrences, and each pair
    # glues its whole aligned range of pieces at once
    tris = mesh.triangles
    nf = len(tris)
    keys = []
    starts = []
    lens = []
    for slot in range(3):
        u = tris[:, slot]
        v = tris[:, (slot + 1) % 3]
        sh = mesh.shifts[:, slot].astype(np.int64)
        lo = np.minimum(u, v)
        hi = np.maximum(u, v)
        key_shift = np.where((u <= v)[:, None], sh, -sh)
        ha = hc[np.arange(nf), slot]
        hb = hc[np.arange(nf), (slot + 1) % 3]
        jlo = rho(np.minimum(ha, hb)) - rho_mn
        jhi = rho(np.maximum(ha, hb)) - rho_mn
        keys.append(np.column_stack([lo, hi, key_shift]))
        starts.append(offsets[:-1] + jlo)
        lens.append(jhi - jlo + 1)
    keys = np.concatenate(keys)
    starts = np.concatenate(starts)
    lens = np.concatenate(lens)
    order = np.lexsort(keys.T[::-1])
    ks = keys[order]
    if len(order) % 2 or not np.array_equal(ks[0::2], ks[1::2]):
        raise FoliationError("unmatched mesh edges in piece gluing")
    sa, sb = starts[order[0::2]], starts[order[1::2]]
    la, lb = lens[order[0::2]], lens[order[1::2]]
    if not np.array_equal(la, lb):
        raise FoliationError("edge piece ranges disagree across a shared edge")
    step = np.arange(int(la.sum()), dtype=np.int64) \
        - np.repeat(np.concatenate([[0], np.cumsum(la[:-1])]), la)
    rows_a = np.repeat(sa, la) + step
    rows_b = np.repeat(sb, la) + step
    ones = np.ones(len(rows_a))
    adj = coo_matrix((ones, (rows_a, rows_b)), shape=(total, total))
    _, labels = connected_components(adj + adj.T, directed=False)

    def piece_of_cut(tri, kk, ci, side):
        """Global piece id just above/below cut ci lifted by kk in tri's frame."""
        r = g * kk + ci + 1           # rho at the cut value itself
        j = r - rho_mn[tri]
        if side == "below":
            j -= 1
        return int(labels[offsets[tri] + j])

    piece_tri = np.repeat(np.arange(nf), npieces)
    return labels, piece_of_cut, piece_tri, offsets, npieces, rho_mn, rho


def _newell(poly):
    """Signed projected-area vector (integral of the three coordinate
    2-forms) of a closed lifted polyline, by the polygon edge sum.

    Scalar arithmetic: the polygons are tiny (3-5 vertices) and this runs
    once per clipped piece, where array construction overhead dominates."""
    ax = ay = az = 0.0
    n = len(poly)
    x1, y1, z1 = poly[n - 1]
    for i in range(n):
        x2, y2, z2 = poly[i]
        ax += y1 * z2 - z1 * y2
        ay += z1 * x2 - x1 * z2
        az += x1 * y2 - y1 * x2
        x1, y1, z1 = x2, y2, z2
    return (0.5 * ax, 0.5 * ay, 0.5 * az)


def decompose(mesh: TorusMesh, b) -> FoliationDecomposition:
    """Full band decomposition of the section foliation in direction b.

    Critical heights are clustered, the surface is cut at a regular height
    inside every band, and the pieces are grouped into cylinders of closed
    curves and open-curve components with their torus 2-cycle classes.
    """
    direction = as_direction(b)
    if direction.kind != "rational":
        raise FoliationError("decompose requires a rational direction")
    data = _mesh_data(mesh)
    bvec = np.asarray(direction.vector, dtype=np.int64)
    notes = []
    if mesh.triangle_count == 0:
        return FoliationDecomposition(direction, [], [], [], [], ["empty surface"])
    hv, hc = _heights(mesh, data, bvec.astype(float))
    scale = 1.0 + float(np.abs(bvec).sum())

    saddles, merged, index_sum = _critical_values(mesh, data, bvec)
    chi = mesh.euler_characteristic
    if index_sum != chi:
        notes.append(f"critical index sum {index_sum} != Euler characteristic {chi}")
    cuts, skipped = _gap_midpoints(merged, hv, scale)
    if skipped:
        notes.append(f"skipped {len(skipped)} near-degenerate height bands")

    loops, incidence = _trace_cuts(mesh, data, bvec, hc, cuts)
    labels, piece_of_cut, piece_tri, offsets, npieces, rho_mn, rho = \
        _piece_ladder(mesh, data, bvec, hc, cuts)

    for lp, (tri0, kk0, ci) in zip(loops, incidence):
        lp.region_below = piece_of_cut(tri0, kk0, ci, "below")
        lp.region_above = piece_of_cut(tri0, kk0, ci, "above")
        if sum(c * int(x) for c, x in zip(lp.class3, bvec)) != 0:
            notes.append(f"section class {lp.class3} not orthogonal to {tuple(bvec)}")

    # group regions that touch any open loop
    parent = {}

    def find(x):
        while parent.get(x, x) != x:
            parent[x] = parent.get(parent[x], parent[x])
            x = parent[x]
        return x

    def union(x, y):
        rx, ry = find(x), find(y)
        if rx != ry:
            parent[rx] = ry

    for lp in loops:
        if not lp.is_closed:
            union(lp.region_below, lp.region_above)
    open_roots = {find(lp.region_below) for lp in loops if not lp.is_closed}

    # open components: regions + crossing open loops + boundary closed loops
    comp_regions = {}
    for lp_id, lp in enumerate(loops):
        rb, ra = find(lp.region_below), find(lp.region_above)
        if lp.is_closed:
            for r, raw in ((rb, lp.region_below), (ra, lp.region_above)):
                if r in open_roots:
                    comp_regions.setdefault(r, {"regions": set(), "loops": [],
                                                "boundary": []})
                    comp_regions[r]["regions"].add(raw)
                    comp_regions[r]["boundary"].append(
                        (lp_id, "below" if raw == lp.region_below else "above"))
        else:
            r = rb
            comp_regions.setdefault(r, {"regions": set(), "loops": [], "boundary": []})
            comp_regions[r]["regions"].update((lp.region_below, lp.region_above))
            comp_regions[r]["loops"].append(lp_id)

    # per-piece lifted area vectors, computed in closed form: the part of a
    # lifted triangle with heights in a band is a planar sub-polygon, so its
    # area vector is the triangle's full area vector times the scalar
    # fraction F(hi) - F(lo), where F(x) is the area fraction below height x
    q_all = mesh.positions[mesh.triangles] + data["corner_offsets"]
    n_full = 0.5 * np.cross(q_all[:, 1] - q_all[:, 0], q_all[:, 2] - q_all[:, 0])
    hs = np.sort(hc, axis=1)
    ha_t, hb_t, hc_t = (hs[:, 0][piece_tri], hs[:, 1][piece_tri],
                        hs[:, 2][piece_tri])
    g = len(cuts)
    cuts_arr = np.asarray(cuts, dtype=float)
    piece_j = np.arange(len(piece_tri), dtype=np.int64) \
        - np.repeat(offsets[:-1], npieces)
    ranks_lo = rho_mn[piece_tri] + piece_j

    def frac_below(rank):
        k, i = np.divmod(rank - 1, g)
        x = cuts_arr[i] + k
        dl = np.where(x > ha_t, x - ha_t, 0.0)
        du = np.where(x < hc_t, hc_t - x, 0.0)
        span = hc_t - ha_t
        lo_den = np.where((hb_t - ha_t) > 0, (hb_t - ha_t) * span, 1.0)
        up_den = np.where((hc_t - hb_t) > 0, (hc_t - hb_t) * span, 1.0)
        low = dl * dl / lo_den
        upp = 1.0 - du * du / up_den
        out = np.where(x < hb_t, low, upp)
        out = np.where(x <= ha_t, 0.0, out)
        out = np.where(x >= hc_t, 1.0, out)
        return out

    piece_frac = frac_below(ranks_lo + 1) - frac_below(ranks_lo)
    piece_area = piece_frac[:, None] * n_full[piece_tri]

    open_components = []
    region_labels = labels
    for root, info in comp_regions.items():
        in_set = np.isin(region_labels, sorted(info["regions"]))
        tri_in_count = np.zeros(len(mesh.triangles), dtype=np.int64)
        np.add.at(tri_in_count, piece_tri, in_set.astype(np.int64))
        area = piece_area[in_set].sum(axis=0)
        # caps along boundary closed curves (flat disks in the section plane)
        for lp_id, side in info["boundary"]:
            lp = loops[lp_id]
            cap = np.asarray(_newell(lp.polyline))
            # the open piece lies above the curve -> the cap closes it from
            # below with reversed boundary orientation
            area += cap if side == "below" else -cap
        cls = np.round(area)
        if np.max(np.abs(area - cls)) > 1e-5 * max(1.0, np.max(np.abs(area))):
            notes.append(f"open component class not integral: {area}")
            cls3 = (0, 0, 0)
        else:
            cls3 = tuple(int(x) for x in cls)
        open_components.append(OpenComponent(
            triangle_ids=np.nonzero(tri_in_count > 0)[0],
            two_cycle_class=cls3,
            loop_ids=info["loops"],
            boundary_loop_ids=[i for i, _ in info["boundary"]],
        ))

    # cylinders: chains of closed loops through purely-closed regions
    region_loops = {}
    for lp_id, lp in enumerate(loops):
        if lp.is_closed:
            for raw in (lp.region_below, lp.region_above):
                if find(raw) not in open_roots:
                    region_loops.setdefault(raw, []).append(lp_id)
    cparent = list(range(len(loops)))

    def cfind(x):
        while cparent[x] != x:
            cparent[x] = cparent[cparent[x]]
            x = cparent[x]
        return x

    for raw, ids in region_loops.items():
        if len(ids) == 2:
            a, b2 = cfind(ids[0]), cfind(ids[1])
            if a != b2:
                cparent[a] = b2
    chains = {}
    for lp_id, lp in enumerate(loops):
        if lp.is_closed and not (find(lp.region_below) in open_roots
                                 and find(lp.region_above) in open_roots):
            chains.setdefault(cfind(lp_id), []).append(lp_id)
    cylinders = [Cylinder(heights=sorted(loops[i].h for i in ids), loop_ids=sorted(ids))
                 for ids in chains.values()]
    cylinders.sort(key=lambda c: c.interval)

    return FoliationDecomposition(direction, cylinders, open_components,
                                  saddles, loops, notes)


# ---------------------------------------------------------------------------
# cached level analyses
# ---------------------------------------------------------------------------

class LevelAnalysis:
    """Mesh plus homology data for one (field, level, resolution) triple."""

    def __init__(self, fld, level, resolution):
        self.field = fld
        self.level = float(level)
        self.resolution = int(resolution)
        self.mesh = extract_isosurface(fld, level, resolution)
        validate_mesh(self.mesh)
        self.data = _mesh_data(self.mesh)
        self._bases = {}

    @property
    def components(self):
        return self.data["components"]

    def basis(self, ci):
        if ci not in self._bases:
            self._bases[ci] = cycle_basis(self.components[ci])
        return self._bases[ci]


_LEVEL_CACHE = {}
_LEVEL_CACHE_LIMIT = 6


def level_analysis(fld, level, resolution) -> LevelAnalysis:
    from .fields import serialize_model
    key = (serialize_model(fld), round(float(level), 12), int(resolution))
    hit = _LEVEL_CACHE.pop(key, None)
    if hit is None:
        hit = LevelAnalysis(fld, level, resolution)
    _LEVEL_CACHE[key] = hit
    while len(_LEVEL_CACHE) > _LEVEL_CACHE_LIMIT:
        _LEVEL_CACHE.pop(next(iter(_LEVEL_CACHE)))
    return hit


# ---------------------------------------------------------------------------
# the topological label
# ---------------------------------------------------------------------------

def _symplectic_label(analysis, decomposition):
    """Label via the symplectic orthogonal of the closed-curve classes.

    Per surface component carrying open curves: the classes of its closed
    section curves in H1 of the component span a subgroup; the push-forward
    of that subgroup's symplectic orthogonal into H1(T^3, Z) must be a
    rank-2 sublattice, and the label is its integer annihilator direction.
    """
    loops = decomposition.loops
    comps_with_open = sorted({lp.component for lp in loops if not lp.is_closed})
    candidates = []
    for ci in comps_with_open:
        basis = analysis.basis(ci)
        if basis.genus == 0:
            return None, f"open curves on a genus-0 component {ci}"
        coords = []
        for lp in loops:
            if lp.component == ci and lp.is_closed and lp.walk:
                coords.append(loop_coordinates(
                    basis, SurfaceLoop(lp.walk, lp.class3)))
        ortho = symplectic_orthogonal(analysis.basis(ci), coords)
        pushed = [class_from_coordinates(basis, list(row)) for row in ortho.generators]
        rows = [list(p) for p in pushed]
        rank = integer_rank(rows) if rows else 0
        if rank != 2:
            return None, f"closed-curve orthogonal pushes to rank {rank} (component {ci})"
        sub = sublattice_from_rows(rows, 3)
        try:
            candidates.append(tuple(annihilator_direction(sub)))
        except HomologyError as exc:
            return None, str(exc)
    uniq = set(candidates)
    if len(uniq) != 1:
        return None, f"components disagree on the label: {sorted(uniq)}"
    return candidates[0], ""


def compute_label(fld, level, b, resolution=DEFAULT_RESOLUTION) -> Label:
    """Topological label of direction b at the given level.

    OpenStable(l) requires both independent routes (symplectic orthogonal of
    closed-curve classes, and direct 2-cycle classes of capped open
    components) to produce the same coprime vector; any internal degeneracy
    or disagreement yields Undetermined.
    """
    direction = as_direction(b)
    if direction.kind != "rational":
        raise FoliationError("labels are defined for rational directions")
    try:
        analysis = level_analysis(fld, level, resolution)
    except MeshError as exc:
        return Label.undetermined(f"mesh extraction failed: {exc}")
    if analysis.mesh.triangle_count == 0:
        return Label.all_closed()
    try:
        dec = decompose(analysis.mesh, direction)
    except FoliationError as exc:
        return Label.undetermined(str(exc))
    hard = [n for n in dec.notes if "not orthogonal" in n or "not integral" in n
            or "index sum" in n]
    if hard:
        return Label.undetermined("; ".join(hard))
    if not dec.open_loops:
        return Label.all_closed()

    sym, reason = _symplectic_label(analysis, dec)
    if sym is None:
        return Label.undetermined(reason)

    direct = set()
    for oc in dec.open_components:
        cls = list(oc.two_cycle_class)
        if all(x == 0 for x in cls):
            return Label.undetermined("open component with zero 2-cycle class")
        if gcd(gcd(abs(cls[0]), abs(cls[1])), abs(cls[2])) != 1:
            return Label.undetermined(f"open component class {tuple(cls)} not primitive")
        direct.add(tuple(sign_normalize(cls)))
    if len(direct) != 1 or next(iter(direct)) != tuple(sym):
        return Label.undetermined(
            f"route disagreement: symplectic {tuple(sym)} vs direct {sorted(direct)}")

    # consistency: the sum of open-curve classes at any single height is a
    # multiple of the label (it equals +/- label times a positive count)
    return Label.open_stable(sym)


# ---------------------------------------------------------------------------
# energy intervals
# ---------------------------------------------------------------------------

def _has_open_section(fld, level, bvec, resolution, grid):
    """True iff some section curve at some regular height is open.

    Whether open curves exist is constant within each height band between
    critical heights but can differ across bands (near the ends of the open
    interval only a few bands still carry open curves), so every band gets
    one probe cut.  Classes come from the integer lift drift of the traced
    polylines; no homology machinery is needed here.
    """
    try:
        mesh = extract_isosurface(fld, level, resolution, grid=grid)
    except MeshError:
        return False
    if mesh.triangle_count == 0:
        return False
    try:
        data = _mesh_data(mesh)
        hv, hc = _heights(mesh, data, bvec.astype(float))
        scale = 1.0 + float(np.abs(bvec).sum())
        _, merged, _ = _critical_values(mesh, data, bvec)
        cuts, _ = _gap_midpoints(merged, hv, scale)
        loops, _ = _trace_cuts(mesh, data, bvec, hc, cuts)
        return any(not lp.is_closed for lp in loops)
    finally:
        # the cached arrays make mesh <-> components a reference cycle whose
        # bulk the generational collector does not see; probes churn through
        # one mesh per level, so break the cycle before dropping the mesh
        mesh._foliation_data = None


def _bracket(fn, lo, hi, flo, fhi, tol):
    """Bisect a boolean transition between lo (flo) and hi (fhi)."""
    for _ in range(MAX_BISECTIONS):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if fn(mid) == flo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _perturb_direction(direction):
    bx, by, bz = direction.vector
    j = int(np.argmin([abs(bx), abs(by), abs(bz)]))
    e = [0, 0, 0]
    e[j] = 1
    v = [32 * bx + e[0], 32 * by + e[1], 32 * bz + e[2]]
    return Direction.rational(v)


def energy_interval(fld, b, resolution=INTERVAL_RESOLUTION,
                    tolerance=1e-3) -> EnergyInterval:
    """Closed interval of levels whose sections contain open curves.

    A coarse sweep locates the interval, bisection refines both endpoints.
    If no sweep level shows open curves the direction is probed again with
    a nearby rational perturbation: if that finds an interval, the original
    direction's interval is reported as its midpoint (a single level),
    otherwise as empty.
    """
    direction = as_direction(b)
    if direction.kind != "rational":
        raise FoliationError("energy intervals require a rational direction")
    bvec = np.asarray(direction.vector, dtype=np.int64)
    from .fields import evaluate_grid
    grid = evaluate_grid(fld, resolution)
    amp = fld.amplitude_sum
    levels = np.linspace(-amp, amp, COARSE_LEVELS)

    def probe(c, bv=bvec):
        return _has_open_section(fld, float(c), bv, resolution, grid)

    flags = [probe(c) for c in levels]
    if not any(flags):
        alt = _perturb_direction(direction)
        bv2 = np.asarray(alt.vector, dtype=np.int64)
        flags2 = [probe(c, bv2) for c in levels]
        if not any(flags2):
            return EnergyInterval(0.0, 0.0, tolerance, "empty",
                                  "no open sections found at this or a "
                                  "perturbed direction")
        i = flags2.index(True)
        j = len(flags2) - 1 - flags2[::-1].index(True)
        low = _bracket(lambda c: probe(c, bv2), levels[i - 1] if i else -amp,
                       levels[i], False, True, tolerance)
        upp = _bracket(lambda c: probe(c, bv2), levels[j],
                       levels[j + 1] if j + 1 < len(levels) else amp,
                       True, False, tolerance)
        mid = float(0.5 * (low + upp))
        return EnergyInterval(mid, mid, tolerance, "point",
                              f"estimated from perturbed direction {alt.vector}")
    i = flags.index(True)
    j = len(flags) - 1 - flags[::-1].index(True)
    low = levels[i] if i == 0 else _bracket(probe, levels[i - 1], levels[i],
                                            False, True, tolerance)
    upp = levels[j] if j == len(levels) - 1 else _bracket(
        probe, levels[j], levels[j + 1], True, False, tolerance)
    return EnergyInterval(float(low), float(upp), tolerance, "interval")

