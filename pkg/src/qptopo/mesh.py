"""Watertight periodic isosurfaces on the 3-torus.

The level set {F = c} is triangulated by marching tetrahedra over the Kuhn
subdivision of the uniform N^3 cube grid.  The six tetrahedra per cube are
the chains of the corner poset, so every tetrahedron edge joins comparable
corners and the diagonal choices are translation invariant: adjacent cubes
(including cubes identified across the periodic wrap) agree face to face and
the resulting surface is a closed oriented 2-manifold inside T^3.

Each mesh vertex sits on an edge of the cube lattice and is stored once, at
its representative in the fundamental cell [0, 1)^3.  A triangle may cross
the wrap, so the mesh carries, for every directed triangle edge, the integer
lattice shift picked up when walking it.  These shifts are exactly what the
homology layer needs to push loops forward to H1(T^3, Z) = Z^3.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .homology import integer_rank, tree_cotree_loops

MIN_RESOLUTION = 8


class MeshError(ValueError):
    pass


# ---------------------------------------------------------------------------
# static tables: Kuhn tetrahedra and per-case triangle templates
# ---------------------------------------------------------------------------

# corner id c in 0..7 has offset bits (x, y, z) = (c & 1, c >> 1 & 1, c >> 2 & 1)
_CORNER_OFFSET = np.array([[c & 1, (c >> 1) & 1, (c >> 2) & 1] for c in range(8)])

# the 7 nonnegative edge directions of the Kuhn complex
_DIRECTIONS = [(1, 0, 0), (0, 1, 0), (0, 0, 1),
               (1, 1, 0), (1, 0, 1), (0, 1, 1), (1, 1, 1)]
_DIR_ID = {d: i for i, d in enumerate(_DIRECTIONS)}


def _perm_parity(seq) -> int:
    seq = list(seq)
    parity = 0
    for i in range(len(seq)):
        while seq[i] != i:
            j = seq[i]
            seq[i], seq[j] = seq[j], seq[i]
            parity ^= 1
    return parity


def _kuhn_tets():
    """Six positively oriented corner chains 0 -> 7 of the unit cube."""
    tets = []
    for perm in permutations(range(3)):
        chain = [0]
        acc = 0
        for axis in perm:
            acc |= 1 << axis
            chain.append(acc)
        if _perm_parity(perm):
            chain[2], chain[3] = chain[3], chain[2]
        tets.append(tuple(chain))
    return tets


def _canon_edge(u, v):
    """Order a comparable corner pair as (subset, superset)."""
    return (u, v) if (u | v) == v else (v, u)


def _case_triangles(tet, mask):
    """Triangles (as edge triples) cut out of one tetrahedron.

    ``mask`` has bit p set when tet vertex p lies above the level.  Output
    triangles are oriented with their normal pointing away from the
    above-level side, consistently across all cases, assuming the tet tuple
    is positively oriented.
    """
    ins = [p for p in range(4) if (mask >> p) & 1]
    outs = [p for p in range(4) if not (mask >> p) & 1]
    if not ins or not outs:
        return []
    order = ins + outs
    parity = _perm_parity(order)
    a, b, c, d = (tet[p] for p in order)
    if len(ins) == 1:
        tris = [((a, b), (a, c), (a, d))]
    elif len(ins) == 2:
        tris = [((a, c), (a, d), (b, d)), ((a, c), (b, d), (b, c))]
    else:
        tris = [((d, a), (d, b), (d, c))]
    tris = [tuple(_canon_edge(*e) for e in t) for t in tris]
    if parity:
        tris = [t[::-1] for t in tris]
    return tris


_TETS = _kuhn_tets()
# _TRI_TABLE[tet_index][mask] = list of triangles, each a triple of
# (lo_corner, hi_corner) cube edges
_TRI_TABLE = [[_case_triangles(tet, m) for m in range(16)] for tet in _TETS]


# ---------------------------------------------------------------------------
# mesh containers
# ---------------------------------------------------------------------------

@dataclass
class TorusMesh:
    """Closed oriented triangulated surface embedded in T^3.

    ``positions`` are representatives in [0, 1)^3.  ``shifts[f, a]`` is the
    integer lattice translation crossed by the directed edge from vertex
    ``triangles[f, a]`` to ``triangles[f, (a + 1) % 3]``.
    """

    positions: np.ndarray
    triangles: np.ndarray
    shifts: np.ndarray
    level: float
    resolution: int
    model: str = ""

    @property
    def vertex_count(self) -> int:
        return len(self.positions)

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    @property
    def euler_characteristic(self) -> int:
        return self.vertex_count - self.triangle_count // 2

    def edge_shift_map(self, triangle_ids=None):
        """Dict from directed edge (u, v) to its integer shift 3-tuple."""
        tris = self.triangles if triangle_ids is None else self.triangles[triangle_ids]
        shf = self.shifts if triangle_ids is None else self.shifts[triangle_ids]
        out = {}
        for t, s in zip(tris, shf):
            for a in range(3):
                u = int(t[a])
                v = int(t[(a + 1) % 3])
                sv = tuple(int(x) for x in s[a])
                prev = out.get((u, v))
                if prev is not None and prev != sv:
                    raise MeshError(
                        f"directed edge ({u}, {v}) carries conflicting shifts"
                    )
                out[(u, v)] = sv
                out[(v, u)] = tuple(-x for x in sv)
        return out


@dataclass
class SurfaceComponent:
    """One connected component of a TorusMesh."""

    mesh: TorusMesh
    vertex_ids: np.ndarray
    triangle_ids: np.ndarray
    _shift_map: dict = field(default=None, repr=False)

    @property
    def euler_characteristic(self) -> int:
        return len(self.vertex_ids) - len(self.triangle_ids) // 2

    @property
    def genus(self) -> int:
        chi = self.euler_characteristic
        if chi % 2:
            raise MeshError(f"component has odd Euler characteristic {chi}")
        return (2 - chi) // 2

    @property
    def triangles(self) -> np.ndarray:
        return self.mesh.triangles[self.triangle_ids]

    def shift_map(self):
        if self._shift_map is None:
            self._shift_map = self.mesh.edge_shift_map(self.triangle_ids)
        return self._shift_map

    def shift_of(self, u, v):
        return self.shift_map()[(u, v)]

    def generator_loops(self):
        """2g tree-cotree generator loops of H1 of this component."""
        tris = [tuple(int(x) for x in t) for t in self.triangles]
        verts = [int(v) for v in self.vertex_ids]
        return tree_cotree_loops(verts, tris, self.shift_of)


# ---------------------------------------------------------------------------
# extraction
# ---------------------------------------------------------------------------

def extract_isosurface(fld, level, resolution=64, grid=None) -> TorusMesh:
    """Triangulate {F = level} in T^3 on an N^3 sample grid.

    ``grid`` may pass precomputed samples from ``fields.evaluate_grid`` to
    let callers reuse them across levels.  If a grid sample comes too close
    to the level, the level is nudged by a few parts in 10^6 of the field
    amplitude sum: every tetrahedron then has corners of definite sign, and
    no mesh vertex grazes a grid corner (coincident vertex clusters would
    break the strict height orderings used downstream).
    """
    from .fields import evaluate_grid

    n = int(resolution)
    if n < MIN_RESOLUTION:
        raise MeshError(f"resolution must be >= {MIN_RESOLUTION}, got {resolution}")
    if grid is None:
        grid = evaluate_grid(fld, n)
    else:
        grid = np.asarray(grid, dtype=float)
        if grid.shape != (n, n, n):
            raise MeshError(f"grid shape {grid.shape} does not match resolution {n}")

    level = float(level)
    eps = 1e-6 * max(getattr(fld, "amplitude_sum", 1.0), 1.0)
    for _ in range(8):
        if np.min(np.abs(grid - level)) > eps:
            break
        level += 3 * eps
    else:
        raise MeshError("could not shift the level off the grid samples")

    pad = np.pad(grid, ((0, 1),) * 3, mode="wrap")
    corner_vals = [
        pad[dx:dx + n, dy:dy + n, dz:dz + n]
        for dx, dy, dz in _CORNER_OFFSET
    ]
    inside = [(cv > level).astype(np.int8) for cv in corner_vals]

    key_parts = []       # canonical global edge keys, one array per batch
    tpar_parts = []      # interpolation parameter along the edge
    base_parts = []      # wrapped base lattice point of the edge, (n, 3)
    dir_parts = []       # direction id of the edge
    tri_edge_keys = [[], [], []]   # per triangle corner: edge key arrays
    tri_edge_off = [[], [], []]    # per triangle corner: frame offset arrays

    def emit_edge(lo, hi, ii, jj, kk):
        """Vectorized data for cube edge (lo, hi) over selected cubes."""
        off_lo = _CORNER_OFFSET[lo]
        off_hi = _CORNER_OFFSET[hi]
        d = tuple(int(x) for x in off_hi - off_lo)
        px = ii + off_lo[0]
        py = jj + off_lo[1]
        pz = kk + off_lo[2]
        bx, by, bz = px % n, py % n, pz % n
        key = ((bx * n + by) * n + bz) * 7 + _DIR_ID[d]
        v_lo = corner_vals[lo][ii, jj, kk]
        v_hi = corner_vals[hi][ii, jj, kk]
        tpar = (level - v_lo) / (v_hi - v_lo)
        base = np.stack([bx, by, bz], axis=1)
        # frame offset of the vertex inside this cube instance: 1 on an axis
        # exactly when the base point wrapped
        offs = np.stack([px // n, py // n, pz // n], axis=1)
        return key, tpar, base, d, offs

    for tet_idx, tet in enumerate(_TETS):
        mask = (inside[tet[0]]
                + 2 * inside[tet[1]]
                + 4 * inside[tet[2]]
                + 8 * inside[tet[3]])
        for m in range(1, 15):
            tris = _TRI_TABLE[tet_idx][m]
            if not tris:
                continue
            sel = np.nonzero(mask == m)
            if len(sel[0]) == 0:
                continue
            ii, jj, kk = sel
            for tri in tris:
                for corner, (lo, hi) in enumerate(tri):
                    key, tpar, base, d, offs = emit_edge(lo, hi, ii, jj, kk)
                    key_parts.append(key)
                    tpar_parts.append(tpar)
                    base_parts.append(base)
                    dir_parts.append(np.full(len(key), _DIR_ID[d], dtype=np.int8))
                    tri_edge_keys[corner].append(key)
                    tri_edge_off[corner].append(offs)

    if not key_parts:
        return TorusMesh(
            positions=np.zeros((0, 3)),
            triangles=np.zeros((0, 3), dtype=np.int64),
            shifts=np.zeros((0, 3, 3), dtype=np.int8),
            level=level,
            resolution=n,
            model=getattr(fld, "name", ""),
        )

    all_keys = np.concatenate(key_parts)
    all_t = np.concatenate(tpar_parts)
    all_base = np.concatenate(base_parts)
    all_dir = np.concatenate(dir_parts)
    uniq, first, inv = np.unique(all_keys, return_index=True, return_inverse=True)
    dirs = np.asarray(_DIRECTIONS, dtype=float)
    positions = (all_base[first]
                 + all_t[first, None] * dirs[all_dir[first]]) / n
    positions %= 1.0

    lookup_sorted = uniq  # np.unique output is sorted; searchsorted maps keys
    tri_cols = []
    for corner in range(3):
        keys = np.concatenate(tri_edge_keys[corner])
        tri_cols.append(np.searchsorted(lookup_sorted, keys))
    triangles = np.stack(tri_cols, axis=1).astype(np.int64)
    offs = [np.concatenate(tri_edge_off[corner]) for corner in range(3)]
    shifts = np.stack(
        [offs[1] - offs[0], offs[2] - offs[1], offs[0] - offs[2]], axis=1
    ).astype(np.int8)

    return TorusMesh(
        positions=positions,
        triangles=triangles,
        shifts=shifts,
        level=level,
        resolution=n,
        model=getattr(fld, "name", ""),
    )


# ---------------------------------------------------------------------------
# component analysis and checks
# ---------------------------------------------------------------------------

def split_components(mesh: TorusMesh) -> list[SurfaceComponent]:
    """Connected components, largest triangle count first."""
    if mesh.triangle_count == 0:
        return []
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    nv = mesh.vertex_count
    rows = mesh.triangles[:, [0, 1, 2]].ravel()
    cols = mesh.triangles[:, [1, 2, 0]].ravel()
    adj = coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(nv, nv))
    ncomp, labels = connected_components(adj, directed=False)
    tri_label = labels[mesh.triangles[:, 0]]
    comps = []
    for c in range(ncomp):
        vids = np.nonzero(labels == c)[0]
        tids = np.nonzero(tri_label == c)[0]
        if len(tids) == 0:
            # isolated vertices cannot occur: every vertex comes from a triangle
            continue
        comps.append(SurfaceComponent(mesh, vids, tids))
    comps.sort(key=lambda c: -len(c.triangle_ids))
    return comps


def embedding_rank(component: SurfaceComponent) -> int:
    """Rank of the image of H1(component) in H1(T^3, Z) = Z^3 (0 to 3)."""
    loops = component.generator_loops()
    if not loops:
        return 0
    return integer_rank([list(lp.class3) for lp in loops])


def validate_mesh(mesh: TorusMesh) -> None:
    """Check closed-manifold structure; raises MeshError on any defect.

    Verifies that every directed edge occurs exactly once (so each undirected
    edge bounds exactly two consistently oriented triangles), that shifts are
    antisymmetric and triangle shift sums vanish, and that positions are
    canonical representatives.
    """
    if mesh.triangle_count == 0:
        if mesh.vertex_count:
            raise MeshError("vertices without triangles")
        return
    if np.any(mesh.positions < 0) or np.any(mesh.positions >= 1):
        raise MeshError("vertex positions must lie in [0, 1)^3")
    t = mesh.triangles
    if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 2] == t[:, 0])):
        raise MeshError("degenerate triangle with repeated vertex")
    if np.any(mesh.shifts.sum(axis=1) != 0):
        raise MeshError("triangle edge shifts do not sum to zero")
    # directed edge multiset: each (u, v) exactly once
    u = t[:, [0, 1, 2]].ravel().astype(np.int64)
    v = t[:, [1, 2, 0]].ravel().astype(np.int64)
    nv = mesh.vertex_count
    directed = u * nv + v
    if len(np.unique(directed)) != len(directed):
        raise MeshError("directed edge used by more than one triangle")
    fwd = np.sort(directed)
    rev = np.sort(v * nv + u)
    if not np.array_equal(fwd, rev):
        raise MeshError("surface has boundary or inconsistent orientation")
    # antisymmetry of shifts across the two sides of each edge
    s = mesh.shifts.reshape(-1, 3)
    order_f = np.argsort(directed, kind="stable")
    order_r = np.argsort(v * nv + u, kind="stable")
    if not np.array_equal(s[order_f], -s[order_r]):
        raise MeshError("edge shifts are not antisymmetric across triangles")
    if mesh.euler_characteristic % 2:
        raise MeshError("odd Euler characteristic")


def export_mesh(mesh: TorusMesh, path) -> None:
    """Write a Wavefront OBJ file.

    The OBJ format has no notion of periodic identification, so the surface
    is written as seen in the fundamental cell; triangles crossing the wrap
    will look like long slivers in a generic viewer.  A comment header
    records level and resolution.
    """
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# periodic isosurface, level {mesh.level!r}, "
                 f"grid {mesh.resolution}^3\n")
        if mesh.model:
            fh.write(f"# model {mesh.model}\n")
        for p in mesh.positions:
            fh.write(f"v {p[0]:.9f} {p[1]:.9f} {p[2]:.9f}\n")
        for t in mesh.triangles:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")
