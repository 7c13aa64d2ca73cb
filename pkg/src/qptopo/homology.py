"""Exact integer linear algebra and surface homology.

Everything here is over Z with Python integers: the open-orbit label is an
integer invariant, so floating-point ranks are the one failure mode this
module exists to rule out.

The surface part works on an oriented triangulated closed surface given by
its triangle list plus, for torus-embedded surfaces, the integer shift of
every directed edge (the lattice translation crossed when traversing it).
Loops are closed vertex walks; their push-forward into H1(T^3, Z) = Z^3 is
the sum of edge shifts along the walk.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd


class HomologyError(ValueError):
    pass


# ---------------------------------------------------------------------------
# integer matrices (lists of lists of python ints)
# ---------------------------------------------------------------------------

def _identity(n):
    return [[1 if i == j else 0 for j in range(n)] for i in range(n)]


def _matmul(a, b):
    n, k = len(a), len(b)
    m = len(b[0]) if b else 0
    out = [[0] * m for _ in range(n)]
    for i in range(n):
        ai = a[i]
        oi = out[i]
        for t in range(k):
            ait = ai[t]
            if ait:
                bt = b[t]
                for j in range(m):
                    oi[j] += ait * bt[j]
    return out


def _det_unimodular(m):
    """Determinant by fraction-free Gaussian elimination (Bareiss)."""
    a = [row[:] for row in m]
    n = len(a)
    if n == 0:
        return 1
    sign = 1
    prev = 1
    for k in range(n - 1):
        if a[k][k] == 0:
            for i in range(k + 1, n):
                if a[i][k] != 0:
                    a[k], a[i] = a[i], a[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
            a[i][k] = 0
        prev = a[k][k]
    return sign * a[-1][-1]


def smith_normal_form(m):
    """Smith normal form: returns (U, D, V) with U*m*V = D, U,V unimodular.

    D is diagonal with d1 | d2 | ... and nonnegative entries.  Exact integer
    arithmetic throughout.
    """
    a = [list(map(int, row)) for row in m]
    rows = len(a)
    cols = len(a[0]) if rows else 0
    u = _identity(rows)
    v = _identity(cols)

    def swap_rows(i, j):
        a[i], a[j] = a[j], a[i]
        u[i], u[j] = u[j], u[i]

    def swap_cols(i, j):
        for r in a:
            r[i], r[j] = r[j], r[i]
        for r in v:
            r[i], r[j] = r[j], r[i]

    def add_row(dst, src, q):
        # row dst += q * row src
        a[dst] = [x + q * y for x, y in zip(a[dst], a[src])]
        u[dst] = [x + q * y for x, y in zip(u[dst], u[src])]

    def add_col(dst, src, q):
        for r in a:
            r[dst] += q * r[src]
        for r in v:
            r[dst] += q * r[src]

    def negate_row(i):
        a[i] = [-x for x in a[i]]
        u[i] = [-x for x in u[i]]

    t = 0
    while True:
        # find the nonzero pivot of least magnitude in the remaining block
        pivot = None
        best = None
        for i in range(t, rows):
            for j in range(t, cols):
                x = a[i][j]
                if x != 0 and (best is None or abs(x) < best):
                    best = abs(x)
                    pivot = (i, j)
        if pivot is None:
            break
        pi, pj = pivot
        swap_rows(t, pi)
        swap_cols(t, pj)
        # clear row and column t; restarts handle remainders becoming pivots
        dirty = False
        for i in range(t + 1, rows):
            if a[i][t] != 0:
                q = -(a[i][t] // a[t][t])
                add_row(i, t, q)
                if a[i][t] != 0:
                    dirty = True
        for j in range(t + 1, cols):
            if a[t][j] != 0:
                q = -(a[t][j] // a[t][t])
                add_col(j, t, q)
                if a[t][j] != 0:
                    dirty = True
        if dirty:
            continue
        # enforce divisibility d_t | a[i][j] for the rest of the block
        p = a[t][t]
        offender = None
        for i in range(t + 1, rows):
            for j in range(t + 1, cols):
                if a[i][j] % p != 0:
                    offender = i
                    break
            if offender is not None:
                break
        if offender is not None:
            add_row(t, offender, 1)
            continue
        if p < 0:
            negate_row(t)
        t += 1

    return u, a, v


def integer_rank(m) -> int:
    """Rank over Q (equals rank over Z of the spanned lattice)."""
    if not m or not m[0]:
        return 0
    _u, d, _v = smith_normal_form(m)
    return sum(1 for i in range(min(len(d), len(d[0]))) if d[i][i] != 0)


def left_kernel(m):
    """Basis (list of rows) of {y : y @ m = 0}, a saturated sublattice."""
    if not m:
        return []
    u, d, _v = smith_normal_form(m)
    r = sum(1 for i in range(min(len(d), len(d[0]))) if d[i][i] != 0)
    return [row[:] for row in u[r:]]


def hermite_normal_form(m):
    """Row-style HNF of the lattice spanned by the rows; zero rows dropped.

    Pivots positive, entries above a pivot reduced into [0, pivot).  The HNF
    is the canonical representative of the row lattice, so equality of
    sublattices is equality of HNFs.
    """
    a = [list(map(int, row)) for row in m]
    if not a:
        return []
    rows = len(a)
    cols = len(a[0])
    r = 0
    for c in range(cols):
        # gcd-reduce column c below row r
        while True:
            piv = None
            best = None
            for i in range(r, rows):
                if a[i][c] != 0 and (best is None or abs(a[i][c]) < best):
                    best = abs(a[i][c])
                    piv = i
            if piv is None:
                break
            a[r], a[piv] = a[piv], a[r]
            done = True
            for i in range(r + 1, rows):
                if a[i][c] != 0:
                    q = a[i][c] // a[r][c]
                    a[i] = [x - q * y for x, y in zip(a[i], a[r])]
                    if a[i][c] != 0:
                        done = False
            if done:
                break
        if piv is None:
            continue
        if a[r][c] < 0:
            a[r] = [-x for x in a[r]]
        for i in range(r):
            q = a[i][c] // a[r][c]
            if q:
                a[i] = [x - q * y for x, y in zip(a[i], a[r])]
        r += 1
        if r == rows:
            break
    return [row for row in a[:r]]


def primitive_vector(v):
    """Divide out the gcd; raises on the zero vector."""
    g = 0
    for x in v:
        g = gcd(g, int(x))
    if g == 0:
        raise HomologyError("zero vector has no primitive representative")
    return [int(x) // g for x in v]


def sign_normalize(v):
    """Flip sign so the first nonzero component is positive."""
    for x in v:
        if x != 0:
            return [int(y) for y in v] if x > 0 else [-int(y) for y in v]
    return [int(y) for y in v]


@dataclass(frozen=True)
class Sublattice:
    """A sublattice of Z^n given by its HNF generator rows."""

    ambient_rank: int
    generators: tuple[tuple[int, ...], ...]

    @property
    def rank(self) -> int:
        return len(self.generators)


def sublattice_from_rows(rows, ambient_rank) -> Sublattice:
    hnf = hermite_normal_form(rows)
    return Sublattice(ambient_rank, tuple(tuple(r) for r in hnf))


def annihilator_direction(sub: Sublattice):
    """The coprime integer 3-vector orthogonal to a rank-2 sublattice of Z^3.

    Equals the cross product of two generators divided by its gcd, with the
    sign normalized so the first nonzero component is positive.
    """
    if sub.ambient_rank != 3:
        raise HomologyError("annihilator direction is defined in Z^3")
    if sub.rank != 2:
        raise HomologyError(f"sublattice has rank {sub.rank}, expected 2")
    (a1, a2, a3), (b1, b2, b3) = sub.generators
    cross = [a2 * b3 - a3 * b2, a3 * b1 - a1 * b3, a1 * b2 - a2 * b1]
    return sign_normalize(primitive_vector(cross))


# ---------------------------------------------------------------------------
# loops on an oriented triangulated surface
# ---------------------------------------------------------------------------

@dataclass
class SurfaceLoop:
    """A closed walk on a surface component, as a vertex sequence.

    ``vertices[0] == vertices[-1]``; ``class3`` is the sum of directed edge
    shifts along the walk, i.e. the push-forward into H1(T^3, Z).
    """

    vertices: list[int]
    class3: tuple[int, int, int]


def walk_class3(vertices, shift_of) -> tuple[int, int, int]:
    """Sum of edge shifts along a closed vertex walk.

    ``shift_of(u, v)`` returns the integer 3-vector shift of directed edge
    (u, v).
    """
    c = [0, 0, 0]
    for u, v in zip(vertices[:-1], vertices[1:]):
        s = shift_of(u, v)
        c[0] += s[0]
        c[1] += s[1]
        c[2] += s[2]
    return tuple(c)


def reduce_walk(vertices):
    """Cyclically cancel backtracks (u, v, u -> u); may return []."""
    if len(vertices) < 2:
        return []
    out = []
    for v in vertices[:-1]:
        if out and out[-1] == v:
            continue
        if len(out) >= 2 and out[-2] == v:
            out.pop()
        else:
            out.append(v)
    # cancellation across the seam of the cyclic word
    while True:
        if len(out) >= 2 and out[0] == out[-1]:
            out.pop()
            continue
        if len(out) >= 3 and out[1] == out[-1]:
            out = out[1:-1]
            continue
        break
    if len(out) < 3:
        # a cyclic word of length 2 is a single backtracked edge
        return []
    return out + [out[0]]


class RotationSystem:
    """Cyclic (counterclockwise) order of neighbors around each vertex.

    Built from consistently oriented triangles: triangle (a, b, c) says that
    around ``a`` the neighbor ``c`` follows ``b``.  On a closed oriented
    surface this successor map is a single cycle at every vertex.
    """

    def __init__(self, triangles):
        succ: dict[int, dict[int, int]] = {}
        for a, b, c in triangles:
            succ.setdefault(a, {})[b] = c
            succ.setdefault(b, {})[c] = a
            succ.setdefault(c, {})[a] = b
        self._succ = succ
        self._order: dict[int, list[int]] = {}
        self._index: dict[int, dict[int, int]] = {}
        for v, nxt in succ.items():
            start = next(iter(nxt))
            ring = [start]
            x = nxt[start]
            while x != start:
                ring.append(x)
                x = nxt[x]
                if len(ring) > len(nxt) + 1:
                    raise HomologyError(
                        f"rotation system at vertex {v} is not a single cycle"
                    )
            if len(ring) != len(nxt):
                raise HomologyError(
                    f"rotation system at vertex {v} is not a single cycle"
                )
            self._order[v] = ring
            self._index[v] = {x: i for i, x in enumerate(ring)}

    def ring(self, v):
        return self._order[v]

    def fan_clockwise(self, v, u, w):
        """Neighbors strictly between u and w going clockwise around v.

        This is the fan of edges crossed by the left push-off of a walk that
        enters v from u and leaves towards w.
        """
        ring = self._order[v]
        idx = self._index[v]
        n = len(ring)
        i = idx[u]
        j = idx[w]
        out = []
        k = (i - 1) % n
        while k != j:
            out.append(ring[k])
            k = (k - 1) % n
        return out


def intersection_number(a: SurfaceLoop, b: SurfaceLoop, rotation: RotationSystem) -> int:
    """Signed intersection number of two closed walks on an oriented surface.

    Perturbs ``b`` to its left push-off combinatorially: at every corner
    (u, v, w) of ``b`` the push-off crosses the edges (v, x) in the clockwise
    fan from u to w, from the left of (v, x); summing the net traversals of
    ``a`` over those edges gives the pairing.  Exact even when the walks
    share edges and vertices.
    """
    av = reduce_walk(a.vertices)
    bv = reduce_walk(b.vertices)
    if len(av) < 2 or len(bv) < 2:
        return 0
    # net traversal count of a over each directed edge
    net: dict[tuple[int, int], int] = {}
    for u, v in zip(av[:-1], av[1:]):
        net[(u, v)] = net.get((u, v), 0) + 1
        net[(v, u)] = net.get((v, u), 0) - 1
    total = 0
    m = len(bv) - 1
    for i in range(m):
        u = bv[i - 1] if i > 0 else bv[m - 1]
        v = bv[i]
        w = bv[i + 1]
        for x in rotation.fan_clockwise(v, u, w):
            t = net.get((v, x))
            if t:
                total += t
    return total


# ---------------------------------------------------------------------------
# cycle basis via tree-cotree decomposition + symplectic reduction
# ---------------------------------------------------------------------------

def tree_cotree_loops(vertices, triangles, shift_of):
    """2g independent generator loops of H1 for one surface component.

    Tree-cotree: a BFS spanning tree of the vertex graph, a spanning tree of
    the dual (triangle adjacency) graph avoiding primal tree edges, and one
    generator loop per leftover edge (cotree path through the primal tree).
    """
    verts = list(vertices)
    vset = set(verts)
    adj: dict[int, list[int]] = {v: [] for v in verts}
    edges = set()
    tri_of_edge: dict[tuple[int, int], int] = {}
    for ti, (a, b, c) in enumerate(triangles):
        for u, v in ((a, b), (b, c), (c, a)):
            tri_of_edge[(u, v)] = ti
            key = (u, v) if u < v else (v, u)
            if key not in edges:
                edges.add(key)
                adj[u].append(v)
                adj[v].append(u)
    root = verts[0]
    parent = {root: None}
    order = [root]
    head = 0
    tree_edges = set()
    while head < len(order):
        v = order[head]
        head += 1
        for w in adj[v]:
            if w not in parent:
                parent[w] = v
                tree_edges.add((v, w) if v < w else (w, v))
                order.append(w)
    if len(order) != len(vset):
        raise HomologyError("component vertex graph is not connected")

    # dual spanning tree over triangles through non-tree edges
    ntri = len(triangles)
    dual_seen = [False] * ntri
    dual_seen[0] = True
    crossed = set()
    queue = [0]
    while queue:
        ti = queue.pop()
        a, b, c = triangles[ti]
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            if key in tree_edges or key in crossed:
                continue
            tj = tri_of_edge.get((v, u))
            if tj is None:
                raise HomologyError(f"surface not closed at edge {key}")
            if not dual_seen[tj]:
                dual_seen[tj] = True
                crossed.add(key)
                queue.append(tj)
    leftover = [e for e in edges if e not in tree_edges and e not in crossed]

    def path_to_root(v):
        path = [v]
        while parent[path[-1]] is not None:
            path.append(parent[path[-1]])
        return path

    loops = []
    for u, v in leftover:
        up = path_to_root(u)
        vp = path_to_root(v)
        walk = list(reversed(up))   # root .. u
        walk.append(v)
        walk.extend(vp[1:])         # v .. root
        walk = _reduce_rooted(walk)
        loops.append(SurfaceLoop(walk, walk_class3(walk, shift_of)))
    return loops


def _reduce_rooted(walk):
    """Cancel backtracks while keeping the first vertex as basepoint.

    Unlike reduce_walk this never rotates the cyclic word, so all loops from
    one spanning tree stay based at the tree root (required when they are
    concatenated into integer combinations).
    """
    out = [walk[0]]
    for v in walk[1:]:
        if len(out) >= 2 and out[-2] == v:
            out.pop()
        elif out[-1] == v:
            continue
        else:
            out.append(v)
    if len(out) <= 2:
        return []
    if out[0] != out[-1]:
        raise HomologyError("rooted reduction broke loop closure")
    return out


def _symplectic_reduce(omega):
    """U with U^T * omega * U in standard symplectic form (for unimodular
    antisymmetric omega); returns (U, J)."""
    n = len(omega)
    a = [row[:] for row in omega]
    u = _identity(n)

    def add_col(dst, src, q):
        # basis change b_dst += q b_src: congruence on a, column op on u
        for r in range(n):
            a[r][dst] += q * a[r][src]
        for r in range(n):
            a[dst][r] += q * a[src][r]
        for r in range(n):
            u[r][dst] += q * u[r][src]

    def swap_cols(i, j):
        for r in range(n):
            a[r][i], a[r][j] = a[r][j], a[r][i]
        for r in range(n):
            a[i][r], a[j][r] = a[j][r], a[i][r]
        for r in range(n):
            u[r][i], u[r][j] = u[r][j], u[r][i]

    t = 0
    while t < n:
        while True:
            # minimal nonzero entry of the remaining block goes to (t, t+1)
            piv = None
            best = None
            for i in range(t, n):
                for j in range(t, n):
                    x = a[i][j]
                    if x != 0 and (best is None or abs(x) < best):
                        best = abs(x)
                        piv = (i, j)
            if piv is None:
                raise HomologyError("intersection form is degenerate")
            i, j = piv
            if i != t:
                swap_cols(t, i)
                if j == t:
                    j = i
            if j != t + 1:
                swap_cols(t + 1, j)
            if a[t][t + 1] < 0:
                swap_cols(t, t + 1)
            p = a[t][t + 1]
            # reduce rows t and t+1 modulo p; a[t][t+1] is untouched since
            # a[t][t] = a[t+1][t+1] = 0
            clean = True
            for r in range(t + 2, n):
                if a[t][r] != 0:
                    add_col(r, t + 1, -(a[t][r] // p))
                    if a[t][r] != 0:
                        clean = False
                if a[t + 1][r] != 0:
                    add_col(r, t, a[t + 1][r] // p)
                    if a[t + 1][r] != 0:
                        clean = False
            if clean:
                break
            # remainders below |p| exist, so the next pass gets a strictly
            # smaller pivot and the loop terminates
        if a[t][t + 1] != 1:
            raise HomologyError(
                f"intersection form is not unimodular (pivot {a[t][t + 1]})"
            )
        t += 2
    return u, a


def canonical_cycle_basis(loops, rotation: RotationSystem, shift_of):
    """Canonicalize generator loops to a symplectic basis {e_i, f_i}.

    Returns (basis_loops, pairing) where pairing is the 2g x 2g standard
    symplectic matrix realized by the returned loops.  Basis loops are
    integer concatenations of the generators (all share the tree root as
    basepoint), reduced of backtracks.
    """
    n = len(loops)
    if n == 0:
        return [], []
    omega = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            x = intersection_number(loops[i], loops[j], rotation)
            omega[i][j] = x
            omega[j][i] = -x
    u, j = _symplectic_reduce(omega)
    basis = []
    for col in range(n):
        coeffs = [u[r][col] for r in range(n)]
        walk = _concatenate_walks(loops, coeffs)
        basis.append(SurfaceLoop(walk, walk_class3(walk, shift_of) if len(walk) > 1 else (0, 0, 0)))
    return basis, j


@dataclass
class CycleBasis:
    """Canonical symplectic H1 basis of one surface component.

    ``loops[2i], loops[2i+1]`` are a dual pair: the pairing matrix is the
    standard symplectic form (pairing[2i][2i+1] = 1).  ``rotation`` is kept
    so later loops on the same component can be paired against the basis.
    """

    loops: list
    pairing: list
    rotation: RotationSystem = None

    @property
    def genus(self) -> int:
        return len(self.loops) // 2


def cycle_basis(component) -> CycleBasis:
    """Canonical symplectic cycle basis of a surface component.

    ``component`` provides ``generator_loops()``, ``triangles`` and
    ``shift_of`` (see the mesh module).  Genus 0 gives an empty basis.
    """
    loops = component.generator_loops()
    tris = [tuple(int(x) for x in t) for t in component.triangles]
    rot = RotationSystem(tris)
    if not loops:
        return CycleBasis([], [], rot)
    basis, pairing = canonical_cycle_basis(loops, rot, component.shift_of)
    return CycleBasis(basis, pairing, rot)


def _basis_edge_nets(basis: CycleBasis):
    """Directed-edge traversal counts of every basis loop, merged into one
    dict edge -> count vector.  Cached on the basis: it is reused for every
    loop paired against the same basis."""
    nets = getattr(basis, "_edge_nets", None)
    if nets is None:
        n = len(basis.loops)
        nets = {}
        for j, bl in enumerate(basis.loops):
            av = reduce_walk(bl.vertices)
            for u, v in zip(av[:-1], av[1:]):
                row = nets.get((u, v))
                if row is None:
                    row = nets[(u, v)] = [0] * n
                row[j] += 1
                row = nets.get((v, u))
                if row is None:
                    row = nets[(v, u)] = [0] * n
                row[j] -= 1
        object.__setattr__(basis, "_edge_nets", nets)
    return nets


def loop_coordinates(basis: CycleBasis, loop: SurfaceLoop):
    """Integer coordinates of a loop's H1 class in the canonical basis.

    With pairing matrix J, the pairing vector p_j = <b_j, x> determines the
    coordinates as c = -J p (J is the standard form, J^2 = -I).  The loop's
    left push-off is traversed once, pairing against all basis loops
    simultaneously.
    """
    n = len(basis.loops)
    if n == 0:
        return []
    nets = _basis_edge_nets(basis)
    p = [0] * n
    bv = reduce_walk(loop.vertices)
    if len(bv) >= 2:
        fan = basis.rotation.fan_clockwise
        m = len(bv) - 1
        for i in range(m):
            u = bv[i - 1] if i > 0 else bv[m - 1]
            v = bv[i]
            w = bv[i + 1]
            for x in fan(v, u, w):
                row = nets.get((v, x))
                if row is not None:
                    for k in range(n):
                        p[k] += row[k]
    j = basis.pairing
    return [-sum(j[i][k] * p[k] for k in range(n)) for i in range(n)]


def class_from_coordinates(basis: CycleBasis, coords):
    """Push coordinates forward to H1(T^3, Z) via the basis loop classes."""
    out = [0, 0, 0]
    for c, lp in zip(coords, basis.loops):
        for i in range(3):
            out[i] += c * lp.class3[i]
    return tuple(out)


def symplectic_orthogonal(basis: CycleBasis, classes) -> Sublattice:
    """Sublattice of H1(M, Z) pairing to zero with every given class.

    ``classes`` are integer 2g-coordinate vectors in the canonical basis.
    The result is saturated (a direct summand), in basis coordinates.
    """
    n = len(basis.loops)
    if not classes:
        return sublattice_from_rows(_identity(n), n)
    j = basis.pairing
    # columns are J @ c for each class c
    a = [[sum(j[r][k] * c[k] for k in range(n)) for c in classes] for r in range(n)]
    return sublattice_from_rows(left_kernel(a), n)


def _concatenate_walks(loops, coeffs):
    """Closed walk realizing an integer combination of basepointed loops."""
    base = None
    for lp in loops:
        if lp.vertices:
            base = lp.vertices[0]
            break
    walk = [base]
    for lp, c in zip(loops, coeffs):
        if c == 0 or len(lp.vertices) < 2:
            continue
        seg = lp.vertices[:-1]
        if c < 0:
            seg = list(reversed(lp.vertices))[:-1]
            c = -c
        if seg[0] != base:
            raise HomologyError("generator loops must share a basepoint")
        for _ in range(c):
            walk.extend(seg[1:])
            walk.append(base)
    if len(walk) == 1:
        return []
    return reduce_walk(walk)
