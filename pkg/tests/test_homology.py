import random

import pytest

from qptopo.homology import (
    HomologyError,
    RotationSystem,
    SurfaceLoop,
    _det_unimodular,
    _matmul,
    _symplectic_reduce,
    annihilator_direction,
    hermite_normal_form,
    integer_rank,
    intersection_number,
    left_kernel,
    primitive_vector,
    reduce_walk,
    sign_normalize,
    smith_normal_form,
    sublattice_from_rows,
    tree_cotree_loops,
    walk_class3,
)


def random_matrix(rng, rows, cols, lo=-9, hi=9):
    return [[rng.randint(lo, hi) for _ in range(cols)] for _ in range(rows)]


def test_snf_reconstruction_and_divisibility():
    rng = random.Random(7)
    for _ in range(40):
        rows = rng.randint(1, 6)
        cols = rng.randint(1, 6)
        m = random_matrix(rng, rows, cols)
        u, d, v = smith_normal_form(m)
        assert _matmul(_matmul(u, m), v) == d
        assert abs(_det_unimodular(u)) == 1
        assert abs(_det_unimodular(v)) == 1
        diag = [d[i][i] for i in range(min(rows, cols))]
        for i in range(rows):
            for j in range(cols):
                if i != j:
                    assert d[i][j] == 0
        for a, b in zip(diag, diag[1:]):
            assert a >= 0 and b >= 0
            if a == 0:
                assert b == 0
            else:
                assert b % a == 0


def test_snf_known_example():
    # diag gcd structure of a classic example
    m = [[2, 4, 4], [-6, 6, 12], [10, 4, 16]]
    _u, d, _v = smith_normal_form(m)
    assert [d[0][0], d[1][1], d[2][2]] == [2, 2, 156]


def test_left_kernel_annihilates_and_is_saturated():
    rng = random.Random(11)
    for _ in range(40):
        rows = rng.randint(1, 6)
        cols = rng.randint(1, 6)
        m = random_matrix(rng, rows, cols, -4, 4)
        ker = left_kernel(m)
        for y in ker:
            prod = [sum(y[i] * m[i][j] for i in range(rows)) for j in range(cols)]
            assert prod == [0] * cols
        assert len(ker) == rows - integer_rank(m)
        if ker:
            # saturation: SNF diagonal of the kernel basis is all ones
            _u, d, _v = smith_normal_form(ker)
            assert all(d[i][i] == 1 for i in range(len(ker)))


def test_hnf_is_lattice_canonical():
    rng = random.Random(13)
    for _ in range(30):
        rows = rng.randint(1, 5)
        cols = rng.randint(1, 5)
        m = random_matrix(rng, rows, cols, -5, 5)
        h = hermite_normal_form(m)
        # permuting and adding rows to each other preserves the row lattice
        m2 = [row[:] for row in m]
        rng.shuffle(m2)
        if len(m2) >= 2:
            m2[0] = [a + 3 * b for a, b in zip(m2[0], m2[1])]
            m2[1] = [-a for a in m2[1]]
        assert hermite_normal_form(m2) == h
        # pivot structure
        prev = -1
        for row in h:
            j = next(i for i, x in enumerate(row) if x != 0)
            assert j > prev
            assert row[j] > 0
            prev = j


def test_primitive_and_sign():
    assert primitive_vector([4, -6, 2]) == [2, -3, 1]
    assert sign_normalize([-2, 3, 0]) == [2, -3, 0]
    assert sign_normalize([0, 0, 5]) == [0, 0, 5]
    with pytest.raises(HomologyError):
        primitive_vector([0, 0, 0])


def test_annihilator_direction():
    sub = sublattice_from_rows([[1, 0, 0], [0, 1, 0]], 3)
    assert annihilator_direction(sub) == [0, 0, 1]
    sub = sublattice_from_rows([[2, 0, 2], [0, 3, 3]], 3)
    # cross product (2,0,2)x(0,3,3) = (-6,-6,6) -> (1,1,-1)
    assert annihilator_direction(sub) == [1, 1, -1]
    with pytest.raises(HomologyError):
        annihilator_direction(sublattice_from_rows([[1, 2, 3]], 3))


def test_symplectic_reduce_random_unimodular_forms():
    rng = random.Random(17)
    for _ in range(25):
        g = rng.randint(1, 3)
        n = 2 * g
        # start from the standard form and conjugate by a random unimodular
        j0 = [[0] * n for _ in range(n)]
        for i in range(0, n, 2):
            j0[i][i + 1] = 1
            j0[i + 1][i] = -1
        w = [[1 if i == j else 0 for j in range(n)] for i in range(n)]
        for _ in range(12):
            i, j = rng.sample(range(n), 2)
            q = rng.randint(-3, 3)
            for r in range(n):
                w[r][i] += q * w[r][j]
        wt = [[w[j][i] for j in range(n)] for i in range(n)]
        omega = _matmul(wt, _matmul(j0, w))
        u, d = _symplectic_reduce(omega)
        ut = [[u[j][i] for j in range(n)] for i in range(n)]
        assert _matmul(ut, _matmul(omega, u)) == d
        assert d == j0


def test_reduce_walk():
    assert reduce_walk([0, 1, 2, 1, 3, 0]) == [0, 1, 3, 0]
    assert reduce_walk([0, 1, 0]) == []
    assert reduce_walk([5, 2, 7, 2, 5]) == []
    # spike at the seam vertex
    assert reduce_walk([0, 1, 2, 3, 1, 0]) == [1, 2, 3, 1]


def _flat_torus(n):
    """Triangulated flat 2-torus on an n x n vertex grid, embedded in T^3
    as the z = 0 subtorus.  Returns (vertices, triangles, shift_of)."""
    def vid(i, j):
        return (i % n) * n + (j % n)

    triangles = []
    for i in range(n):
        for j in range(n):
            a = vid(i, j)
            b = vid(i + 1, j)
            c = vid(i + 1, j + 1)
            d = vid(i, j + 1)
            triangles.append((a, b, c))
            triangles.append((a, c, d))

    def shift_of(u, v):
        ui, uj = divmod(u, n)
        vi, vj = divmod(v, n)
        di = vi - ui
        dj = vj - uj
        # wrap steps of +-(n-1) cross the fundamental domain boundary
        sx = 1 if di == -(n - 1) else (-1 if di == n - 1 else 0)
        sy = 1 if dj == -(n - 1) else (-1 if dj == n - 1 else 0)
        return (sx, sy, 0)

    return list(range(n * n)), triangles, shift_of


def test_flat_torus_homology():
    verts, tris, shift_of = _flat_torus(5)
    rot = RotationSystem(tris)
    loops = tree_cotree_loops(verts, tris, shift_of)
    assert len(loops) == 2  # genus 1
    x = intersection_number(loops[0], loops[1], rot)
    assert abs(x) == 1
    # push-forwards span the z = 0 sublattice
    classes = [list(lp.class3) for lp in loops]
    assert integer_rank(classes) == 2
    sub = sublattice_from_rows(classes, 3)
    assert annihilator_direction(sub) == [0, 0, 1]


def test_flat_torus_self_intersection_of_shared_edges():
    verts, tris, shift_of = _flat_torus(4)
    rot = RotationSystem(tris)
    loops = tree_cotree_loops(verts, tris, shift_of)
    for lp in loops:
        assert intersection_number(lp, lp, rot) == 0


def test_walk_class3_straight_loop():
    n = 5
    _verts, tris, shift_of = _flat_torus(n)
    walk = [i * n for i in range(n)] + [0]
    assert walk_class3(walk, shift_of) == (1, 0, 0)
    rot = RotationSystem(tris)
    col = [i for i in range(n)] + [0]
    x = intersection_number(SurfaceLoop(walk, (1, 0, 0)), SurfaceLoop(col, (0, 1, 0)), rot)
    assert abs(x) == 1
