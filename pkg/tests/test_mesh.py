import numpy as np
import pytest

from qptopo.fields import builtin_model, evaluate, evaluate_grid
from qptopo.homology import integer_rank
from qptopo.mesh import (
    MeshError,
    embedding_rank,
    export_mesh,
    extract_isosurface,
    split_components,
    validate_mesh,
)


@pytest.fixture(scope="module")
def c3():
    return builtin_model("c3")


@pytest.fixture(scope="module")
def d4():
    return builtin_model("d4")


def voxel_blob_count(grid, level):
    """Periodic connected components of the voxel region {F > level}."""
    from scipy.ndimage import label

    mask = grid > level
    labels, n = label(mask)
    if n == 0:
        return 0
    # merge labels identified across the periodic wrap
    parent = list(range(n + 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a, b):
        if a and b:
            ra, rb = find(a), find(b)
            parent[ra] = rb

    for axis in range(3):
        lo = np.take(labels, 0, axis=axis).ravel()
        hi = np.take(labels, -1, axis=axis).ravel()
        for a, b in zip(lo, hi):
            if a and b:
                union(int(a), int(b))
    return len({find(x) for x in range(1, n + 1)})


def test_c3_level0_genus3(c3):
    mesh = extract_isosurface(c3, 0.0, 64)
    validate_mesh(mesh)
    comps = split_components(mesh)
    assert len(comps) == 1
    assert comps[0].euler_characteristic == -4
    assert comps[0].genus == 3
    assert embedding_rank(comps[0]) == 3


@pytest.mark.parametrize("level", [-0.5, 0.5])
def test_c3_inner_levels(c3, level):
    comps = split_components(extract_isosurface(c3, level, 64))
    assert [c.genus for c in comps] == [3]
    assert embedding_rank(comps[0]) == 3


@pytest.mark.parametrize("level", [-2.0, 2.0])
def test_c3_outer_levels_are_spheres(c3, level):
    grid = evaluate_grid(c3, 64)
    mesh = extract_isosurface(c3, level, 64, grid=grid)
    validate_mesh(mesh)
    comps = split_components(mesh)
    assert comps
    for comp in comps:
        assert comp.genus == 0
        assert embedding_rank(comp) == 0
    # component count against a voxel flood-fill oracle: each sphere bounds
    # one blob of {F > level} (level 2) or encloses one of {F < level}
    if level > 0:
        assert len(comps) == voxel_blob_count(grid, level)
    else:
        assert len(comps) == voxel_blob_count(-grid, -level)


@pytest.mark.parametrize("level", [-0.9, -0.5, -0.1])
def test_d4_inner_levels_unit_cell(d4, level):
    # in the unit torus the inner level set is one genus-7 surface; its
    # quotient by the half-diagonal translation symmetry is the genus-4
    # surface of the primitive (bcc) cell: chi -12 = 2 * (-6)
    mesh = extract_isosurface(d4, level, 64)
    validate_mesh(mesh)
    comps = split_components(mesh)
    assert len(comps) == 1
    assert comps[0].euler_characteristic == -12
    assert comps[0].genus == 7
    assert embedding_rank(comps[0]) == 3


def test_d4_positive_level_spheres(d4):
    comps = split_components(extract_isosurface(d4, 0.5, 64))
    assert len(comps) == 2  # one per half-diagonal translate
    assert all(c.genus == 0 for c in comps)


def test_d4_below_min_is_empty(d4):
    # min of the field is -1 (attained on curves), so the level set at any
    # c < -1 is empty
    mesh = extract_isosurface(d4, -1.5, 64)
    assert mesh.triangle_count == 0
    assert split_components(mesh) == []
    validate_mesh(mesh)


def test_refinement_stability(c3):
    results = []
    for res in (32, 48, 64):
        comps = split_components(extract_isosurface(c3, 0.0, res))
        results.append((len(comps), sorted(c.genus for c in comps)))
    assert results[0] == results[1] == results[2] == (1, [3])


def test_vertices_lie_on_surface(c3):
    mesh = extract_isosurface(c3, 0.3, 32)
    # linear interpolation error on a smooth field at h = 1/32
    for p in mesh.positions[::157]:
        assert abs(evaluate(c3, p) - 0.3) < 0.02


def test_euler_characteristic_even_random_fields():
    from qptopo.fields import FourierTerm, PeriodicField

    rng = np.random.default_rng(42)
    for _ in range(5):
        terms = tuple(
            FourierTerm(tuple(int(f) for f in rng.integers(-2, 3, size=3)),
                        float(rng.normal()), float(rng.uniform(0, 7)))
            for _ in range(4)
        )
        f = PeriodicField(3, terms)
        level = float(rng.uniform(-0.5, 0.5)) * f.amplitude_sum
        mesh = extract_isosurface(f, level, 16)
        validate_mesh(mesh)
        for comp in split_components(mesh):
            assert comp.euler_characteristic % 2 == 0
            assert comp.genus >= 0


def test_exact_grid_hit_is_nudged(c3):
    # level 1.0 is hit exactly by many grid samples of c3
    mesh = extract_isosurface(c3, 1.0, 32)
    validate_mesh(mesh)
    assert mesh.level != 1.0
    assert abs(mesh.level - 1.0) < 1e-4


def test_resolution_floor(c3):
    with pytest.raises(MeshError):
        extract_isosurface(c3, 0.0, 7)


def test_grid_reuse_matches(c3):
    grid = evaluate_grid(c3, 16)
    a = extract_isosurface(c3, 0.2, 16)
    b = extract_isosurface(c3, 0.2, 16, grid=grid)
    assert np.array_equal(a.triangles, b.triangles)
    assert np.allclose(a.positions, b.positions)
    with pytest.raises(MeshError):
        extract_isosurface(c3, 0.2, 32, grid=grid)


def test_export_obj(tmp_path, c3):
    mesh = extract_isosurface(c3, 0.0, 16)
    path = tmp_path / "surf.obj"
    export_mesh(mesh, path)
    text = path.read_text()
    assert text.count("\nv ") + text.startswith("v ") == mesh.vertex_count
    assert text.count("\nf ") == mesh.triangle_count
    # face indices are 1-based and in range
    last = text.strip().splitlines()[-1]
    assert last.startswith("f ")
    assert all(1 <= int(tok) <= mesh.vertex_count for tok in last.split()[1:])
