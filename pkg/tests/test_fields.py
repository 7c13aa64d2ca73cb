import math

import numpy as np
import pytest

from qptopo.fields import (
    FieldError,
    FourierTerm,
    ParseError,
    PeriodicField,
    available_models,
    builtin_model,
    cyclotron_average,
    evaluate,
    evaluate_grid,
    gradient,
    parse_model,
    reciprocal_basis,
    register_model,
    serialize_model,
)


def random_field(rng, dim, nterms=5):
    terms = []
    for _ in range(nterms):
        freq = tuple(int(f) for f in rng.integers(-3, 4, size=dim))
        terms.append(FourierTerm(freq, float(rng.normal()), float(rng.uniform(0, 7))))
    return PeriodicField(dim, tuple(terms))


def test_periodicity():
    rng = np.random.default_rng(0)
    f = random_field(rng, 3)
    for _ in range(1000):
        p = rng.uniform(-2, 2, size=3)
        shift = rng.integers(-3, 4, size=3).astype(float)
        assert abs(evaluate(f, p) - evaluate(f, p + shift)) < 1e-12


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(1)
    h = 1e-5
    for dim in (2, 3, 4):
        f = random_field(rng, dim)
        scale = max(1.0, f.amplitude_sum)
        for _ in range(50):
            p = rng.uniform(0, 1, size=dim)
            g = gradient(f, p)
            for k in range(dim):
                e = np.zeros(dim)
                e[k] = h
                num = (evaluate(f, p + e) - evaluate(f, p - e)) / (2 * h)
                assert abs(num - g[k]) < 1e-6 * scale * (1 + abs(g[k]))


def test_amplitude_sum_bounds_values():
    rng = np.random.default_rng(2)
    f = random_field(rng, 3, nterms=7)
    pts = rng.uniform(0, 1, size=(10000, 3))
    bound = f.amplitude_sum + 1e-12
    for p in pts[:200]:
        assert abs(evaluate(f, p)) <= bound
    vals = sum(
        t.amplitude * np.cos(2 * np.pi * pts @ np.asarray(t.frequency) + t.phase)
        for t in f.terms
    )
    assert np.max(np.abs(vals)) <= bound


def test_evaluate_grid_matches_pointwise():
    rng = np.random.default_rng(3)
    f = random_field(rng, 3)
    n = 8
    grid = evaluate_grid(f, n)
    for _ in range(30):
        i, j, k = rng.integers(0, n, size=3)
        assert grid[i, j, k] == pytest.approx(evaluate(f, (i / n, j / n, k / n)), abs=1e-12)


def test_builtin_c3():
    f = builtin_model("c3")
    p = (0.13, 0.47, 0.81)
    direct = sum(math.cos(2 * math.pi * x) for x in p)
    assert evaluate(f, p) == pytest.approx(direct, abs=1e-14)
    assert f.amplitude_sum == 3.0


def test_builtin_d4_matches_product_form():
    f = builtin_model("d4")
    rng = np.random.default_rng(4)
    for _ in range(100):
        x, y, z = rng.uniform(0, 1, size=3)
        cx, cy, cz = (math.cos(2 * math.pi * t) for t in (x, y, z))
        direct = cx * cy + cy * cz + cz * cx
        assert evaluate(f, (x, y, z)) == pytest.approx(direct, abs=1e-12)


def test_model_registry():
    assert "c3" in available_models() and "d4" in available_models()
    with pytest.raises(KeyError):
        builtin_model("nope")
    with pytest.raises(FieldError):
        register_model("c3", builtin_model("d4"))
    extra = PeriodicField(3, (FourierTerm((1, 0, 0), 2.0),))
    register_model("extra_test_model", extra)
    assert builtin_model("extra_test_model") is extra


def test_parse_roundtrip():
    rng = np.random.default_rng(5)
    for dim in (2, 3, 4):
        f = random_field(rng, dim)
        g = parse_model(serialize_model(f))
        assert g.dimension == f.dimension
        assert len(g.terms) == len(f.terms)
        p = rng.uniform(0, 1, size=dim)
        assert evaluate(f, p) == pytest.approx(evaluate(g, p), abs=1e-12)


def test_parse_format_variants():
    text = """
    # a comment
    dim = 3
    (1, 0, 0)  1.0        # parenthesized
    0 1 0  1.0  0.5       # with phase
    0, 0, 1  -0.25
    """
    f = parse_model(text)
    assert f.dimension == 3
    assert len(f.terms) == 3
    assert f.terms[1].phase == pytest.approx(0.5)


def test_parse_errors_carry_line_numbers():
    with pytest.raises(ParseError) as exc:
        parse_model("dim = 3\n1 0 0 oops\n")
    assert exc.value.lineno == 2
    with pytest.raises(ParseError) as exc:
        parse_model("1 0 0 1.0\n0.5 0 0 1.0\n")
    assert exc.value.lineno == 2
    with pytest.raises(ParseError) as exc:
        parse_model("dim = 3\ndim = 3\n")
    assert exc.value.lineno == 2
    with pytest.raises(ParseError) as exc:
        parse_model("dim = 5\n")
    assert exc.value.lineno == 1


def test_field_validation():
    with pytest.raises(FieldError):
        FourierTerm((1.5, 0, 0), 1.0)
    with pytest.raises(FieldError):
        FourierTerm((1, 0, 0), math.inf)
    with pytest.raises(FieldError):
        PeriodicField(5, ())
    with pytest.raises(FieldError):
        PeriodicField(3, (FourierTerm((1, 0), 1.0),))
    with pytest.raises(FieldError):
        evaluate(builtin_model("c3"), (0.1, 0.2))


def test_reciprocal_basis():
    lat = reciprocal_basis((1, 0, 0), (0, 2, 0), (0, 0, 1))
    a = np.array([lat.a1, lat.a2, lat.a3])
    l = np.array([lat.l1, lat.l2, lat.l3])
    assert np.allclose(a @ l.T, 2 * np.pi * np.eye(3), atol=1e-12)
    with pytest.raises(np.linalg.LinAlgError):
        reciprocal_basis((1, 0, 0), (2, 0, 0), (0, 0, 1))


def test_cyclotron_average_radius_zero_is_identity():
    rng = np.random.default_rng(6)
    f = random_field(rng, 2)
    g = cyclotron_average(f, 0.0)
    p = rng.uniform(0, 1, size=2)
    assert evaluate(g, p) == pytest.approx(evaluate(f, p), abs=1e-14)


def test_cyclotron_average_matches_direct_circle_sampling():
    rng = np.random.default_rng(7)
    for _ in range(20):
        f = random_field(rng, 2, nterms=3)
        r = float(rng.uniform(0.05, 1.5))
        g = cyclotron_average(f, r)
        p = rng.uniform(0, 1, size=2)
        # very fine trapezoid over the circle; integrand is smooth and
        # periodic so this converges spectrally
        m = 4096
        th = 2 * np.pi * np.arange(m) / m
        circle = p + r * np.stack([np.cos(th), np.sin(th)], axis=1)
        direct = 0.0
        for t in f.terms:
            direct += np.mean(
                t.amplitude * np.cos(2 * np.pi * circle @ np.asarray(t.frequency) + t.phase)
            )
        assert evaluate(g, p) == pytest.approx(direct, abs=1e-8)


def test_cyclotron_average_rejects_3d():
    with pytest.raises(FieldError):
        cyclotron_average(builtin_model("c3"), 1.0)
