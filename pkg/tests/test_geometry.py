import math

import numpy as np
import pytest

from poissonnci.geometry import (
    BivectorField,
    CallableBivector,
    CallableField,
    Chart,
    ChartMismatchError,
    ExprBivector,
    ExprField,
    bracket,
    canonical_bivector,
    coordinate_field,
    coordinate_fields,
    hamiltonian_vector_field,
    jacobi_coordinate_residuals,
    jacobi_residual,
    product_field,
    rank_at,
    scaled_field,
    sharp,
    wrap_half,
)


@pytest.fixture
def r2():
    chart = Chart("r2", ("q", "p"))
    pi = canonical_bivector(chart, [(0, 1)])
    return chart, pi


@pytest.fixture
def lie_poisson():
    # {x,y} = z, {y,z} = x, {z,x} = y
    chart = Chart("so3_dual", ("x", "y", "z"))
    pi = ExprBivector(chart, "lie_poisson", {(0, 1): "z", (0, 2): "-y", (1, 2): "x"})
    return chart, pi


@pytest.fixture
def not_nci():
    chart = Chart("circle_times_r3", ("th", "x", "y", "z"), periodic=(True, False, False, False))
    pi = ExprBivector(
        chart,
        "not_nci",
        {(0, 3): 1.0, (1, 2): "x^2+y^2", (1, 3): "y", (2, 3): "-x"},
    )
    return chart, pi


# --- charts and points


def test_chart_wraps_periodic_coordinates():
    chart = Chart("t2", ("a", "b"), periodic=(True, True))
    p = chart.point([1.3, -0.25])
    assert p.values == pytest.approx([0.3, 0.75])


def test_chart_distance_wraps():
    chart = Chart("t1xr", ("a", "r"), periodic=(True, False))
    d = chart.distance(np.array([0.95, 1.0]), np.array([0.05, 1.0]))
    assert d == pytest.approx(0.1, abs=1e-15)


def test_chart_validation():
    with pytest.raises(ValueError):
        Chart("bad", ("a", "a"))
    chart = Chart("c", ("a",))
    with pytest.raises(ValueError):
        chart.point([float("nan")])
    with pytest.raises(ValueError):
        chart.point([1.0, 2.0])


def test_wrap_half():
    assert wrap_half(0.9) == pytest.approx(-0.1)
    assert wrap_half(-0.9) == pytest.approx(0.1)
    assert wrap_half(0.2) == pytest.approx(0.2)


def test_chart_mismatch_is_hard_error(r2, lie_poisson):
    _, pi = r2
    chart3, _ = lie_poisson
    f = coordinate_field(chart3, "x")
    with pytest.raises(ChartMismatchError):
        bracket(pi, f, f, chart3.point([1.0, 2.0, 3.0]))


# --- brackets


def test_bracket_canonical_pair(r2):
    chart, pi = r2
    q, p = coordinate_fields(chart)
    for vals in ([0.0, 0.0], [1.5, -2.0]):
        assert bracket(pi, q, p, chart.point(vals)) == 1.0


def test_bracket_lie_poisson_value(lie_poisson):
    chart, pi = lie_poisson
    x, y, _ = coordinate_fields(chart)
    assert bracket(pi, x, y, chart.point([0.3, -1.0, 2.0])) == 2.0


def test_bracket_antisymmetry_exact(lie_poisson):
    chart, pi = lie_poisson
    f = ExprField(chart, "f", "x*y + sin(z)")
    g = ExprField(chart, "g", "x^2 - z")
    pt = chart.point([0.7, -0.4, 1.1])
    assert bracket(pi, f, g, pt) == -bracket(pi, g, f, pt)
    assert bracket(pi, f, f, pt) == 0.0


def test_bracket_leibniz_rule(lie_poisson):
    chart, pi = lie_poisson
    rng = np.random.default_rng(8)
    f = ExprField(chart, "f", "x*y")
    g = ExprField(chart, "g", "z^2 + x")
    h = ExprField(chart, "h", "sin(y) + z")
    fg = product_field(f, g)
    for _ in range(20):
        pt = chart.point(rng.uniform(-2, 2, size=3))
        lhs = bracket(pi, fg, h, pt)
        rhs = f.value(pt) * bracket(pi, g, h, pt) + g.value(pt) * bracket(pi, f, h, pt)
        assert abs(lhs - rhs) <= 1e-8 * max(1.0, abs(lhs))


# --- Hamiltonian vector fields and sharp


def test_hamiltonian_field_semi_local_model():
    chart = Chart("semi", ("th1", "p1"), periodic=(True, False))
    pi = canonical_bivector(chart, [(0, 1)])
    p1 = coordinate_field(chart, "p1")
    xh = hamiltonian_vector_field(pi, p1, chart.point([0.2, 0.7]))
    assert np.allclose(xh, [1.0, 0.0])


def test_hamiltonian_field_of_casimir_vanishes(lie_poisson):
    chart, pi = lie_poisson
    c = ExprField(chart, "C", "x^2+y^2+z^2")
    xc = hamiltonian_vector_field(pi, c, chart.point([1.0, 2.0, 3.0]))
    assert np.allclose(xc, 0.0, atol=1e-14)


def test_sharp_zero_covector(lie_poisson):
    chart, pi = lie_poisson
    out = sharp(pi, [0.0, 0.0, 0.0], chart.point([1.0, -1.0, 0.5]))
    assert np.allclose(out, 0.0)


def test_sharp_non_nci_witness(not_nci):
    chart, pi = not_nci
    pt = chart.point([0.2, 1.0, 0.0, 0.7])
    # alpha = dx - dz with a = x0/(x0^2+y0^2) = 1, b = 0
    out = sharp(pi, [0.0, 1.0, 0.0, -1.0], pt)
    assert np.allclose(out, [1.0, 0.0, 0.0, 0.0], atol=1e-12)


def test_sharp_is_minus_hamiltonian_gradient(r2):
    chart, pi = r2
    p = coordinate_field(chart, "p")
    pt = chart.point([0.3, 0.4])
    xp = hamiltonian_vector_field(pi, p, pt)
    assert np.allclose(xp, [1.0, 0.0])
    assert np.array_equal(sharp(pi, p.grad(pt), pt), -xp)


def test_sharp_gradient_identity_random(lie_poisson):
    chart, pi = lie_poisson
    rng = np.random.default_rng(19)
    h = ExprField(chart, "h", "x*z - y^2 + cos(x)")
    for _ in range(10):
        pt = chart.point(rng.uniform(-2, 2, size=3))
        assert np.array_equal(
            sharp(pi, h.grad(pt), pt), -hamiltonian_vector_field(pi, h, pt)
        )


def test_sharp_pairing_identity(lie_poisson):
    # <beta, sharp(alpha)> = P(alpha, beta) for random covectors
    chart, pi = lie_poisson
    rng = np.random.default_rng(4)
    pt = chart.point([0.5, 1.5, -0.7])
    pmat = pi.matrix(pt)
    for _ in range(10):
        alpha = rng.normal(size=3)
        beta = rng.normal(size=3)
        assert beta @ sharp(pi, alpha, pt) == pytest.approx(alpha @ pmat @ beta, rel=1e-12, abs=1e-12)


# --- Jacobi identity


def test_jacobi_residual_canonical(r2):
    chart, pi = r2
    q, p = coordinate_fields(chart)
    assert jacobi_residual(pi, chart.point([0.4, -1.0]), q, p, q) <= 1e-9


def test_jacobi_residual_lie_poisson(lie_poisson):
    chart, pi = lie_poisson
    x, y, z = coordinate_fields(chart)
    rng = np.random.default_rng(2)
    for _ in range(10):
        pt = chart.point(rng.uniform(-2, 2, size=3))
        assert jacobi_residual(pi, pt, x, y, z) <= 1e-8


def test_jacobi_suite_not_nci(not_nci):
    chart, pi = not_nci
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(50):
        vals = np.concatenate([[rng.uniform(0, 1)], rng.uniform(-2, 2, size=3)])
        _, rel = jacobi_coordinate_residuals(pi, vals)
        worst = max(worst, rel)
    assert worst <= 1e-7


def test_jacobi_general_op_matches_coordinate_fast_path(not_nci):
    chart, pi = not_nci
    fields = coordinate_fields(chart)
    vals = np.array([0.3, 0.8, -0.6, 1.2])
    pt = chart.point(vals)
    max_abs, _ = jacobi_coordinate_residuals(pi, vals)
    worst_general = 0.0
    n = chart.dim
    for a in range(n):
        for b in range(a + 1, n):
            for c in range(b + 1, n):
                worst_general = max(worst_general, jacobi_residual(pi, pt, fields[a], fields[b], fields[c]))
    assert worst_general == pytest.approx(max_abs, abs=1e-10)


def test_jacobi_detects_non_poisson_bivector():
    # {x,y} = z, {y,z} = y, {z,x} = 0: the cyclic sum is {y,x} = -z, not zero
    chart = Chart("bad", ("x", "y", "z"))
    bad = ExprBivector(chart, "bad", {(0, 1): "z", (1, 2): "y"})
    _, rel = jacobi_coordinate_residuals(bad, np.array([0.4, 0.7, 1.3]))
    assert rel > 1e-3


# --- rank


def test_rank_lie_poisson(lie_poisson):
    chart, pi = lie_poisson
    assert rank_at(pi, chart.point([0.0, 0.0, 0.0])) == 0
    assert rank_at(pi, chart.point([1.0, 2.0, 3.0])) == 2


def test_rank_canonical(r2):
    chart, pi = r2
    assert rank_at(pi, chart.point([5.0, -1.0])) == 2


# --- field evaluation details


def test_expr_field_gradient_matches_fd(lie_poisson):
    chart, _ = lie_poisson
    f = ExprField(chart, "f", "exp(x/3)*sin(y) + z^3")
    rng = np.random.default_rng(55)
    for _ in range(10):
        vals = rng.uniform(-1.5, 1.5, size=3)
        g = f.grad_at(vals)
        h = 1e-6
        for k in range(3):
            xp, xm = vals.copy(), vals.copy()
            xp[k] += h
            xm[k] -= h
            fd = (f.value_at(xp) - f.value_at(xm)) / (2 * h)
            assert abs(g[k] - fd) <= 1e-5 * max(1.0, abs(g[k]))


def test_callable_field_fd_gradient():
    chart = Chart("r2", ("x", "y"))
    f = CallableField(chart, "norm", lambda v: float(np.hypot(v[0], v[1])))
    g = f.grad_at(np.array([3.0, 4.0]))
    assert np.allclose(g, [0.6, 0.8], atol=1e-8)


def test_angle_valued_field_gradient_across_wrap():
    # angle = atan2(y, x) / 2pi mod 1; finite differences must unwrap near zero
    chart = Chart("plane", ("x", "y"))
    f = CallableField(
        chart, "arg", lambda v: (math.atan2(v[1], v[0]) / (2 * math.pi)) % 1.0, codomain="angle"
    )
    pt = np.array([1.0, -1e-7])  # value just below 1.0, wraps to just above 0.0 across y=0
    g = f.grad_at(pt)
    # analytic gradient of the lift: (-y, x) / (2 pi (x^2+y^2))
    expected = np.array([1e-7, 1.0]) / (2 * math.pi)
    assert np.allclose(g, expected, atol=1e-8)


def test_scaled_and_product_fields(lie_poisson):
    chart, _ = lie_poisson
    f = ExprField(chart, "f", "x + 2*y")
    g = ExprField(chart, "g", "z^2")
    pt = chart.point([1.0, 2.0, 3.0])
    sf = scaled_field(f, 2.5)
    assert sf.value(pt) == pytest.approx(12.5)
    assert np.allclose(sf.grad(pt), [2.5, 5.0, 0.0])
    fg = product_field(f, g)
    assert fg.value(pt) == pytest.approx(45.0)
    assert np.allclose(fg.grad(pt), [9.0, 18.0, 30.0])


def test_callable_bivector_antisymmetry_exact():
    chart = Chart("c", ("a", "b", "c"))
    rng = np.random.default_rng(1)
    noisy = rng.normal(size=(3, 3))

    pi = CallableBivector(chart, "noisy", lambda v: noisy)
    m = pi.matrix(chart.point([0.0, 0.0, 0.0]))
    assert np.array_equal(m, -m.T)


def test_expr_bivector_rejects_lower_triangle():
    chart = Chart("c", ("a", "b"))
    with pytest.raises(ValueError):
        ExprBivector(chart, "bad", {(1, 0): "1"})
