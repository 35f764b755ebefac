import numpy as np
import pytest

from poissonnci.geometry import (
    Chart,
    ExprBivector,
    ExprField,
    canonical_bivector,
    coordinate_field,
    scaled_field,
)
from poissonnci.nciverify import (
    CheckEntry,
    NciFamily,
    SamplePlan,
    SamplerExhaustedError,
    VerifyReport,
    casimir_residual,
    completeness_spotcheck,
    involution_residuals,
    rank_drop_check,
    regularity_check,
    rng_for,
    sample_points,
)


def make_canonical_liouville():
    # flat canonical model r=2, s=3: coords (q1,q2,p1,p2,z1), family (p1,p2,z1)
    chart = Chart("canonical", ("q1", "q2", "p1", "p2", "z1"))
    pi = canonical_bivector(chart, [(0, 2), (1, 3)])
    fields = tuple(coordinate_field(chart, c) for c in ("p1", "p2", "z1"))
    fam = NciFamily(pi, fields, rank=2)
    plan = SamplePlan(seed=11, count=20, boxes=tuple([(-2.0, 2.0)] * 5))
    return chart, pi, fam, plan


def make_canonical_with_z_block():
    # r=1, s=3: coords (q1,p1,z1,z2) with {z1,z2} = z1 (rank-2 z-block, always Jacobi)
    chart = Chart("canonical_z", ("q1", "p1", "z1", "z2"))
    pi = ExprBivector(chart, "pi", {(0, 1): 1.0, (2, 3): "z1"})
    fields = tuple(coordinate_field(chart, c) for c in ("p1", "z1", "z2"))
    fam = NciFamily(pi, fields, rank=1)
    plan = SamplePlan(seed=5, count=20, boxes=tuple([(-2.0, 2.0)] * 4))
    return chart, pi, fam, plan


def lie_poisson_r3():
    chart = Chart("so3_dual", ("x", "y", "z"))
    pi = ExprBivector(chart, "lie_poisson", {(0, 1): "z", (0, 2): "-y", (1, 2): "x"})
    return chart, pi


# --- family validation


def test_family_validates_shape():
    chart, pi, fam, _ = make_canonical_liouville()
    assert fam.n == 5 and fam.s == 3 and fam.rank == 2
    with pytest.raises(ValueError):
        NciFamily(pi, fam.fields, rank=1)  # rank must be n - s
    with pytest.raises(ValueError):
        NciFamily(pi, fam.fields[:2], rank=3)  # 2s >= n fails


# --- sampling


def test_sampler_deterministic_and_in_boxes():
    chart, _, _, plan = make_canonical_liouville()
    pts1 = sample_points(chart, plan, "t")
    pts2 = sample_points(chart, plan, "t")
    assert all(np.array_equal(a.values, b.values) for a, b in zip(pts1, pts2))
    assert all(np.all(np.abs(p.values) <= 2.0) for p in pts1)
    other = sample_points(chart, plan, "other-label")
    assert not np.array_equal(pts1[0].values, other[0].values)


def test_sampler_rejection_and_exhaustion():
    chart, _, _, plan = make_canonical_liouville()
    accepted = sample_points(chart, plan.with_(predicate=lambda v: v[0] > 0), "t")
    assert all(p.values[0] > 0 for p in accepted)
    with pytest.raises(SamplerExhaustedError):
        sample_points(chart, plan.with_(predicate=lambda v: False), "t")


def test_rng_for_is_stable():
    a = rng_for(7, "check").random(3)
    b = rng_for(7, "check").random(3)
    assert np.array_equal(a, b)


# --- involution


def test_involution_canonical_rows_are_zero():
    _, _, fam, plan = make_canonical_liouville()
    res, _ = involution_residuals(fam, plan)
    assert res.shape == (3, 3)
    assert np.max(res) <= 1e-12


def test_involution_z_block_rows():
    # row for p1 (i <= r) is zero; the z-z entry is nonzero but outside the criterion
    _, _, fam, plan = make_canonical_with_z_block()
    res, _ = involution_residuals(fam, plan)
    assert np.max(res[0, :]) <= 1e-12
    assert res[1, 2] > 0.1  # {z1, z2} = z1 is visible in the diagnostic part
    assert res[1, 2] == res[2, 1]


def test_involution_detects_noncommuting_first_row():
    chart = Chart("r3", ("q", "p", "z"))
    pi = canonical_bivector(chart, [(0, 1)])
    fam = NciFamily(pi, (coordinate_field(chart, "q"), coordinate_field(chart, "p")), rank=1)
    plan = SamplePlan(seed=1, count=5, boxes=tuple([(-1.0, 1.0)] * 3))
    res, _ = involution_residuals(fam, plan)
    assert res[0, 1] == pytest.approx(1.0)


# --- regularity


def test_regularity_canonical_everywhere():
    chart, _, fam, plan = make_canonical_liouville()
    for pt in sample_points(chart, plan, "reg"):
        rec = regularity_check(fam, pt)
        assert (rec.rank_df, rec.rank_ham, rec.passed) == (3, 2, True)


def test_regularity_invariant_under_rescaling_and_recombination():
    chart, pi, fam, plan = make_canonical_liouville()
    pt = sample_points(chart, plan, "reg2")[0]
    base = regularity_check(fam, pt)
    scaled = NciFamily(pi, (scaled_field(fam.fields[0], -7.5), fam.fields[1], fam.fields[2]), rank=2)
    assert regularity_check(scaled, pt) == base
    # invertible linear recombination of the trailing functions
    recombined_tail = ExprField(chart, "w", "3*z1")
    rec = NciFamily(pi, (fam.fields[0], fam.fields[1], recombined_tail), rank=2)
    assert regularity_check(rec, pt) == base


def test_regularity_degenerate_point():
    # family (p1, q1*p1): at p1 = 0 the differentials stay independent but
    # X_{q1 p1} = p1 d/dq1 - q1 d/dp1 ... rank of the Hamiltonian pair drops
    chart = Chart("r4", ("q1", "q2", "p1", "p2"))
    pi = canonical_bivector(chart, [(0, 2), (1, 3)])
    f1 = coordinate_field(chart, "p1")
    f2 = ExprField(chart, "f2", "p1*p2")
    fam = NciFamily(pi, (f1, f2), rank=2)
    good = regularity_check(fam, chart.point([0.3, 0.4, 1.0, 2.0]))
    assert good.passed
    degenerate = regularity_check(fam, chart.point([0.3, 0.4, 0.0, 1.0]))  # at p1 = 0: d(p1 p2) = dp1
    assert not degenerate.passed


# --- Casimir


def test_casimir_lie_poisson():
    chart, pi = lie_poisson_r3()
    c = ExprField(chart, "C", "x^2+y^2+z^2")
    plan = SamplePlan(seed=3, count=30, boxes=tuple([(-2.0, 2.0)] * 3))
    res, _ = casimir_residual(pi, c, plan)
    assert res <= 1e-10


def test_casimir_residual_nonzero_for_non_casimir():
    chart = Chart("r2", ("q", "p"))
    pi = canonical_bivector(chart, [(0, 1)])
    q = coordinate_field(chart, "q")
    plan = SamplePlan(seed=3, count=10, boxes=((-1.0, 1.0), (-1.0, 1.0)))
    res, _ = casimir_residual(pi, q, plan)
    assert res == pytest.approx(1.0)  # |X_q| = 1 everywhere


def test_casimir_residual_homogeneous():
    chart, pi = lie_poisson_r3()
    f = ExprField(chart, "f", "x*y + z")
    plan = SamplePlan(seed=9, count=10, boxes=tuple([(-2.0, 2.0)] * 3))
    pts = sample_points(chart, plan, "homogeneity")
    base, _ = casimir_residual(pi, f, plan, points=pts)
    scaled, _ = casimir_residual(pi, scaled_field(f, -2.5), plan, points=pts)
    assert scaled == pytest.approx(2.5 * base, rel=1e-12)


# --- rank drop


def test_rank_drop_canonical_zero_base():
    chart, pi, fam, plan = make_canonical_liouville()
    base_chart = Chart("base", ("p1", "p2", "z1"))
    base_pi = ExprBivector(base_chart, "zero", {})
    entry = rank_drop_check(fam, base_pi, lambda v: v[2:5], plan)
    assert entry.passed
    assert entry.max_residual == 0.0


def test_rank_drop_z_block_base():
    chart, pi, fam, plan = make_canonical_with_z_block()
    base_chart = Chart("base", ("p1", "z1", "z2"))
    base_pi = ExprBivector(base_chart, "pi_base", {(1, 2): "z1"})
    plan = plan.with_(predicate=lambda v: abs(v[2]) > 0.1)  # keep the z-block rank stable
    entry = rank_drop_check(fam, base_pi, lambda v: v[1:4], plan)
    assert entry.passed


# --- completeness


def test_completeness_z_block():
    _, _, fam, plan = make_canonical_with_z_block()
    entry = completeness_spotcheck(fam, plan, tol=1e-6)
    assert entry.passed
    assert entry.max_residual <= 1e-6


def test_completeness_zero_for_equal_pair():
    # with a single trailing function the only pair is (g, g), whose bracket vanishes
    chart, pi, fam, plan = make_canonical_liouville()
    entry = completeness_spotcheck(fam, plan)
    assert entry.passed


# --- report


def test_report_rejects_duplicate_names():
    rep = VerifyReport()
    rep.add(CheckEntry("a", True, 0.0, 1e-8))
    with pytest.raises(ValueError):
        rep.add(CheckEntry("a", True, 0.0, 1e-8))
    assert rep.all_pass
    rep.add(CheckEntry("b", False, 1.0, 1e-8))
    assert not rep.all_pass
    assert rep["b"].max_residual == 1.0
