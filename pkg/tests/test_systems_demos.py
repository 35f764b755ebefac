import numpy as np
import pytest

from poissonnci.geometry import bracket, jacobi_coordinate_residuals
from poissonnci.nciverify import sample_points
from poissonnci.systems import get_system
from poissonnci.systems.demos import coisotropy_defect, make_demo
from poissonnci.torusflow import angle_relation_check, detect_lattice


def test_unknown_demo():
    with pytest.raises(KeyError):
        make_demo("bogus")


# --- torus alpha


@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
def test_theta_bracket_equals_alpha(alpha):
    bundle = make_demo("torus_alpha", alpha=alpha)
    th1, th2 = bundle.angles
    pts = sample_points(bundle.chart, bundle.plan(seed=2, count=20), "theta")
    for pt in pts:
        assert abs(bracket(bundle.pi, th1, th2, pt) - alpha) <= 1e-12


def test_delta_relations_hold_but_angle_check_fails_for_nonzero_alpha():
    bundle = make_demo("torus_alpha", alpha=0.5)
    pts = sample_points(bundle.chart, bundle.plan(seed=3, count=10), "rel")
    entry, signs = angle_relation_check(bundle.pi, bundle.actions, bundle.angles, pts, tol=1e-12)
    assert not entry.passed
    assert entry.max_residual == pytest.approx(0.5)  # the {th1, th2} part
    assert signs == (1, 1)


def test_angle_check_passes_for_alpha_zero():
    bundle = make_demo("torus_alpha", alpha=0.0)
    pts = sample_points(bundle.chart, bundle.plan(seed=3, count=10), "rel")
    entry, _ = angle_relation_check(bundle.pi, bundle.actions, bundle.angles, pts, tol=1e-12)
    assert entry.passed


def test_coisotropy_defect_zero_corrections():
    bundle = make_demo("torus_alpha", alpha=0.5)
    defect = coisotropy_defect(bundle, "0", "0")
    pt = defect.chart.point([0.3, 0.8])
    assert defect.value(pt) == pytest.approx(0.5)


def test_coisotropy_defect_matches_hand_derivatives():
    # D = alpha - dF1/dps2 + dF2/dps1 for a small corpus of corrections
    alpha = 0.5
    bundle = make_demo("torus_alpha", alpha=alpha)
    corpus = [
        ("sin(ps2)", "ps1^2", lambda a, b: alpha - np.cos(b) + 2 * a),
        ("ps1*ps2", "0", lambda a, b: alpha - a),
        ("ps2^3", "cos(ps1)", lambda a, b: alpha - 3 * b**2 - np.sin(a)),
    ]
    rng = np.random.default_rng(9)
    for f1, f2, oracle in corpus:
        defect = coisotropy_defect(bundle, f1, f2)
        for _ in range(10):
            a, b = rng.uniform(0, 1, size=2)
            assert defect.value_at(np.array([a, b])) == pytest.approx(oracle(a, b), abs=1e-8)


def test_torus_alpha_is_valid_nci_family():
    from poissonnci.nciverify import involution_residuals, regularity_check

    bundle = make_demo("torus_alpha", alpha=0.5)
    plan = bundle.plan(seed=5, count=10)
    res, pts = involution_residuals(bundle.family, plan)
    assert np.max(res) == 0.0
    assert all(regularity_check(bundle.family, pt).passed for pt in pts)


def test_torus_alpha_lattice_identity():
    bundle = make_demo("torus_alpha", alpha=0.5)
    basis = detect_lattice(bundle.pi, bundle.lattice_fields, bundle.chart.point([0.0, 0.0, 0.2, 0.9]))
    assert abs(abs(basis.det) - 1.0) <= 1e-9


# --- not-nci


def test_not_nci_jacobi():
    bundle = get_system("not-nci")
    pts = sample_points(bundle.chart, bundle.plan(seed=8, count=100), "jacobi")
    worst = max(jacobi_coordinate_residuals(bundle.pi, pt.values)[1] for pt in pts)
    assert worst <= 1e-7


def test_not_nci_witness_check():
    bundle = get_system("not-nci")
    entry = bundle.extra_checks[0].run(bundle, 12, 50, 1e-10)
    assert entry.passed
    assert entry.max_residual <= 1e-10


def test_not_nci_has_no_family():
    bundle = get_system("not-nci")
    assert bundle.family is None
    with pytest.raises(KeyError):
        bundle.field_by_name("H")


# --- circle bundle


def test_circle_bundle_lattice_and_relations():
    bundle = get_system("circle-bundle")
    basis = detect_lattice(bundle.pi, bundle.lattice_fields, bundle.chart.point([0.4, 0.1]))
    assert abs(abs(basis.matrix[0, 0]) - 1.0) <= 1e-9
    pts = sample_points(bundle.chart, bundle.plan(seed=4, count=10), "rel")
    entry, _ = angle_relation_check(bundle.pi, bundle.actions, bundle.angles, pts, tol=1e-12)
    assert entry.passed
