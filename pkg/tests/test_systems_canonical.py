import numpy as np
import pytest

from poissonnci.geometry import jacobi_coordinate_residuals
from poissonnci.nciverify import involution_residuals, regularity_check, sample_points
from poissonnci.systems import get_system
from poissonnci.systems.canonical import make_canonical
from poissonnci.torusflow import angle_relation_check, detect_lattice


def test_liouville_case_all_checks_pass_exactly():
    bundle = make_canonical(2, 3)
    plan = bundle.plan(seed=1, count=20)
    res, pts = involution_residuals(bundle.family, plan)
    assert np.max(res) == 0.0
    for pt in pts[:5]:
        assert regularity_check(bundle.family, pt).passed
    assert len(bundle.casimirs) == 1  # z1 is a Casimir when the z-block vanishes


def test_rank2_z_block_always_jacobi():
    # any single coefficient c_12(z) gives a Poisson z-block
    bundle = make_canonical(1, 3, {(1, 2): "z1"})
    plan = bundle.plan(seed=2, count=10)
    for pt in sample_points(bundle.chart, plan, "jac"):
        _, rel = jacobi_coordinate_residuals(bundle.pi, pt.values)
        assert rel <= 1e-7
    assert bundle.casimirs == ()


def test_c_expression_must_use_only_z():
    with pytest.raises(ValueError):
        make_canonical(1, 3, {(1, 2): "q1"})
    with pytest.raises(ValueError):
        make_canonical(1, 3, {(1, 2): "p1 + z1"})


def test_non_jacobi_z_block_rejected():
    # {z1,z2} = z3, {z2,z3} = z2 violates the Jacobi identity
    with pytest.raises(ValueError, match="Jacobi"):
        make_canonical(1, 4, {(1, 2): "z3", (2, 3): "z2"})


def test_jacobi_compatible_z_block_accepted():
    # the rotational 3d block: {z1,z2} = z3, {z2,z3} = z1, {z3,z1} = z2
    bundle = make_canonical(1, 4, {(1, 2): "z3", (1, 3): "-z2", (2, 3): "z1"})
    assert bundle.family.s == 4 and bundle.family.rank == 1


def test_semi_local_lattice_is_identity():
    bundle = get_system("canonical-semi")
    m = bundle.chart.point([0.0, 0.0, 0.3, -0.7, 0.4])
    basis = detect_lattice(bundle.pi, bundle.lattice_fields, m)
    assert abs(abs(basis.det) - 1.0) <= 1e-9
    assert np.max(np.abs(basis.matrix - np.round(basis.matrix))) <= 1e-9
    assert max(basis.residuals) <= 1e-9


def test_semi_local_angle_relations_exact():
    bundle = get_system("canonical-semi")
    pts = sample_points(bundle.chart, bundle.plan(seed=4, count=10), "angles")
    entry, signs = angle_relation_check(bundle.pi, bundle.actions, bundle.angles, pts, tol=1e-12)
    assert entry.passed and entry.max_residual <= 1e-12
    assert signs == (1, 1)


def test_flat_variant_has_no_angles_or_lattice():
    bundle = get_system("canonical")
    assert not bundle.compact_fibers
    assert bundle.angles is None
    assert bundle.lattice_fields is None


def test_registry_parameters():
    bundle = get_system("canonical-semi", {"r": 1, "s": 2})
    assert bundle.chart.dim == 3
    with pytest.raises(ValueError):
        get_system("canonical", {"bogus": 1})
    with pytest.raises(KeyError):
        get_system("no-such-system")


def test_base_record_rank_drop_by_construction():
    from poissonnci.nciverify import rank_drop_check

    bundle = make_canonical(1, 3, {(1, 2): "z1"})
    plan = bundle.plan(seed=6, count=15).with_(predicate=lambda v: abs(v[2]) > 0.1)
    entry = rank_drop_check(bundle.family, bundle.base.pi, bundle.base.projection, plan)
    assert entry.passed
