import numpy as np
import pytest

from poissonnci.geometry import bracket, hamiltonian_vector_field
from poissonnci.nciverify import involution_residuals, regularity_check, sample_points
from poissonnci.numkernel import numerical_rank
from poissonnci.systems import get_system


@pytest.fixture(scope="module")
def bundle():
    return get_system("central-force")


def test_harmonic_potential_equations_of_motion(bundle):
    # V = r^2/2, so V'(r)/r = 1: qdot = p, pdot = -q
    h = bundle.family.fields[0]
    pt = bundle.chart.point([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    xh = hamiltonian_vector_field(bundle.pi, h, pt)
    assert np.allclose(xh, [0.0, 1.0, 0.0, -1.0, 0.0, 0.0], atol=1e-12)


def test_momenta_are_constants_of_motion(bundle):
    h = bundle.family.fields[0]
    mu12, mu23 = bundle.family.fields[2], bundle.family.fields[3]
    mu13 = bundle.field_by_name("mu13")
    pts = sample_points(bundle.chart, bundle.plan(seed=11, count=50), "mu-dot")
    for pt in pts:
        for mu in (mu12, mu13, mu23):
            assert abs(bracket(bundle.pi, mu, h, pt)) <= 1e-12


def test_involution_rows(bundle):
    plan = bundle.plan(seed=7, count=50)
    res, _ = involution_residuals(bundle.family, plan)
    assert np.max(res[:2, :]) <= 1e-9
    # the trailing momenta do not commute with each other: {mu12, mu23} = -+ mu13
    assert res[2, 3] > 0.01


def test_regularity_at_accepted_samples(bundle):
    pts = sample_points(bundle.chart, bundle.plan(seed=3, count=100), "regularity")
    for pt in pts:
        rec = regularity_check(bundle.family, pt)
        assert rec == rec.__class__(4, 2, True)


def test_regularity_fails_at_collinear_points(bundle):
    # q parallel to p: all mu_ij = 0, dL = 0 and the angular gradients degenerate
    pt = bundle.chart.point([1.0, 0.0, 0.0, 2.0, 0.0, 0.0])
    rec = regularity_check(bundle.family, pt)
    assert not rec.passed


def test_differential_rank_vs_svd_oracle(bundle):
    pt = sample_points(bundle.chart, bundle.plan(seed=42, count=1), "rank-oracle")[0]
    grads = np.column_stack([f.grad_at(pt.values) for f in bundle.family.fields])
    sigma = np.linalg.svd(grads, compute_uv=False)
    oracle_rank = int(np.sum(sigma > 1e-8 * max(1.0, sigma[0])))
    assert numerical_rank(grads) == oracle_rank == 4


def test_kepler_potential_also_builds():
    from poissonnci.systems.central_force import make_central_force

    bundle = make_central_force(mass=2.0, potential="-1/r")
    pt = bundle.chart.point([1.0, 0.0, 0.0, 0.0, 0.5, 0.0])
    h = bundle.family.fields[0]
    assert h.value(pt) == pytest.approx(0.5**2 / (2 * 2.0) - 1.0, abs=1e-12)  # |p|^2/(2m) - 1/r


def test_mass_validation():
    from poissonnci.systems.central_force import make_central_force

    with pytest.raises(ValueError):
        make_central_force(mass=-1.0)
