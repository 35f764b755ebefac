import math

import numpy as np
import pytest

from poissonnci.nciverify import involution_residuals, rank_drop_check, regularity_check, sample_points
from poissonnci.systems import get_system
from poissonnci.systems.euler_poinsot import (
    ep_build,
    ep_in_B,
    ep_in_Bprime,
    ep_lattice_base_point,
    euler_angles_from_rotation,
)
from poissonnci.torusflow import flow, joint_flow


@pytest.fixture(scope="module")
def bundle():
    return get_system("euler-poinsot")


@pytest.fixture(scope="module")
def accepted(bundle):
    return sample_points(bundle.chart, bundle.plan(seed=7, count=30), "ep-tests")


def _rotation(vals):
    twopi = 2 * math.pi
    a, t, b = twopi * vals[0], vals[1], twopi * vals[2]
    rz = lambda x: np.array([[math.cos(x), -math.sin(x), 0], [math.sin(x), math.cos(x), 0], [0, 0, 1]])
    rx = lambda x: np.array([[1, 0, 0], [0, math.cos(x), -math.sin(x)], [0, math.sin(x), math.cos(x)]])
    return rz(a) @ rx(t) @ rz(b)


def test_parameter_ordering_enforced():
    with pytest.raises(ValueError):
        ep_build(1.0, 2.0, 3.0)
    with pytest.raises(ValueError):
        ep_build(3.0, 3.0, 1.0)


def test_target_fields_are_rotated_body_momentum(bundle, accepted):
    # t(R, m) = R m: the spatial fields equal the rotation applied to the body fields
    s_fields = bundle.aux_fields[0:3]
    t_fields = bundle.aux_fields[3:6]
    for pt in accepted[:10]:
        m = np.array([f.value(pt) for f in s_fields])
        v = np.array([f.value(pt) for f in t_fields])
        assert np.allclose(v, _rotation(pt.values) @ m, atol=1e-12)


def test_euler_angle_round_trip():
    rng = np.random.default_rng(5)
    for _ in range(20):
        vals = [rng.uniform(0, 1), rng.uniform(0.2, math.pi - 0.2), rng.uniform(0, 1)]
        r = _rotation(vals + [0, 0, 0])
        phi, th, psi = euler_angles_from_rotation(r)
        again = _rotation([(phi / (2 * math.pi)) % 1.0, th, (psi / (2 * math.pi)) % 1.0, 0, 0, 0])
        assert np.allclose(again, r, atol=1e-12)


def test_gimbal_rotation_rejected():
    with pytest.raises(ValueError):
        euler_angles_from_rotation(np.eye(3))


def test_energy_band_example():
    # m = (1, 0.1, 0.1), inertia (3, 2, 1): H = 0.1741667 inside (0.17, 0.255)
    m = np.array([1.0, 0.1, 0.1])
    h = 0.5 * (m[0] ** 2 / 3 + m[1] ** 2 / 2 + m[2] ** 2 / 1)
    assert h == pytest.approx(0.1741667, abs=1e-7)
    assert np.dot(m, m) / 6 == pytest.approx(0.17)
    assert np.dot(m, m) / 4 == pytest.approx(0.255)
    assert ep_in_B(m, h, 3.0, 2.0)
    assert not ep_in_Bprime(m, h, 2.0, 1.0)
    assert ep_in_Bprime(m, 0.3, 2.0, 1.0)


def test_involution_and_regularity(bundle, accepted):
    plan = bundle.plan(seed=7, count=30)
    res, _ = involution_residuals(bundle.family, plan, points=accepted)
    assert np.max(res[:2, :]) <= 1e-8
    for pt in accepted:
        assert regularity_check(bundle.family, pt).passed


def test_groupoid_identities(bundle):
    check = bundle.extra_checks[0]
    entry = check.run(bundle, 13, 50, 1e-8)
    assert entry.passed, entry
    assert bundle.params["epsilon"] in (-1.0, 1.0)


def test_rank_drop_two_equals_six_minus_four(bundle, accepted):
    plan = bundle.plan(seed=7, count=30)
    entry = rank_drop_check(bundle.family, bundle.base.pi, bundle.base.projection, plan, points=accepted)
    assert entry.passed


def test_conservation_along_energy_flow(bundle, accepted):
    s_h, t_c = bundle.family.fields[0], bundle.family.fields[1]
    x0 = accepted[0]
    end = flow(bundle.pi, s_h, x0, 10.0)
    assert abs(s_h.value(end) - s_h.value(x0)) <= 1e-8
    assert abs(t_c.value(end) - t_c.value(x0)) <= 1e-8


def test_lattice_base_point_is_accepted_and_deterministic(bundle):
    a = ep_lattice_base_point(bundle, seed=3)
    b = ep_lattice_base_point(bundle, seed=3)
    assert np.array_equal(a.values, b.values)
    assert bundle.predicate(a.values)
    # the spatial momentum direction is tilted well away from the polhode band
    t_fields = bundle.aux_fields[3:6]
    v = np.array([f.value(a) for f in t_fields])
    tilt = math.acos(v[2] / np.linalg.norm(v))
    assert 0.2 <= tilt <= 0.45
