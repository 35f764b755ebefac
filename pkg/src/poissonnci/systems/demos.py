"""Demo and counterexample models.

not_nci:       S^1 x R^3 with Pi = d/dth ^ d/dz + pi where pi has the
               rotational z-block; its circle foliation is isotropic and
               Poisson complete but admits no generating first integral.
               Exposed as a foliation-only bundle with the isotropy witness
               sharp(a dx + b dy - dz) = d/dth as a named check.
torus_alpha:   T^4 with Pi = dth1^dps1 + dth2^dps2 + alpha dth1^dth2; an NCI
               system whose candidate angles fail {th1, th2} = 0 by exactly
               alpha, with the coisotropy defect alpha - dF1/dps2 + dF2/dps1
               evaluated for user expressions F1, F2.
circle_bundle: T^2 with Pi = dth^dps and rank-1 family (ps).
"""

from __future__ import annotations

import numpy as np

from .. import expr as expr_mod
from ..geometry import (
    CallableField,
    Chart,
    ExprBivector,
    canonical_bivector,
    coordinate_field,
    sharp,
)
from ..nciverify import CheckEntry, NciFamily, sample_points
from . import ExtraCheck, SystemBundle

__all__ = ["make_demo", "coisotropy_defect"]


def make_demo(name: str, alpha: float = 0.5) -> SystemBundle:
    if name == "not_nci":
        return _not_nci()
    if name == "torus_alpha":
        return _torus_alpha(alpha)
    if name == "circle_bundle":
        return _circle_bundle()
    raise KeyError(f"unknown demo {name!r}; known: not_nci, torus_alpha(alpha), circle_bundle")


# ---------------------------------------------------------------------------


def _witness_check(bundle: SystemBundle, seed: int, samples: int, tol: float) -> CheckEntry:
    """sharp(a dx + b dy - dz) with a = x/(x^2+y^2), b = y/(x^2+y^2) equals d/dth."""
    pts = sample_points(bundle.chart, bundle.plan(seed, samples), "isotropy-witness")
    e_theta = np.array([1.0, 0.0, 0.0, 0.0])
    worst = 0.0
    worst_pt = pts[0]
    for pt in pts:
        _, x, y, _ = pt.values
        denom = x * x + y * y
        alpha_cov = np.array([0.0, x / denom, y / denom, -1.0])
        res = float(np.linalg.norm(sharp(bundle.pi, alpha_cov, pt) - e_theta))
        if res >= worst:
            worst, worst_pt = res, pt
    return CheckEntry(
        name="isotropy-witness",
        passed=worst <= tol,
        max_residual=worst,
        tolerance=tol,
        worst_point=list(worst_pt.values),
        detail="the circle direction lies in the image of the annihilator of the fibers",
    )


def _not_nci() -> SystemBundle:
    chart = Chart("not-nci", ("th", "x", "y", "z"), periodic=(True, False, False, False))
    pi = ExprBivector(
        chart,
        "not-nci",
        {(0, 3): 1.0, (1, 2): "x^2+y^2", (1, 3): "y", (2, 3): "-x"},
    )
    return SystemBundle(
        name="not-nci",
        chart=chart,
        pi=pi,
        family=None,  # foliation-only: no function family generates the fibers
        sample_boxes=((0.0, 1.0), (-2.0, 2.0), (-2.0, 2.0), (-2.0, 2.0)),
        predicate=lambda v: v[1] ** 2 + v[2] ** 2 >= 0.1,
        compact_fibers=True,
        tolerances={"jacobi": 1e-7, "isotropy-witness": 1e-10},
        extra_checks=(ExtraCheck("isotropy-witness", 1e-10, _witness_check),),
        notes="isotropic Poisson complete circle foliation that is not an NCI system",
    )


# ---------------------------------------------------------------------------


def _theta_bracket_check(bundle: SystemBundle, seed: int, samples: int, tol: float) -> CheckEntry:
    """{th1, th2} equals the recorded alpha everywhere."""
    from ..geometry import bracket

    alpha = bundle.params["alpha"]
    th1, th2 = bundle.angles
    pts = sample_points(bundle.chart, bundle.plan(seed, samples), "theta-bracket")
    worst = 0.0
    worst_pt = pts[0]
    for pt in pts:
        res = abs(bracket(bundle.pi, th1, th2, pt) - alpha)
        if res >= worst:
            worst, worst_pt = res, pt
    return CheckEntry(
        name="theta-bracket",
        passed=worst <= tol,
        max_residual=worst,
        tolerance=tol,
        worst_point=list(worst_pt.values),
        detail=f"bracket of the candidate angles equals alpha = {alpha}",
    )


def _torus_alpha(alpha: float) -> SystemBundle:
    chart = Chart("torus-alpha", ("th1", "th2", "ps1", "ps2"), periodic=(True,) * 4)
    pi = ExprBivector(chart, "torus-alpha", {(0, 2): 1.0, (1, 3): 1.0, (0, 1): float(alpha)})
    actions = (coordinate_field(chart, "ps1"), coordinate_field(chart, "ps2"))
    angles = (coordinate_field(chart, "th1"), coordinate_field(chart, "th2"))
    family = NciFamily(pi, actions, rank=2)
    return SystemBundle(
        name="torus-alpha",
        chart=chart,
        pi=pi,
        family=family,
        sample_boxes=tuple([(0.0, 1.0)] * 4),
        predicate=None,
        compact_fibers=True,
        actions=actions,
        angles=angles,
        lattice_fields=actions,
        casimirs=(),
        tolerances={
            "jacobi": 1e-7,
            "involution": 1e-12,
            "completeness": 1e-8,
            "angle-relations": 1e-12,
            "theta-bracket": 1e-12,
        },
        extra_checks=(ExtraCheck("theta-bracket", 1e-12, _theta_bracket_check),),
        params={"alpha": float(alpha)},
        notes="angle candidates satisfy the delta-relations but {th1, th2} = alpha",
    )


def coisotropy_defect(bundle: SystemBundle, f1_src: str, f2_src: str) -> CallableField:
    """Defect field alpha - dF1/dps2 + dF2/dps1 on the base torus.

    F1, F2 are expressions in (ps1, ps2); angle corrections th_i' = th_i + F_i
    are coisotropic exactly where the defect vanishes.
    """
    if bundle.name != "torus-alpha":
        raise ValueError("coisotropy defect is defined for the torus-alpha model")
    alpha = bundle.params["alpha"]
    base_names = ("ps1", "ps2")
    f1 = expr_mod.compile_eval(expr_mod.parse(f1_src, base_names), base_names)
    f2 = expr_mod.compile_eval(expr_mod.parse(f2_src, base_names), base_names)
    base_chart = Chart("torus-alpha-base", base_names, periodic=(True, True))

    def value(vals: np.ndarray) -> float:
        _, g1 = f1(vals)
        _, g2 = f2(vals)
        return alpha - g1[1] + g2[0]

    return CallableField(base_chart, "coisotropy-defect", value)


# ---------------------------------------------------------------------------


def _circle_bundle() -> SystemBundle:
    chart = Chart("circle-bundle", ("th", "ps"), periodic=(True, True))
    pi = canonical_bivector(chart, [(0, 1)], name="circle-bundle")
    psi = coordinate_field(chart, "ps")
    family = NciFamily(pi, (psi,), rank=1)
    return SystemBundle(
        name="circle-bundle",
        chart=chart,
        pi=pi,
        family=family,
        sample_boxes=((0.0, 1.0), (0.0, 1.0)),
        predicate=None,
        compact_fibers=True,
        actions=(psi,),
        angles=(coordinate_field(chart, "th"),),
        lattice_fields=(psi,),
        tolerances={
            "jacobi": 1e-7,
            "involution": 1e-12,
            "completeness": 1e-8,
            "angle-relations": 1e-12,
        },
        notes="trivial circle bundle over a circle; the fiber is the th circle",
    )
