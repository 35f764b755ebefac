"""Particle in a central force field on T*R^3.

H = |p|^2 / (2m) + V(r) with r = |q|, canonical bracket.  The linear momenta
mu_ij = q_i p_j - q_j p_i are constants of motion and L = mu_12^2 + mu_13^2 +
mu_23^2 commutes with all of them, so (H, L, mu_12, mu_23) is an NCI family of
rank 2 on the open set where q and p are independent and L does not vanish.
"""

from __future__ import annotations

import numpy as np

from .. import expr as expr_mod
from ..geometry import Chart, ExprField, canonical_bivector
from ..nciverify import NciFamily
from . import SystemBundle

__all__ = ["make_central_force"]

_MU = {
    "mu12": "q1*p2 - q2*p1",
    "mu13": "q1*p3 - q3*p1",
    "mu23": "q2*p3 - q3*p2",
}


def make_central_force(mass: float = 1.0, potential: str = "r^2/2") -> SystemBundle:
    """Central-force bundle; ``potential`` is an expression in the radius r."""
    if mass <= 0:
        raise ValueError("mass must be positive")
    chart = Chart("central-force", ("q1", "q2", "q3", "p1", "p2", "p3"))
    pi = canonical_bivector(chart, [(i, i + 3) for i in range(3)])

    v_ast = expr_mod.parse(potential, {"r"})
    radius_ast = expr_mod.parse("sqrt(q1^2 + q2^2 + q3^2)", chart.coords)
    v_of_q = expr_mod.pretty(expr_mod.substitute(v_ast, {"r": radius_ast}))
    h = ExprField(chart, "H", f"(p1^2 + p2^2 + p3^2)/(2*m) + ({v_of_q})", params={"m": mass})
    ell = ExprField(chart, "L", " + ".join(f"({src})^2" for src in _MU.values()))
    mu12 = ExprField(chart, "mu12", _MU["mu12"])
    mu13 = ExprField(chart, "mu13", _MU["mu13"])
    mu23 = ExprField(chart, "mu23", _MU["mu23"])

    family = NciFamily(pi, (h, ell, mu12, mu23), rank=2)

    def regular(vals: np.ndarray) -> bool:
        q, p = vals[:3], vals[3:]
        return float(np.linalg.norm(q)) >= 0.3 and float(np.linalg.norm(np.cross(q, p))) >= 0.3

    return SystemBundle(
        name="central-force",
        chart=chart,
        pi=pi,
        family=family,
        sample_boxes=tuple([(-2.0, 2.0)] * 6),
        predicate=regular,
        compact_fibers=False,
        actions=None,
        angles=None,
        casimirs=(),
        aux_fields=(mu13,),
        tolerances={
            "jacobi": 1e-7,
            "involution": 1e-9,
            "completeness": 1e-8,
        },
        params={"mass": mass},
        notes="regular locus: q != 0, q and p non-collinear (so L != 0); mu13 is exposed for diagnostics",
        extra_checks=(),
    )
