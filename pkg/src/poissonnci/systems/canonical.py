"""Canonical local and semi-local models.

Flat variant: (q_1..q_r, p_1..p_r, z_1..z_{s-r}) with the canonical pairs plus
an arbitrary Poisson z-block pi = sum c_jk(z) dz_j ^ dz_k.  Semi-local variant:
the q's become circle coordinates th_i in R/Z, which makes the fibers of the
momentum map (p, z) compact tori.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .. import expr as expr_mod
from ..geometry import Chart, ExprBivector, coordinate_field, jacobi_coordinate_residuals
from ..nciverify import NciFamily, rng_for
from . import BaseRecord, SystemBundle

__all__ = ["make_canonical"]


def make_canonical(
    r: int,
    s: int,
    c_exprs: Mapping[tuple[int, int], str] | None = None,
    periodic: bool = False,
) -> SystemBundle:
    """Canonical model of rank r with family (p_1..p_r, z_1..z_{s-r}).

    ``c_exprs`` maps 1-based z-index pairs (j, k), j < k, to expressions in the
    z coordinates only; the resulting z-block must satisfy the Jacobi identity
    (checked numerically at seeded points).
    """
    if r < 1 or s < r:
        raise ValueError("need s >= r >= 1")
    n = r + s
    nz = s - r
    base_names = [f"th{i}" if periodic else f"q{i}" for i in range(1, r + 1)]
    p_names = [f"p{i}" for i in range(1, r + 1)]
    z_names = [f"z{j}" for j in range(1, nz + 1)]
    chart = Chart(
        "canonical-semi" if periodic else "canonical",
        base_names + p_names + z_names,
        [periodic] * r + [False] * (r + nz),
    )

    entries: dict[tuple[int, int], object] = {(i, r + i): 1.0 for i in range(r)}
    c_exprs = dict(c_exprs or {})
    is_liouville = True
    for (j, k), src in c_exprs.items():
        if not (1 <= j < k <= nz):
            raise ValueError(f"z-block indices must satisfy 1 <= j < k <= {nz}, got ({j}, {k})")
        try:
            ast = expr_mod.parse(src, z_names)
        except expr_mod.ParseError as err:
            raise ValueError(f"c_{j}{k} must be an expression in the z coordinates only: {err}") from err
        if not (isinstance(ast, expr_mod.Num) and ast.value == 0.0):
            is_liouville = False
        entries[(2 * r + j - 1, 2 * r + k - 1)] = expr_mod.pretty(ast)
    pi = ExprBivector(chart, chart.name, entries)

    if nz >= 3 and not is_liouville:
        _check_z_block_jacobi(pi, chart)

    fields = tuple(coordinate_field(chart, c) for c in p_names + z_names)
    family = NciFamily(pi, fields, rank=r)
    actions = tuple(fields[:r])
    angles = tuple(coordinate_field(chart, c) for c in base_names) if periodic else None

    base_chart = Chart(chart.name + "-base", p_names + z_names)
    base_entries = {
        (r + j - 1, r + k - 1): expr_mod.pretty(expr_mod.parse(src, z_names))
        for (j, k), src in c_exprs.items()
    }
    base = BaseRecord(base_chart, ExprBivector(base_chart, "base", base_entries), lambda v: v[r:])

    return SystemBundle(
        name="canonical-semi" if periodic else "canonical",
        chart=chart,
        pi=pi,
        family=family,
        sample_boxes=tuple([(0.0, 1.0)] * r if periodic else [(-2.0, 2.0)] * r) + tuple([(-2.0, 2.0)] * (r + nz)),
        predicate=None,
        compact_fibers=periodic,
        base=base,
        actions=actions,
        angles=angles,
        lattice_fields=actions if periodic else None,
        casimirs=tuple(fields[r:]) if is_liouville else (),
        tolerances={
            "jacobi": 1e-7,
            "involution": 1e-12,
            "completeness": 1e-8,
            "casimir": 1e-12,
            "angle-relations": 1e-12,
        },
        params={"r": r, "s": s},
        notes="canonical rank-r model; Liouville case when the z-block vanishes",
    )


def _check_z_block_jacobi(pi: ExprBivector, chart: Chart) -> None:
    rng = rng_for(97, "canonical-z-jacobi")
    worst = 0.0
    for _ in range(30):
        vals = rng.uniform(-2.0, 2.0, size=chart.dim)
        _, rel = jacobi_coordinate_residuals(pi, vals)
        worst = max(worst, rel)
    if worst > 1e-7:
        raise ValueError(f"z-block is not a Poisson structure (Jacobi residual {worst:.3e})")
