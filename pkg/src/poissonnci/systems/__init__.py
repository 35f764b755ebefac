"""Built-in example systems, each packaged as a SystemBundle.

A bundle carries the chart, the Poisson structure, the NCI family with its
regular-locus sampling predicate, optional base-space data (for the rank-drop
identity), known action/angle fields, and system-specific extra checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Mapping

import numpy as np

from ..geometry import BivectorField, Chart, ScalarField
from ..nciverify import CheckEntry, NciFamily, SamplePlan

__all__ = [
    "BaseRecord",
    "ExtraCheck",
    "SystemBundle",
    "SYSTEM_NAMES",
    "get_system",
    "system_defaults",
]


@dataclass(frozen=True)
class BaseRecord:
    """Base Poisson manifold (B, pi) together with the projection chart map."""

    chart: Chart
    pi: BivectorField
    projection: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ExtraCheck:
    """System-specific verification check with its default tolerance."""

    name: str
    tol: float
    run: Callable[["SystemBundle", int, int, float], CheckEntry]  # (bundle, seed, samples, tol)


@dataclass
class SystemBundle:
    name: str
    chart: Chart
    pi: BivectorField
    family: NciFamily | None
    sample_boxes: tuple[tuple[float, float], ...]
    predicate: Callable[[np.ndarray], bool] | None
    compact_fibers: bool
    base: BaseRecord | None = None
    actions: tuple[ScalarField, ...] | None = None
    angles: tuple[ScalarField, ...] | None = None
    lattice_fields: tuple[ScalarField, ...] | None = None
    casimirs: tuple[ScalarField, ...] = ()
    aux_fields: tuple[ScalarField, ...] = ()
    tolerances: dict[str, float] = dc_field(default_factory=dict)
    extra_checks: tuple[ExtraCheck, ...] = ()
    params: dict[str, float] = dc_field(default_factory=dict)
    notes: str = ""

    def plan(self, seed: int, count: int) -> SamplePlan:
        return SamplePlan(seed=seed, count=count, boxes=self.sample_boxes, predicate=self.predicate)

    def field_by_name(self, name: str) -> ScalarField:
        pools: list[ScalarField] = []
        if self.family is not None:
            pools.extend(self.family.fields)
        for group in (self.actions, self.angles, self.casimirs, self.aux_fields):
            if group:
                pools.extend(group)
        for f in pools:
            if f.name == name:
                return f
        raise KeyError(f"system {self.name!r} has no field named {name!r}")


def _require_params(params: Mapping[str, float], allowed: set[str], system: str) -> None:
    unknown = set(params) - allowed
    if unknown:
        raise ValueError(f"unknown parameter(s) for {system!r}: {sorted(unknown)} (allowed: {sorted(allowed)})")


def get_system(name: str, params: Mapping[str, float] | None = None) -> SystemBundle:
    """Build a registered system; ``params`` are numeric CLI-style overrides."""
    from . import canonical, central_force, demos, euler_poinsot, gelfand_cetlin

    params = dict(params or {})
    if name == "canonical" or name == "canonical-semi":
        _require_params(params, {"r", "s"}, name)
        r = int(params.get("r", 2))
        s = int(params.get("s", 3))
        return canonical.make_canonical(r, s, periodic=(name == "canonical-semi"))
    if name == "central-force":
        _require_params(params, {"mass"}, name)
        return central_force.make_central_force(mass=float(params.get("mass", 1.0)))
    if name == "euler-poinsot":
        _require_params(params, {"Ix", "Iy", "Iz"}, name)
        return euler_poinsot.ep_build(
            float(params.get("Ix", 3.0)), float(params.get("Iy", 2.0)), float(params.get("Iz", 1.0))
        )
    if name == "gelfand-cetlin":
        _require_params(params, {"n", "kappa"}, name)
        kwargs = {}
        if "kappa" in params:
            kwargs["kappa"] = float(params["kappa"])
        return gelfand_cetlin.gc_build(int(params.get("n", 3)), **kwargs)
    if name == "not-nci":
        _require_params(params, set(), name)
        return demos.make_demo("not_nci")
    if name == "torus-alpha":
        _require_params(params, {"alpha"}, name)
        return demos.make_demo("torus_alpha", alpha=float(params.get("alpha", 0.5)))
    if name == "circle-bundle":
        _require_params(params, set(), name)
        return demos.make_demo("circle_bundle")
    raise KeyError(f"unknown system {name!r}; known: {', '.join(SYSTEM_NAMES)}")


SYSTEM_NAMES = (
    "canonical",
    "canonical-semi",
    "central-force",
    "euler-poinsot",
    "gelfand-cetlin",
    "not-nci",
    "torus-alpha",
    "circle-bundle",
)


def system_defaults(name: str) -> dict[str, float]:
    return {
        "canonical": {"r": 2, "s": 3},
        "canonical-semi": {"r": 2, "s": 3},
        "central-force": {"mass": 1.0},
        "euler-poinsot": {"Ix": 3.0, "Iy": 2.0, "Iz": 1.0},
        "gelfand-cetlin": {"n": 3},
        "not-nci": {},
        "torus-alpha": {"alpha": 0.5},
        "circle-bundle": {},
    }[name]
