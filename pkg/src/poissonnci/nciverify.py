"""Numerical verification of the structural axioms of an NCI family.

The checks sample seeded points from per-system boxes (with a rejection
predicate encoding the system's regular locus) and measure residuals of the
defining identities: involutivity of the first r functions with the whole
family, independence ranks, Casimir property, base rank drop, and closure of
first-integral brackets.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geometry import (
    BivectorField,
    Point,
    ScalarField,
    _bracket_from_grads,
    _bracket_value_at,
    hamiltonian_vector_field,
    product_field,
    rank_at,
)
from .numkernel import numerical_rank

__all__ = [
    "NciFamily",
    "SamplePlan",
    "SamplerExhaustedError",
    "CheckEntry",
    "VerifyReport",
    "rng_for",
    "sample_points",
    "involution_residuals",
    "regularity_check",
    "RegularityRecord",
    "casimir_residual",
    "rank_drop_check",
    "completeness_spotcheck",
]

FD_STEP = 1e-5


class SamplerExhaustedError(RuntimeError):
    def __init__(self, accepted: int, wanted: int, draws: int):
        super().__init__(
            f"rejection predicate accepted only {accepted}/{wanted} points after {draws} draws"
        )


@dataclass
class NciFamily:
    """Ordered function family (f_1, ..., f_s) on a Poisson chart with rank r = n - s.

    The first r functions must be in involution with the whole family; only
    those rows enter the involution pass criterion.
    """

    pi: BivectorField
    fields: tuple[ScalarField, ...]
    rank: int

    def __post_init__(self) -> None:
        self.fields = tuple(self.fields)
        n = self.pi.chart.dim
        s = len(self.fields)
        if 2 * s < n:
            raise ValueError(f"need 2s >= n, got s={s}, n={n}")
        if self.rank != n - s:
            raise ValueError(f"rank must equal n - s = {n - s}, got {self.rank}")
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        for f in self.fields:
            if f.chart is not self.pi.chart:
                raise ValueError(f"field {f.name!r} lives on a different chart")

    @property
    def n(self) -> int:
        return self.pi.chart.dim

    @property
    def s(self) -> int:
        return len(self.fields)


@dataclass(frozen=True)
class SamplePlan:
    """Seeded uniform sampling over per-coordinate boxes with optional rejection."""

    seed: int
    count: int
    boxes: tuple[tuple[float, float], ...]
    predicate: Callable[[np.ndarray], bool] | None = None

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("count must be >= 1")
        for lo, hi in self.boxes:
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError("sampling boxes must be finite nonempty intervals")

    def with_(self, **changes) -> "SamplePlan":
        data = {
            "seed": self.seed,
            "count": self.count,
            "boxes": self.boxes,
            "predicate": self.predicate,
        }
        data.update(changes)
        return SamplePlan(**data)


def rng_for(seed: int, label: str) -> np.random.Generator:
    """Deterministic substream keyed by (seed, label): adding a check never
    perturbs the samples another check sees."""
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 8], "little") for i in range(0, 32, 8)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed & (2**64 - 1), *words])))


def sample_points(chart, plan: SamplePlan, label: str = "samples") -> list[Point]:
    """Draw ``plan.count`` accepted points; resample rejected draws, erroring
    out after 100 * count total draws."""
    if len(plan.boxes) != chart.dim:
        raise ValueError("sampling boxes must match the chart dimension")
    rng = rng_for(plan.seed, label)
    lo = np.array([b[0] for b in plan.boxes])
    hi = np.array([b[1] for b in plan.boxes])
    out: list[Point] = []
    draws = 0
    budget = 100 * plan.count
    while len(out) < plan.count:
        if draws >= budget:
            raise SamplerExhaustedError(len(out), plan.count, draws)
        vals = lo + (hi - lo) * rng.random(chart.dim)
        draws += 1
        if plan.predicate is not None and not plan.predicate(vals):
            continue
        out.append(chart.point(vals))
    return out


@dataclass
class CheckEntry:
    name: str
    passed: bool
    max_residual: float
    tolerance: float
    worst_point: list[float] | None = None
    detail: str = ""


@dataclass
class VerifyReport:
    entries: list[CheckEntry] = field(default_factory=list)

    def add(self, entry: CheckEntry) -> None:
        if any(e.name == entry.name for e in self.entries):
            raise ValueError(f"duplicate check name {entry.name!r}")
        self.entries.append(entry)

    @property
    def all_pass(self) -> bool:
        return all(e.passed for e in self.entries)

    def __getitem__(self, name: str) -> CheckEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)


# ---------------------------------------------------------------------------
# checks


def involution_residuals(
    fam: NciFamily, plan: SamplePlan, points: Sequence[Point] | None = None
) -> tuple[np.ndarray, list[Point]]:
    """Matrix of max |{f_i, f_j}| over samples (full s x s, for diagnosis).

    Only rows i <= r participate in the pass criterion; |{f_i, f_j}| equals
    |{f_j, f_i}| exactly, so the matrix is symmetric.
    """
    pts = list(points) if points is not None else sample_points(fam.pi.chart, plan, "involution")
    s = fam.s
    res = np.zeros((s, s))
    for pt in pts:
        grads = [f.grad_at(pt.values) for f in fam.fields]
        pmat = fam.pi.matrix_at(pt.values)
        for i in range(s):
            for j in range(i + 1, s):
                v = abs(_bracket_from_grads(pmat, grads[i], grads[j]))
                if v > res[i, j]:
                    res[i, j] = v
                    res[j, i] = v
    return res, pts


@dataclass(frozen=True)
class RegularityRecord:
    rank_df: int
    rank_ham: int
    passed: bool


def regularity_check(fam: NciFamily, x: Point) -> RegularityRecord:
    """Independence of all s differentials and of the first r Hamiltonian fields."""
    grads = np.column_stack([f.grad_at(x.values) for f in fam.fields])  # n x s
    pmat = fam.pi.matrix_at(x.values)
    hams = pmat @ grads[:, : fam.rank]  # n x r
    rank_df = numerical_rank(grads)
    rank_ham = numerical_rank(hams)
    return RegularityRecord(rank_df, rank_ham, rank_df == fam.s and rank_ham == fam.rank)


def casimir_residual(
    pi: BivectorField, f: ScalarField, plan: SamplePlan, points: Sequence[Point] | None = None
) -> tuple[float, Point | None]:
    """max over samples of |P(x) grad f(x)| (zero exactly for a Casimir)."""
    pts = list(points) if points is not None else sample_points(pi.chart, plan, f"casimir:{f.name}")
    worst = 0.0
    worst_pt: Point | None = None
    for pt in pts:
        res = float(np.linalg.norm(pi.matrix_at(pt.values) @ f.grad_at(pt.values)))
        if res >= worst:
            worst, worst_pt = res, pt
    return worst, worst_pt


def rank_drop_check(
    fam: NciFamily,
    base_pi: BivectorField,
    projection: Callable[[np.ndarray], np.ndarray],
    plan: SamplePlan,
    points: Sequence[Point] | None = None,
) -> CheckEntry:
    """rank(pi at phi(m)) = rank(Pi at m) - 2r at every sample."""
    pts = list(points) if points is not None else sample_points(fam.pi.chart, plan, "rank-drop")
    worst = 0
    worst_pt = pts[0]
    for pt in pts:
        up = rank_at(fam.pi, pt)
        base_vals = np.asarray(projection(pt.values), dtype=float)
        down = rank_at(base_pi, base_pi.chart.point(base_vals))
        dev = abs(down - (up - 2 * fam.rank))
        if dev >= worst:
            worst, worst_pt = dev, pt
    return CheckEntry(
        name="rank-drop",
        passed=worst == 0,
        max_residual=float(worst),
        tolerance=0.0,
        worst_point=list(worst_pt.values),
        detail="rank(base) == rank(total) - 2r at every accepted sample",
    )


def completeness_spotcheck(
    fam: NciFamily,
    plan: SamplePlan,
    tol: float = 1e-6,
    points: Sequence[Point] | None = None,
) -> CheckEntry:
    """First-integral closure: X_{f_i}({g, h}) = 0 for i <= r, with (g, h)
    drawn from the trailing family functions and products thereof."""
    pts = list(points) if points is not None else sample_points(fam.pi.chart, plan, "completeness")
    tail = list(fam.fields[fam.rank :])
    candidates = list(tail)
    if len(tail) >= 2:
        candidates.append(product_field(tail[0], tail[1]))
    pairs = [(g, h) for a, g in enumerate(candidates) for h in candidates[a:]]
    worst = 0.0
    worst_pt = pts[0]
    for pt in pts:
        vals = pt.values
        scale = FD_STEP * max(1.0, float(np.max(np.abs(vals))))
        for i in range(fam.rank):
            u = hamiltonian_vector_field(fam.pi, fam.fields[i], pt)
            speed = float(np.max(np.abs(u)))
            if speed == 0.0:
                continue
            eps = scale / speed
            for g, h in pairs:
                plus = _bracket_value_at(fam.pi, g, h, vals + eps * u)
                minus = _bracket_value_at(fam.pi, g, h, vals - eps * u)
                res = abs((plus - minus) / (2 * eps))
                if res >= worst:
                    worst, worst_pt = res, pt
    return CheckEntry(
        name="completeness",
        passed=worst <= tol,
        max_residual=worst,
        tolerance=tol,
        worst_point=list(worst_pt.values),
        detail="brackets of trailing first integrals stay first integrals",
    )
