"""Flow-based detection of periods and action lattices on compact fibers.

A return vector t in R^r is a tuple of flow times whose joint Hamiltonian
flow brings the base point back to itself; the lattice of all return vectors
is detected by axis scans, seeded direction scans, and (for rank 2) a
return-to-orbit completion stage, then canonicalized by lattice reduction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    BivectorField,
    Point,
    ScalarField,
    _bracket_from_grads,
    wrap_half,
)
from .nciverify import CheckEntry, rng_for
from .numkernel import OdeSettings, integrate, lattice_reduce, numerical_rank

__all__ = [
    "FlowProbe",
    "LatticeBasis",
    "InvolutionPrecheckError",
    "NoPeriodFoundError",
    "IncompleteLatticeError",
    "FlowConservationError",
    "hamiltonian_flow",
    "flow",
    "joint_flow",
    "detect_period",
    "detect_lattice",
    "angle_relation_check",
    "angle_advance_check",
]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_DIRECTION_SEED = 2_718_281_828  # fixed: direction scans are deterministic


@dataclass(frozen=True)
class FlowProbe:
    return_tol: float = 1e-6
    t_max: float = 12.0
    coarse_step: float = 0.05

    def __post_init__(self) -> None:
        if min(self.return_tol, self.t_max, self.coarse_step) <= 0:
            raise ValueError("probe parameters must be positive")
        if self.coarse_step >= self.t_max:
            raise ValueError("coarse step must be smaller than the horizon")


@dataclass
class LatticeBasis:
    """Return-time vectors generating the action lattice at a base point."""

    base_point: Point
    field_names: tuple[str, ...]
    matrix: np.ndarray  # r x r, column k is a return vector
    residuals: tuple[float, ...]  # joint-flow return distance per column

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix))


class InvolutionPrecheckError(ValueError):
    pass


class NoPeriodFoundError(RuntimeError):
    def __init__(self, t_max: float, best: float):
        self.best_distance = best
        super().__init__(f"no return within horizon {t_max} (closest approach {best:.3e})")


class IncompleteLatticeError(RuntimeError):
    def __init__(self, found: list[np.ndarray], rank_needed: int):
        self.partial = found
        super().__init__(f"found {len(found)} independent return vector(s), need {rank_needed}")


class FlowConservationError(RuntimeError):
    def __init__(self, name: str, drift: float, tol: float):
        self.field_name = name
        self.drift = drift
        super().__init__(f"field {name!r} drifted by {drift:.3e} along the flow (tolerance {tol:.1e})")


# ---------------------------------------------------------------------------
# flows


def hamiltonian_flow(pi: BivectorField, h: ScalarField):
    """Vector-field evaluator x -> P(x) grad h(x)."""

    def vf(values: np.ndarray) -> np.ndarray:
        return pi.matrix_at(values) @ h.grad_at(values)

    return vf


def _combined_flow(pi: BivectorField, fields: tuple[ScalarField, ...], weights: np.ndarray):
    def vf(values: np.ndarray) -> np.ndarray:
        pmat = pi.matrix_at(values)
        out = np.zeros(pi.chart.dim)
        for w, f in zip(weights, fields):
            if w != 0.0:
                out += w * (pmat @ f.grad_at(values))
        return out

    return vf


def flow(
    pi: BivectorField,
    h: ScalarField,
    x0: Point,
    t: float,
    settings: OdeSettings = OdeSettings(),
) -> Point:
    """Hamiltonian flow of h for time t starting at x0."""
    out = integrate(hamiltonian_flow(pi, h), x0.values, t, settings, periodic=pi.chart.periodic)
    return Point(pi.chart, out)


def _involution_precheck(pi: BivectorField, fields: tuple[ScalarField, ...], x0: Point, tol: float = 1e-6):
    pmat = pi.matrix_at(x0.values)
    grads = [f.grad_at(x0.values) for f in fields]
    for i in range(len(fields)):
        for j in range(i + 1, len(fields)):
            v = abs(_bracket_from_grads(pmat, grads[i], grads[j]))
            if v > tol:
                raise InvolutionPrecheckError(
                    f"fields {fields[i].name!r}, {fields[j].name!r} not in involution at the base point "
                    f"(|bracket| = {v:.3e})"
                )


def joint_flow(
    pi: BivectorField,
    fields,
    t,
    x0: Point,
    settings: OdeSettings = OdeSettings(),
    precheck: bool = True,
) -> Point:
    """Composition of the Hamiltonian flows of ``fields`` for times ``t``.

    The fields must commute (checked at x0 to 1e-6), so the composition order
    does not matter beyond integration error.
    """
    fields = tuple(fields)
    t = np.asarray(t, dtype=float)
    if t.shape != (len(fields),):
        raise ValueError("need one flow time per field")
    if precheck:
        _involution_precheck(pi, fields, x0)
    current = x0
    for h, tk in zip(fields, t):
        if tk != 0.0:
            current = flow(pi, h, current, float(tk), settings)
    return current


# ---------------------------------------------------------------------------
# period detection


class _Trajectory:
    """Coarse-grid cache of a flow trajectory for cheap distance refinement."""

    def __init__(self, vf, chart, x0_values: np.ndarray, step: float, settings: OdeSettings):
        self.vf = vf
        self.chart = chart
        self.step = step
        self.settings = settings
        self.states = [np.array(x0_values, dtype=float)]  # states[i] = x(i * step)

    def extend_to(self, index: int) -> None:
        while len(self.states) <= index:
            nxt = integrate(self.vf, self.states[-1], self.step, self.settings, periodic=self.chart.periodic)
            self.states.append(nxt)

    def state(self, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("trajectory cache is forward-only")
        i = int(t / self.step)
        self.extend_to(i)
        rem = t - i * self.step
        if rem == 0.0:
            return self.states[i]
        return integrate(self.vf, self.states[i], rem, self.settings, periodic=self.chart.periodic)


def _golden_min(f, a: float, b: float, iterations: int = 60) -> tuple[float, float]:
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iterations):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
        if b - a < 1e-10 * max(1.0, abs(b)):
            break
    return (x1, f1) if f1 <= f2 else (x2, f2)


def _scan_for_return(vf, chart, x0_values: np.ndarray, probe: FlowProbe, settings: OdeSettings) -> float:
    """Smallest t in (0, t_max] with dist(x(t), x0) < return_tol, golden-refined."""
    traj = _Trajectory(vf, chart, x0_values, probe.coarse_step, settings)
    n_nodes = int(math.floor(probe.t_max / probe.coarse_step))
    dist = [0.0]
    best = math.inf
    speed0 = float(np.linalg.norm(np.asarray(vf(x0_values), dtype=float)))
    capture = max(10.0 * probe.return_tol, 2.0 * probe.coarse_step * max(speed0, 1e-12))

    def distance_at(t: float) -> float:
        return chart.distance(chart.wrap(traj.state(t)), x0_values)

    for i in range(1, n_nodes + 1):
        traj.extend_to(i)
        dist.append(chart.distance(chart.wrap(traj.states[i]), x0_values))
        best = min(best, dist[i])
        # examine node i-1 as a local-minimum candidate once both neighbors exist
        j = i - 1
        if j >= 1 and dist[j] <= dist[j - 1] and dist[j] <= dist[i] and dist[j] < capture:
            lo = max((j - 1) * probe.coarse_step, 1e-9)
            hi = (j + 1) * probe.coarse_step
            t_star, d_star = _golden_min(distance_at, lo, hi)
            if d_star < probe.return_tol and t_star > 10 * probe.return_tol:
                return float(t_star)
    # the final node may itself be the bracketed minimum
    if n_nodes >= 1 and dist[n_nodes] <= dist[n_nodes - 1] and dist[n_nodes] < capture:
        t_star, d_star = _golden_min(distance_at, (n_nodes - 1) * probe.coarse_step, probe.t_max)
        if d_star < probe.return_tol and t_star > 10 * probe.return_tol:
            return float(t_star)
    raise NoPeriodFoundError(probe.t_max, best)


def detect_period(
    pi: BivectorField,
    h: ScalarField,
    x0: Point,
    probe: FlowProbe = FlowProbe(),
    settings: OdeSettings = OdeSettings(),
) -> float:
    """Smallest positive return time of the Hamiltonian flow of h through x0."""
    return _scan_for_return(hamiltonian_flow(pi, h), pi.chart, x0.values, probe, settings)


# ---------------------------------------------------------------------------
# lattice detection


def detect_lattice(
    pi: BivectorField,
    fields,
    m: Point,
    probe: FlowProbe = FlowProbe(),
    settings: OdeSettings = OdeSettings(),
) -> LatticeBasis:
    """Detect r independent return vectors of the joint flow through m.

    Strategy: (a) axis scans along each field, (b) seeded direction scans,
    (c) for rank 2, completion against the orbit circle of an already-found
    generator.  The resulting basis is lattice-reduced and every reduced
    column is verified by a joint-flow return residual.
    """
    fields = tuple(fields)
    r = len(fields)
    _involution_precheck(pi, fields, m)
    chart = pi.chart
    found: list[np.ndarray] = []

    def tries_rank(vs: list[np.ndarray]) -> int:
        if not vs:
            return 0
        return numerical_rank(np.column_stack(vs), rel_tol=1e-7)

    # (a) axis scans
    for k in range(r):
        direction = np.zeros(r)
        direction[k] = 1.0
        try:
            period = _scan_for_return(_combined_flow(pi, fields, direction), chart, m.values, probe, settings)
            candidate = period * direction
            if tries_rank(found + [candidate]) > tries_rank(found):
                found.append(candidate)
        except NoPeriodFoundError:
            pass

    # (b) seeded direction scans
    if tries_rank(found) < r and r > 1:
        rng = rng_for(_DIRECTION_SEED, "lattice-directions")
        for _ in range(24):
            if tries_rank(found) >= r:
                break
            d = rng.normal(size=r)
            d /= np.linalg.norm(d)
            try:
                period = _scan_for_return(_combined_flow(pi, fields, d), chart, m.values, probe, settings)
                candidate = period * d
                if tries_rank(found + [candidate]) > tries_rank(found):
                    found.append(candidate)
            except NoPeriodFoundError:
                continue

    # (c) rank-2 completion: scan for a return to the orbit circle of the
    # known generator instead of to the point itself
    if r == 2 and tries_rank(found) == 1:
        completion = _complete_rank2(pi, fields, m, found[0], probe, settings)
        if completion is not None:
            found.append(completion)

    if tries_rank(found) < r:
        raise IncompleteLatticeError(found, r)

    basis = np.column_stack(found[:r]) if tries_rank(found[:r]) == r else _independent_subset(found, r)
    reduced = lattice_reduce(basis)

    residuals = []
    for k in range(r):
        end = joint_flow(pi, fields, reduced[:, k], m, settings, precheck=False)
        residuals.append(chart.distance(end.values, m.values))
    if max(residuals) > probe.return_tol:
        raise IncompleteLatticeError([reduced[:, k] for k in range(r)], r)
    return LatticeBasis(m, tuple(f.name for f in fields), reduced, tuple(residuals))


def _independent_subset(vectors: list[np.ndarray], r: int) -> np.ndarray:
    chosen: list[np.ndarray] = []
    for v in vectors:
        trial = chosen + [v]
        if numerical_rank(np.column_stack(trial), rel_tol=1e-7) == len(trial):
            chosen.append(v)
        if len(chosen) == r:
            return np.column_stack(chosen)
    raise IncompleteLatticeError(chosen, r)


def _complete_rank2(
    pi: BivectorField,
    fields: tuple[ScalarField, ...],
    m: Point,
    generator: np.ndarray,
    probe: FlowProbe,
    settings: OdeSettings,
    orbit_nodes: int = 128,
) -> np.ndarray | None:
    """Second generator for r = 2: find (t, s) with Phi_{t u}(m) = Phi_{s g}(m)."""
    chart = pi.chart
    # transversal direction: the axis least aligned with the generator
    g_unit = generator / np.linalg.norm(generator)
    axis = int(np.argmin(np.abs(g_unit)))
    u = np.zeros(2)
    u[axis] = 1.0

    # orbit circle of the generator, cached at s = j / orbit_nodes
    orbit_vf = _combined_flow(pi, fields, generator)
    orbit = _Trajectory(orbit_vf, chart, m.values, 1.0 / orbit_nodes, settings)
    orbit.extend_to(orbit_nodes)
    orbit_states = np.array([chart.wrap(s) for s in orbit.states[:orbit_nodes]])

    def dist_to_orbit_point(x: np.ndarray, s: float) -> float:
        return chart.distance(chart.wrap(orbit.state(s % 1.0)), x)

    def dist_to_orbit(x: np.ndarray) -> tuple[float, int]:
        deltas = orbit_states - x[None, :]
        for i, per in enumerate(chart.periodic):
            if per:
                deltas[:, i] = (deltas[:, i] + 0.5) % 1.0 - 0.5
        norms = np.linalg.norm(deltas, axis=1)
        j = int(np.argmin(norms))
        return float(norms[j]), j

    scan_vf = _combined_flow(pi, fields, u)
    traj = _Trajectory(scan_vf, chart, m.values, probe.coarse_step, settings)
    n_nodes = int(math.floor(probe.t_max / probe.coarse_step))
    dist = [0.0]
    speed0 = float(np.linalg.norm(np.asarray(scan_vf(m.values), dtype=float)))
    capture = max(10.0 * probe.return_tol, 2.0 * probe.coarse_step * max(speed0, 1e-12))

    def refined_distance(t: float) -> tuple[float, float]:
        x = chart.wrap(traj.state(t))
        d0, j = dist_to_orbit(x)
        width = 1.0 / orbit_nodes
        s_star, d_star = _golden_min(lambda s: dist_to_orbit_point(x, s), (j - 1) * width, (j + 1) * width)
        return d_star, s_star % 1.0

    for i in range(1, n_nodes + 1):
        traj.extend_to(i)
        dist.append(dist_to_orbit(chart.wrap(traj.states[i]))[0])
        j = i - 1
        if j >= 1 and dist[j] <= dist[j - 1] and dist[j] <= dist[i] and dist[j] < capture:
            lo = max((j - 1) * probe.coarse_step, 10 * probe.return_tol)
            hi = (j + 1) * probe.coarse_step
            t_star, d_star = _golden_min(lambda t: refined_distance(t)[0], lo, hi)
            if d_star < probe.return_tol and t_star > 10 * probe.return_tol:
                _, s_star = refined_distance(t_star)
                return t_star * u - s_star * generator
    return None


# ---------------------------------------------------------------------------
# angle checks


def angle_relation_check(
    pi: BivectorField,
    actions,
    angles,
    points,
    tol: float = 1e-8,
    name: str = "angle-relations",
) -> tuple[CheckEntry, tuple[int, ...]]:
    """Defining relations of angle variables against an action trivialization.

    Checks {theta_i, theta_j} = 0 and {theta_j, p_i} = delta_ij at the sample
    points, allowing (and recording) one global sign flip per angle.
    """
    actions = tuple(actions)
    angles = tuple(angles)
    r = len(actions)
    if len(angles) != r:
        raise ValueError("need one angle per action")
    pts = list(points)
    first = pts[0]
    pmat0 = pi.matrix_at(first.values)
    signs = []
    for j in range(r):
        v = _bracket_from_grads(pmat0, angles[j].grad_at(first.values), actions[j].grad_at(first.values))
        signs.append(1 if v >= 0 else -1)
    worst = 0.0
    worst_pt = first
    for pt in pts:
        pmat = pi.matrix_at(pt.values)
        a_grads = [a.grad_at(pt.values) for a in actions]
        t_grads = [t.grad_at(pt.values) for t in angles]
        for i in range(r):
            for j in range(r):
                if i < j:
                    res = abs(_bracket_from_grads(pmat, t_grads[i], t_grads[j]))
                    if res >= worst:
                        worst, worst_pt = res, pt
                delta = 1.0 if i == j else 0.0
                res = abs(signs[j] * _bracket_from_grads(pmat, t_grads[j], a_grads[i]) - delta)
                if res >= worst:
                    worst, worst_pt = res, pt
    entry = CheckEntry(
        name=name,
        passed=worst <= tol,
        max_residual=worst,
        tolerance=tol,
        worst_point=list(worst_pt.values),
        detail=f"orientations {tuple(signs)}",
    )
    return entry, tuple(signs)


def angle_advance_check(
    pi: BivectorField,
    action: ScalarField,
    angle: ScalarField,
    x0: Point,
    t: float,
    orientation: int = 1,
    conserved=None,
    conserved_tol: float = 1e-8,
    settings: OdeSettings = OdeSettings(),
) -> float:
    """|wrap(angle(flow_t(x0)) - angle(x0)) - orientation * t| for t in (0, 1).

    Also asserts that every field in ``conserved`` (default: the action) is
    invariant along the flow within ``conserved_tol``.
    """
    if not 0.0 < t < 1.0:
        raise ValueError("advance time must lie in (0, 1)")
    end = flow(pi, action, x0, t, settings)
    conserved = list(conserved) if conserved is not None else [action]
    for f in conserved:
        drift = abs(f.value_at(end.values) - f.value_at(x0.values))
        if drift > conserved_tol:
            raise FlowConservationError(f.name, drift, conserved_tol)
    advance = wrap_half(angle.value_at(end.values) - angle.value_at(x0.values))
    return abs(wrap_half(advance - orientation * t))
