"""Charts, scalar/bivector fields, Poisson brackets and Hamiltonian fields.

Sign conventions used throughout: the bracket matrix is P_ij(x) = {x_i, x_j},
{f, g} = grad(f)^T P grad(g), the Hamiltonian vector field is X_h = P grad(h)
(so that X_h(g) = {g, h}), and the anchor map is sharp(alpha) = -P alpha
(so that sharp of dh equals -X_h).
"""

from __future__ import annotations

import math
from typing import Callable, Mapping, Sequence

import numpy as np

from . import expr as expr_mod
from .numkernel import numerical_rank

__all__ = [
    "Chart",
    "Point",
    "ChartMismatchError",
    "ScalarField",
    "ExprField",
    "CallableField",
    "BivectorField",
    "ExprBivector",
    "CallableBivector",
    "canonical_bivector",
    "coordinate_field",
    "coordinate_fields",
    "scaled_field",
    "product_field",
    "bracket",
    "hamiltonian_vector_field",
    "sharp",
    "jacobi_residual",
    "jacobi_coordinate_residuals",
    "rank_at",
    "wrap_half",
]

FD_STEP = 1e-5  # relative central-difference step for algorithmic gradients


class ChartMismatchError(ValueError):
    pass


def wrap_half(d: float) -> float:
    """Map a difference of circle values into (-0.5, 0.5]."""
    return -((0.5 - d) % 1.0 - 0.5)


class Chart:
    """Named coordinate system; periodic coordinates live in R/Z, stored in [0, 1)."""

    def __init__(self, name: str, coords: Sequence[str], periodic: Sequence[bool] | None = None):
        coords = tuple(coords)
        if len(coords) < 1:
            raise ValueError("a chart needs at least one coordinate")
        if len(set(coords)) != len(coords):
            raise ValueError("coordinate names must be distinct")
        self.name = name
        self.coords = coords
        self.periodic = tuple(bool(b) for b in (periodic or [False] * len(coords)))
        if len(self.periodic) != len(coords):
            raise ValueError("periodic flags must match the coordinate count")
        self.dim = len(coords)
        self._periodic_idx = np.array(self.periodic, dtype=bool)

    def index(self, coord: str) -> int:
        return self.coords.index(coord)

    def wrap(self, values: np.ndarray) -> np.ndarray:
        out = np.array(values, dtype=float)
        out[self._periodic_idx] %= 1.0
        return out

    def point(self, values: Sequence[float]) -> "Point":
        values = np.asarray(values, dtype=float)
        if values.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} coordinates for chart {self.name!r}")
        if not np.all(np.isfinite(values)):
            raise ValueError("coordinates must be finite")
        return Point(self, self.wrap(values))

    def delta(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Displacement b - a with periodic coordinates mapped into (-0.5, 0.5]."""
        d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        for i in range(self.dim):
            if self.periodic[i]:
                d[i] = wrap_half(d[i])
        return d

    def distance(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.linalg.norm(self.delta(a, b)))

    def __repr__(self) -> str:
        return f"Chart({self.name!r}, dim={self.dim})"


class Point:
    """A coordinate vector in a chart."""

    __slots__ = ("chart", "values")

    def __init__(self, chart: Chart, values: np.ndarray):
        self.chart = chart
        self.values = np.asarray(values, dtype=float)

    def __repr__(self) -> str:
        vals = ", ".join(f"{v:.6g}" for v in self.values)
        return f"Point({self.chart.name}: {vals})"


def _require_chart(chart: Chart, *objs) -> None:
    for obj in objs:
        other = obj.chart if hasattr(obj, "chart") else obj
        if other is not chart:
            raise ChartMismatchError(
                f"chart mismatch: expected {chart.name!r}, got {getattr(other, 'name', other)!r}"
            )


# ---------------------------------------------------------------------------
# scalar fields


class ScalarField:
    """Evaluator yielding value and gradient at a point.

    ``codomain`` is "real" or "angle"; angle-valued fields take values in
    [0, 1) and report gradients of a locally smooth lift.
    """

    def __init__(self, chart: Chart, name: str, codomain: str = "real"):
        if codomain not in ("real", "angle"):
            raise ValueError("codomain must be 'real' or 'angle'")
        self.chart = chart
        self.name = name
        self.codomain = codomain

    def value_at(self, values: np.ndarray) -> float:
        raise NotImplementedError

    def grad_at(self, values: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value(self, p: Point) -> float:
        _require_chart(self.chart, p)
        return self.value_at(p.values)

    def value_grad(self, p: Point) -> tuple[float, np.ndarray]:
        _require_chart(self.chart, p)
        return self.value_at(p.values), self.grad_at(p.values)

    def grad(self, p: Point) -> np.ndarray:
        _require_chart(self.chart, p)
        return self.grad_at(p.values)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r} on {self.chart.name})"


class ExprField(ScalarField):
    """Closed-form field; gradients come from forward-mode propagation, exactly."""

    def __init__(
        self,
        chart: Chart,
        name: str,
        source: str | expr_mod.ExprAst,
        params: Mapping[str, float] | None = None,
        codomain: str = "real",
    ):
        super().__init__(chart, name, codomain)
        self.params = dict(params or {})
        declared = set(chart.coords) | set(self.params)
        self.ast = expr_mod.parse(source, declared) if isinstance(source, str) else source
        self._fn = expr_mod.compile_eval(self.ast, chart.coords, self.params)

    def value_at(self, values: np.ndarray) -> float:
        v = self._fn(values)[0]
        return v % 1.0 if self.codomain == "angle" else v

    def grad_at(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(self._fn(values)[1], dtype=float)

    def value_grad_at(self, values: np.ndarray) -> tuple[float, np.ndarray]:
        v, g = self._fn(values)
        if self.codomain == "angle":
            v %= 1.0
        return v, np.asarray(g, dtype=float)


class CallableField(ScalarField):
    """Algorithmic field (eigenvalue/angle functions and the like).

    Without an explicit gradient callable, gradients come from central finite
    differences with step FD_STEP * max(1, |x|); angle-valued differences are
    unwrapped into (-0.5, 0.5] so the lift is locally smooth.
    """

    def __init__(
        self,
        chart: Chart,
        name: str,
        fn: Callable[[np.ndarray], float],
        grad_fn: Callable[[np.ndarray], np.ndarray] | None = None,
        codomain: str = "real",
    ):
        super().__init__(chart, name, codomain)
        self._fn = fn
        self._grad_fn = grad_fn

    def value_at(self, values: np.ndarray) -> float:
        v = float(self._fn(values))
        return v % 1.0 if self.codomain == "angle" else v

    def grad_at(self, values: np.ndarray) -> np.ndarray:
        if self._grad_fn is not None:
            return np.asarray(self._grad_fn(values), dtype=float)
        h = FD_STEP * max(1.0, float(np.max(np.abs(values))))
        g = np.zeros(self.chart.dim)
        for k in range(self.chart.dim):
            xp = values.copy()
            xm = values.copy()
            xp[k] += h
            xm[k] -= h
            dv = self.value_at(xp) - self.value_at(xm)
            if self.codomain == "angle":
                dv = wrap_half(dv)
            g[k] = dv / (2 * h)
        return g


def coordinate_field(chart: Chart, coord: str) -> ExprField:
    codomain = "angle" if chart.periodic[chart.index(coord)] else "real"
    return ExprField(chart, coord, coord, codomain=codomain)


def coordinate_fields(chart: Chart) -> list[ExprField]:
    return [coordinate_field(chart, c) for c in chart.coords]


def scaled_field(f: ScalarField, c: float, name: str | None = None) -> ScalarField:
    out = CallableField(
        f.chart,
        name or f"{c}*{f.name}",
        lambda x: c * f.value_at(x),
        lambda x: c * f.grad_at(x),
        codomain="real",
    )
    return out


def product_field(f: ScalarField, g: ScalarField, name: str | None = None) -> ScalarField:
    if f.chart is not g.chart:
        raise ChartMismatchError("product of fields on different charts")

    def val(x: np.ndarray) -> float:
        return f.value_at(x) * g.value_at(x)

    def grd(x: np.ndarray) -> np.ndarray:
        return f.value_at(x) * g.grad_at(x) + g.value_at(x) * f.grad_at(x)

    return CallableField(f.chart, name or f"{f.name}*{g.name}", val, grd)


# ---------------------------------------------------------------------------
# bivector fields


class BivectorField:
    """Evaluator for the antisymmetric bracket matrix P(x) with P_ij = {x_i, x_j}."""

    def __init__(self, chart: Chart, name: str):
        self.chart = chart
        self.name = name

    def matrix_at(self, values: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def matrix(self, p: Point) -> np.ndarray:
        _require_chart(self.chart, p)
        return self.matrix_at(p.values)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r} on {self.chart.name})"


class ExprBivector(BivectorField):
    """Bivector with strict-upper-triangle entries given as expressions."""

    def __init__(
        self,
        chart: Chart,
        name: str,
        entries: Mapping[tuple[int, int], str | expr_mod.ExprAst | float],
        params: Mapping[str, float] | None = None,
    ):
        super().__init__(chart, name)
        params = dict(params or {})
        declared = set(chart.coords) | set(params)
        self._entries: list[tuple[int, int, Callable]] = []
        for (i, j), src in entries.items():
            if not (0 <= i < j < chart.dim):
                raise ValueError(f"bivector entries must have i < j, got ({i}, {j})")
            if isinstance(src, (int, float)):
                const = float(src)
                fn = (lambda c: lambda x: (c, None))(const)
            else:
                ast = expr_mod.parse(src, declared) if isinstance(src, str) else src
                fn = expr_mod.compile_eval(ast, chart.coords, params)
            self._entries.append((i, j, fn))

    def matrix_at(self, values: np.ndarray) -> np.ndarray:
        n = self.chart.dim
        p = np.zeros((n, n))
        for i, j, fn in self._entries:
            v = fn(values)[0]
            p[i, j] = v
            p[j, i] = -v
        return p


class CallableBivector(BivectorField):
    """Bivector from a callable; only the strict upper triangle of the result is
    used, so antisymmetry is exact regardless of roundoff in the callable."""

    def __init__(self, chart: Chart, name: str, fn: Callable[[np.ndarray], np.ndarray]):
        super().__init__(chart, name)
        self._fn = fn

    def matrix_at(self, values: np.ndarray) -> np.ndarray:
        raw = np.asarray(self._fn(values), dtype=float)
        upper = np.triu(raw, k=1)
        return upper - upper.T


def canonical_bivector(chart: Chart, pairs: Sequence[tuple[int, int]], name: str = "canonical") -> ExprBivector:
    """Constant bivector with {x_i, x_j} = 1 for each (i, j) pair, i < j."""
    return ExprBivector(chart, name, {pair: 1.0 for pair in pairs})


# ---------------------------------------------------------------------------
# bracket operations


def _bracket_from_grads(pmat: np.ndarray, gf: np.ndarray, gg: np.ndarray) -> float:
    # sum over the strict upper triangle of P_ij (df_i dg_j - df_j dg_i);
    # every term (and hence the fixed-order sum) negates exactly under f <-> g
    iu, ju = np.triu_indices(pmat.shape[0], k=1)
    return float(np.sum(pmat[iu, ju] * (gf[iu] * gg[ju] - gf[ju] * gg[iu])))


def bracket(pi: BivectorField, f: ScalarField, g: ScalarField, x: Point) -> float:
    """{f, g}(x) = grad(f)^T P(x) grad(g); antisymmetric in (f, g) exactly."""
    _require_chart(pi.chart, f, g, x)
    return _bracket_from_grads(pi.matrix_at(x.values), f.grad_at(x.values), g.grad_at(x.values))


def hamiltonian_vector_field(pi: BivectorField, h: ScalarField, x: Point) -> np.ndarray:
    """X_h(x) = P(x) grad(h), so that grad(g) . X_h = {g, h} for every g."""
    _require_chart(pi.chart, h, x)
    return pi.matrix_at(x.values) @ h.grad_at(x.values)


def sharp(pi: BivectorField, alpha: Sequence[float], x: Point) -> np.ndarray:
    """Anchor map on covectors: sharp(alpha) = -P(x) alpha."""
    _require_chart(pi.chart, x)
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (pi.chart.dim,):
        raise ValueError("covector length must match the chart dimension")
    return -pi.matrix_at(x.values) @ alpha


def _bracket_value_at(pi: BivectorField, f: ScalarField, g: ScalarField, values: np.ndarray) -> float:
    return _bracket_from_grads(pi.matrix_at(values), f.grad_at(values), g.grad_at(values))


def jacobi_residual(pi: BivectorField, x: Point, f: ScalarField, g: ScalarField, h: ScalarField) -> float:
    """|{{f,g},h} + {{g,h},f} + {{h,f},g}| at x.

    Outer brackets differentiate the inner bracket value field by central
    differences (step FD_STEP * max(1, |x|)) so expression-defined and
    algorithmic fields are treated uniformly.
    """
    _require_chart(pi.chart, f, g, h, x)
    values = x.values
    n = pi.chart.dim
    step = FD_STEP * max(1.0, float(np.max(np.abs(values))))
    pmat = pi.matrix_at(values)

    def outer(a: ScalarField, b: ScalarField, c: ScalarField) -> float:
        # {{a, b}, c} at values
        grad_inner = np.zeros(n)
        for k in range(n):
            xp = values.copy()
            xm = values.copy()
            xp[k] += step
            xm[k] -= step
            grad_inner[k] = (_bracket_value_at(pi, a, b, xp) - _bracket_value_at(pi, a, b, xm)) / (2 * step)
        return float(grad_inner @ pmat @ c.grad_at(values))

    return abs(outer(f, g, h) + outer(g, h, f) + outer(h, f, g))


def jacobi_coordinate_residuals(pi: BivectorField, values: np.ndarray) -> tuple[float, float]:
    """Max Jacobi residual over all coordinate triples at one point.

    Returns (max absolute residual, max relative residual); the relative
    normalization divides by max(1, |P|) * max(1, |dP|), the natural size of
    the double-bracket terms.  For coordinate functions the inner bracket is
    the matrix entry P_ab itself, so the cyclic sum contracts the
    finite-difference Jacobian of P against P.
    """
    n = pi.chart.dim
    values = np.asarray(values, dtype=float)
    step = FD_STEP * max(1.0, float(np.max(np.abs(values))))
    pmat = pi.matrix_at(values)
    dp = np.zeros((n, n, n))  # dp[k] = d P / d x_k
    for k in range(n):
        xp = values.copy()
        xm = values.copy()
        xp[k] += step
        xm[k] -= step
        dp[k] = (pi.matrix_at(xp) - pi.matrix_at(xm)) / (2 * step)
    # {{x_a, x_b}, x_c} = sum_k dP_ab/dx_k P_kc
    term = np.einsum("kab,kc->abc", dp, pmat)
    jac = term + np.transpose(term, (1, 2, 0)) + np.transpose(term, (2, 0, 1))
    max_abs = float(np.max(np.abs(jac)))
    scale = max(1.0, float(np.max(np.abs(pmat)))) * max(1.0, float(np.max(np.abs(dp))))
    return max_abs, max_abs / scale


def rank_at(pi: BivectorField, x: Point, rel_tol: float = 1e-8) -> int:
    """numerical_rank of P(x); always even for antisymmetric matrices."""
    _require_chart(pi.chart, x)
    rank = numerical_rank(pi.matrix_at(x.values), rel_tol=rel_tol)
    assert rank % 2 == 0, f"antisymmetric matrix with odd numerical rank {rank}"
    return rank
