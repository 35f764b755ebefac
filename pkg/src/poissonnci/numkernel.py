"""Dense numerical kernels.

Hermitian eigendecomposition (cyclic Jacobi), numerical rank via singular
values of the Gram matrix, adaptive embedded Runge-Kutta 5(4) integration,
and lattice basis reduction in dimension <= 4.  Everything here is a pure
function of its inputs; no external linear-algebra solvers are used, so
results are bit-reproducible for a fixed input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "HermitianMatrix",
    "EigenDecomposition",
    "OdeSettings",
    "EighConvergenceError",
    "TrajectoryBlowupError",
    "StepExhaustionError",
    "LatticeRankError",
    "eigh",
    "eigh_complex",
    "numerical_rank",
    "singular_values",
    "integrate",
    "lattice_reduce",
]


class EighConvergenceError(RuntimeError):
    def __init__(self, off_residual: float, sweeps: int):
        self.off_residual = off_residual
        self.sweeps = sweeps
        super().__init__(f"Jacobi sweeps did not converge after {sweeps} sweeps (off-diagonal {off_residual:.3e})")


class TrajectoryBlowupError(RuntimeError):
    def __init__(self, last_valid_time: float):
        self.last_valid_time = last_valid_time
        super().__init__(f"trajectory left the finite range (last valid time {last_valid_time:.6g})")


class StepExhaustionError(RuntimeError):
    def __init__(self, time_reached: float, steps: int):
        self.time_reached = time_reached
        self.steps = steps
        super().__init__(f"step budget exhausted after {steps} steps at time {time_reached:.6g}")


class LatticeRankError(ValueError):
    def __init__(self, det: float, scale: float):
        self.det = det
        super().__init__(f"lattice basis is numerically rank-deficient (|det| {abs(det):.3e}, scale {scale:.3e})")


@dataclass(frozen=True)
class HermitianMatrix:
    """Hermitian matrix stored as real diagonal plus strict upper triangle.

    Reconstruction is exactly Hermitian by construction.
    """

    n: int
    diag: tuple[float, ...]
    upper_re: tuple[float, ...]  # row-major (k, l), k < l
    upper_im: tuple[float, ...]

    def __post_init__(self) -> None:
        m = self.n * (self.n - 1) // 2
        if self.n < 1:
            raise ValueError("dimension must be >= 1")
        if len(self.diag) != self.n or len(self.upper_re) != m or len(self.upper_im) != m:
            raise ValueError("inconsistent field lengths")

    @classmethod
    def from_complex(cls, a: np.ndarray, tol: float = 1e-12) -> "HermitianMatrix":
        a = np.asarray(a, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("expected a square matrix")
        scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
        if float(np.max(np.abs(a - a.conj().T))) > tol * scale:
            raise ValueError("matrix is not Hermitian within tolerance")
        n = a.shape[0]
        diag = tuple(float(a[k, k].real) for k in range(n))
        upper_re = tuple(float(a[k, l].real) for k in range(n) for l in range(k + 1, n))
        upper_im = tuple(float(a[k, l].imag) for k in range(n) for l in range(k + 1, n))
        return cls(n, diag, upper_re, upper_im)

    def to_complex(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=complex)
        idx = 0
        for k in range(self.n):
            a[k, k] = self.diag[k]
            for l in range(k + 1, self.n):
                a[k, l] = self.upper_re[idx] + 1j * self.upper_im[idx]
                a[l, k] = self.upper_re[idx] - 1j * self.upper_im[idx]
                idx += 1
        return a


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray  # ascending, real
    eigenvectors: np.ndarray  # unitary, columns


@dataclass(frozen=True)
class OdeSettings:
    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: float = 10.0
    max_steps: int = 200_000

    def __post_init__(self) -> None:
        if self.rtol <= 0 or self.atol <= 0 or self.max_step <= 0:
            raise ValueError("tolerances and max step must be positive")
        if self.max_steps < 1:
            raise ValueError("max steps must be >= 1")


# ---------------------------------------------------------------------------
# eigendecomposition: cyclic Jacobi with a fixed pivot order


def eigh_complex(a: np.ndarray, max_sweeps: int = 30) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian ndarray; internal fast path of :func:`eigh`."""
    a = np.array(a, dtype=complex)
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    if n == 1:
        return np.array([a[0, 0].real]), v
    norm = math.sqrt(float(np.sum(np.abs(a) ** 2)))
    stop = 1e-14 * max(1.0, norm)

    def off_norm(mat: np.ndarray) -> float:
        mask = ~np.eye(mat.shape[0], dtype=bool)
        return math.sqrt(float(np.sum(np.abs(mat[mask]) ** 2)))

    for sweep in range(max_sweeps):
        if off_norm(a) <= stop:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                r = abs(apq)
                if r <= stop / (n * n):
                    continue
                phase = apq / r
                tau = (a[q, q].real - a[p, p].real) / (2.0 * r)
                t = 1.0 if tau == 0.0 else math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                # unitary in the (p, q) plane: diag(phase, 1) * [[c, s], [-s, c]]
                jp = np.array([phase * c, -s], dtype=complex)
                jq = np.array([phase * s, c], dtype=complex)
                col_p = a[:, p] * jp[0] + a[:, q] * jp[1]
                col_q = a[:, p] * jq[0] + a[:, q] * jq[1]
                a[:, p] = col_p
                a[:, q] = col_q
                row_p = a[p, :] * np.conj(jp[0]) + a[q, :] * np.conj(jp[1])
                row_q = a[p, :] * np.conj(jq[0]) + a[q, :] * np.conj(jq[1])
                a[p, :] = row_p
                a[q, :] = row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
                vcol_p = v[:, p] * jp[0] + v[:, q] * jp[1]
                vcol_q = v[:, p] * jq[0] + v[:, q] * jq[1]
                v[:, p] = vcol_p
                v[:, q] = vcol_q
    else:
        raise EighConvergenceError(off_norm(a), max_sweeps)
    w = np.real(np.diag(a))
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def eigh(a: HermitianMatrix | np.ndarray, max_sweeps: int = 30) -> EigenDecomposition:
    """Eigenvalues (ascending) and a unitary eigenvector matrix of ``a``.

    Deterministic for fixed input: cyclic pivot order, sweep limit
    ``max_sweeps``; raises :class:`EighConvergenceError` on failure.
    """
    if not isinstance(a, HermitianMatrix):
        a = HermitianMatrix.from_complex(np.asarray(a))
    w, v = eigh_complex(a.to_complex(), max_sweeps=max_sweeps)
    return EigenDecomposition(w, v)


# ---------------------------------------------------------------------------
# numerical rank


def singular_values(m: np.ndarray) -> np.ndarray:
    """Singular values (descending) via eigenvalues of the smaller Gram matrix."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError("expected a matrix")
    if m.size == 0:
        return np.zeros(0)
    gram = m @ m.T if m.shape[0] <= m.shape[1] else m.T @ m
    w, _ = eigh_complex(gram.astype(complex))
    # Gram eigenvalues below the method's roundoff floor are noise, not tiny
    # singular values; without the clamp sqrt(eps * sigma_max^2) ~ 1e-8 sigma_max
    # collides with rank thresholds at exactly that scale
    floor = 1e-13 * max(float(np.max(w, initial=0.0)), 0.0)
    w = np.where(w < max(floor, 0.0), 0.0, w)
    return np.sqrt(w)[::-1]


def numerical_rank(m: np.ndarray, rel_tol: float = 1e-8) -> int:
    """Count singular values above ``rel_tol * max(1, sigma_max)``.

    The max(1, .) floor makes the threshold absolute for small-scale matrices,
    which is what the finite-difference residuals feeding this routine need.
    """
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    if m.size == 0:
        return 0
    sigma = singular_values(m)
    tau = rel_tol * max(1.0, float(sigma[0]))
    return int(np.sum(sigma > tau))


# ---------------------------------------------------------------------------
# adaptive Dormand-Prince 5(4)

_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_DP_ERR = tuple(b5 - b4 for b5, b4 in zip(_DP_B5, _DP_B4))


def integrate(
    vf: Callable[[np.ndarray], np.ndarray],
    x0: Sequence[float] | np.ndarray,
    t_final: float,
    settings: OdeSettings = OdeSettings(),
    periodic: Sequence[bool] | None = None,
) -> np.ndarray:
    """Flow ``x0`` along the autonomous field ``vf`` for time ``t_final``.

    Embedded 5(4) pair with local error control.  Periodic coordinates are
    accumulated unwrapped internally and wrapped to [0, 1) only on output.
    """
    y = np.array(x0, dtype=float)
    if t_final == 0.0:
        return _wrap(y, periodic)
    direction = 1.0 if t_final > 0 else -1.0
    t = 0.0
    f0 = np.asarray(vf(y), dtype=float)
    _check_finite(f0, 0.0)
    h = direction * min(
        settings.max_step,
        abs(t_final),
        max(1e-8, 1e-3 * (1.0 + float(np.max(np.abs(y)))) / (1.0 + float(np.max(np.abs(f0))))),
    )
    k = [np.zeros_like(y) for _ in range(7)]
    k[0] = f0
    steps = 0
    while direction * (t_final - t) > 0.0:
        if steps >= settings.max_steps:
            raise StepExhaustionError(t, steps)
        if abs(h) < 1e-14 * max(1.0, abs(t)):
            raise StepExhaustionError(t, steps)
        if direction * (t + h) > direction * t_final:
            h = t_final - t
        for i in range(1, 7):
            yi = y + h * sum(_DP_A[i][j] * k[j] for j in range(i))
            k[i] = np.asarray(vf(yi), dtype=float)
            _check_finite(k[i], t)
        y_new = y + h * sum(_DP_B5[i] * k[i] for i in range(7))
        _check_finite(y_new, t)
        err_vec = h * sum(_DP_ERR[i] * k[i] for i in range(7))
        scale = settings.atol + settings.rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        if err <= 1.0:
            t += h
            y = y_new
            k[0] = k[6]  # FSAL
            steps += 1
        factor = 0.9 * (err ** -0.2) if err > 0.0 else 5.0
        h *= min(5.0, max(0.2, factor))
        if abs(h) > settings.max_step:
            h = direction * settings.max_step
    return _wrap(y, periodic)


def _check_finite(v: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(v)) or np.max(np.abs(v)) > 1e12:
        raise TrajectoryBlowupError(t)


def _wrap(y: np.ndarray, periodic: Sequence[bool] | None) -> np.ndarray:
    if periodic is None:
        return y
    out = y.copy()
    for i, flag in enumerate(periodic):
        if flag:
            out[i] = out[i] % 1.0
    return out


# ---------------------------------------------------------------------------
# lattice reduction (columns are the basis vectors, r <= 4)


def lattice_reduce(basis: np.ndarray, delta: float = 0.99) -> np.ndarray:
    """Reduced basis of the lattice spanned by the columns of ``basis``.

    Gauss reduction for r = 2, floating LLL for r = 3, 4.  The output columns
    are an integer unimodular recombination of the input columns, so they span
    the same lattice and |det| is preserved.
    """
    b = np.array(basis, dtype=float)
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise ValueError("expected a square basis matrix")
    r = b.shape[0]
    if r > 4:
        raise ValueError("lattice reduction supported for r <= 4 only")
    det = _det(b)
    scale = float(np.sqrt(np.sum(b * b)))
    if abs(det) <= 1e-9 * max(scale, 1e-300) ** r:
        raise LatticeRankError(det, scale)
    if r == 1:
        return b if b[0, 0] > 0 else -b
    cols = [b[:, i].copy() for i in range(r)]
    if r == 2:
        cols = _gauss_reduce(cols)
    else:
        cols = _lll(cols, delta)
    return np.column_stack(cols)


def _det(b: np.ndarray) -> float:
    # Laplace expansion keeps this solver-free; r <= 4 so cost is negligible
    r = b.shape[0]
    if r == 1:
        return float(b[0, 0])
    total = 0.0
    for j in range(r):
        minor = np.delete(np.delete(b, 0, axis=0), j, axis=1)
        total += ((-1.0) ** j) * float(b[0, j]) * _det(minor)
    return total


def _gauss_reduce(cols: list[np.ndarray]) -> list[np.ndarray]:
    b1, b2 = cols
    while True:
        if b1 @ b1 > b2 @ b2:
            b1, b2 = b2, b1
        mu = round(float(b1 @ b2) / float(b1 @ b1))
        if mu == 0:
            return [b1, b2]
        b2 = b2 - mu * b1


def _lll(cols: list[np.ndarray], delta: float) -> list[np.ndarray]:
    r = len(cols)
    basis = [c.copy() for c in cols]

    def gram_schmidt() -> tuple[list[np.ndarray], np.ndarray]:
        ortho: list[np.ndarray] = []
        mu = np.zeros((r, r))
        for i in range(r):
            w = basis[i].copy()
            for j in range(i):
                mu[i, j] = float(basis[i] @ ortho[j]) / float(ortho[j] @ ortho[j])
                w = w - mu[i, j] * ortho[j]
            ortho.append(w)
        return ortho, mu

    ortho, mu = gram_schmidt()
    k = 1
    guard = 0
    while k < r:
        guard += 1
        if guard > 10_000:
            raise RuntimeError("LLL failed to terminate")
        for j in range(k - 1, -1, -1):
            q = round(mu[k, j])
            if q != 0:
                basis[k] = basis[k] - q * basis[j]
                ortho, mu = gram_schmidt()
        if float(ortho[k] @ ortho[k]) >= (delta - mu[k, k - 1] ** 2) * float(ortho[k - 1] @ ortho[k - 1]):
            k += 1
        else:
            basis[k], basis[k - 1] = basis[k - 1], basis[k]
            ortho, mu = gram_schmidt()
            k = max(k - 1, 1)
    return basis
