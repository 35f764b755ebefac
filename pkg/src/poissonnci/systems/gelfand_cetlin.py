"""Eigenvalue ladder system on Hermitian matrices.

The chart encodes an n x n Hermitian matrix X by its real diagonal and the
real/imaginary parts of the strict upper triangle.  The linear bracket is
{F, G}(X) = kappa * Tr(i [grad F, grad G] X), where grad is taken with respect
to the real trace pairing; kappa = 2 pi makes the ladder flows 1-periodic, so
action and angle values both live naturally in R/Z conventions.

Ladder data: mu_p_i is the p-th ascending eigenvalue of the top-left i x i
block X^(i).  The top-level eigenvalues are Casimirs; the lower-level ones
have periodic flows and serve as action variables.  The conjugate angle
phi_p_i is the argument (scaled to [0, 1)) of the component of the coupling
column X[1..i, i+1] along the p-th eigenvector of X^(i), with the eigenvector
phased so that its last entry is real and positive.
"""

from __future__ import annotations

import math

import numpy as np

from ..geometry import CallableBivector, CallableField, Chart
from ..nciverify import CheckEntry, NciFamily, sample_points
from ..numkernel import eigh_complex
from . import BaseRecord, ExtraCheck, SystemBundle

__all__ = ["gc_build", "gc_actions", "gc_angle", "GcRegularityError", "AngleUndefinedError", "encode", "decode"]

_TWOPI = 2.0 * math.pi


class GcRegularityError(ValueError):
    """A block spectrum is too close to degenerate for eigenvalue data."""


class AngleUndefinedError(ValueError):
    """The angle construction degenerates (vanishing eigenvector component)."""


# ---------------------------------------------------------------------------
# chart encoding


def _pair_list(n: int) -> list[tuple[int, int]]:
    return [(k, l) for k in range(n) for l in range(k + 1, n)]


def coordinate_names(n: int) -> list[str]:
    names = [f"d{k + 1}" for k in range(n)]
    names += [f"re{k + 1}{l + 1}" for k, l in _pair_list(n)]
    names += [f"im{k + 1}{l + 1}" for k, l in _pair_list(n)]
    return names


def encode(x: np.ndarray) -> np.ndarray:
    """Chart vector of a complex Hermitian matrix."""
    n = x.shape[0]
    pairs = _pair_list(n)
    out = np.empty(n * n)
    out[:n] = np.real(np.diag(x))
    for idx, (k, l) in enumerate(pairs):
        out[n + idx] = x[k, l].real
        out[n + len(pairs) + idx] = x[k, l].imag
    return out


def decode(values: np.ndarray, n: int) -> np.ndarray:
    pairs = _pair_list(n)
    x = np.zeros((n, n), dtype=complex)
    for k in range(n):
        x[k, k] = values[k]
    for idx, (k, l) in enumerate(pairs):
        entry = values[n + idx] + 1j * values[n + len(pairs) + idx]
        x[k, l] = entry
        x[l, k] = entry.conjugate()
    return x


def _dual_encode(h: np.ndarray) -> np.ndarray:
    """Coefficient vector with Tr(h X) = dual_encode(h) . encode(X)."""
    n = h.shape[0]
    pairs = _pair_list(n)
    out = np.empty(n * n)
    out[:n] = np.real(np.diag(h))
    for idx, (k, l) in enumerate(pairs):
        out[n + idx] = 2.0 * h[k, l].real
        out[n + len(pairs) + idx] = 2.0 * h[k, l].imag
    return out


def _gradient_matrices(n: int) -> list[np.ndarray]:
    """Trace-pairing gradients of the chart coordinate functions."""
    mats = []
    for k in range(n):
        e = np.zeros((n, n), dtype=complex)
        e[k, k] = 1.0
        mats.append(e)
    for k, l in _pair_list(n):
        e = np.zeros((n, n), dtype=complex)
        e[k, l] = 0.5
        e[l, k] = 0.5
        mats.append(e)
    for k, l in _pair_list(n):
        e = np.zeros((n, n), dtype=complex)
        e[k, l] = 0.5j
        e[l, k] = -0.5j
        mats.append(e)
    return mats


def _structure_tensor(n: int, kappa: float) -> np.ndarray:
    """S with P_ab(x) = S[a, b, :] . x  (entries of the linear bracket matrix)."""
    grads = _gradient_matrices(n)
    dim = n * n
    s = np.zeros((dim, dim, dim))
    for a in range(dim):
        for b in range(a + 1, dim):
            h = kappa * 1j * (grads[a] @ grads[b] - grads[b] @ grads[a])
            coeffs = _dual_encode(h)
            s[a, b] = coeffs
            s[b, a] = -coeffs
    return s


# ---------------------------------------------------------------------------
# ladder eigenvalue data


def _block_eig(x: np.ndarray, i: int) -> tuple[np.ndarray, np.ndarray]:
    return eigh_complex(x[:i, :i])


def gc_actions(
    x: np.ndarray, gap_tol: float = 1e-8, strict: bool = True
) -> dict[tuple[int, int], tuple[float, np.ndarray]]:
    """All ladder values mu_p_i with chart-coordinate gradients.

    The gradient of mu_p_i is the padded projector v v* of the block
    eigenvector, expressed in the chart encoding.  Raises
    :class:`GcRegularityError` when a block spectrum has a gap below
    ``gap_tol`` or (with ``strict``) when adjacent levels share an eigenvalue
    within it; the gradient formula itself only needs the block gaps, so
    ``strict=False`` serves points like diagonal matrices that sit on the
    cross-level boundary of the regular locus.
    """
    x = np.asarray(x, dtype=complex)
    n = x.shape[0]
    out: dict[tuple[int, int], tuple[float, np.ndarray]] = {}
    previous: np.ndarray | None = None
    for i in range(1, n + 1):
        w, vecs = _block_eig(x, i)
        if i > 1 and float(np.min(np.diff(w))) < gap_tol:
            raise GcRegularityError(f"block {i} spectrum gap below {gap_tol:.1e}")
        if strict and previous is not None and float(np.min(np.abs(previous[:, None] - w[None, :]))) < gap_tol:
            raise GcRegularityError(f"blocks {i - 1} and {i} share an eigenvalue within {gap_tol:.1e}")
        previous = w
        for p in range(1, i + 1):
            v = np.zeros(n, dtype=complex)
            v[:i] = vecs[:, p - 1]
            q = np.outer(v, v.conj())
            out[(i, p)] = (float(w[p - 1]), _dual_encode(q))
    return out


def gc_angle(x: np.ndarray, i: int, p: int) -> float:
    """Conjugate angle phi_p_i in [0, 1).

    Diagonalizes X^(i), phases the p-th eigenvector so its last entry is real
    and positive, and returns the scaled argument of the component of the
    coupling column X[1..i, i+1] along that eigenvector.
    """
    x = np.asarray(x, dtype=complex)
    n = x.shape[0]
    if not (1 <= i <= n - 1 and 1 <= p <= i):
        raise ValueError(f"need 1 <= p <= i <= n-1, got (i, p) = ({i}, {p})")
    _, vecs = _block_eig(x, i)
    v = vecs[:, p - 1]
    last = v[i - 1]
    scale = max(1.0, float(np.max(np.abs(x))))
    if abs(last) < 1e-10:
        raise AngleUndefinedError(f"eigenvector {p} of block {i} has vanishing last component")
    v_phased = v * (abs(last) / last)
    z = np.vdot(v_phased, x[:i, i])
    if abs(z) < 1e-12 * scale:
        raise AngleUndefinedError(f"coupling component for (i, p) = ({i}, {p}) vanishes")
    return float((math.atan2(z.imag, z.real) / _TWOPI) % 1.0)


# ---------------------------------------------------------------------------
# bundle


def _ladder_order(n: int) -> list[tuple[int, int]]:
    order = [(i, p) for i in range(1, n) for p in range(1, i + 1)]
    order += [(n, p) for p in range(1, n + 1)]
    return order


def _interlacing_check(bundle: SystemBundle, seed: int, samples: int, tol: float) -> CheckEntry:
    """Strict interlacing of consecutive block spectra at every accepted sample."""
    n = int(bundle.params["n"])
    pts = sample_points(bundle.chart, bundle.plan(seed, samples), "interlacing")
    min_margin = math.inf
    worst_pt = pts[0]
    for pt in pts:
        x = decode(pt.values, n)
        spectra = [_block_eig(x, i)[0] for i in range(1, n + 1)]
        for i in range(1, n):
            low, high = spectra[i - 1], spectra[i]
            for p in range(i):
                margin = min(low[p] - high[p], high[p + 1] - low[p])
                if margin < min_margin:
                    min_margin, worst_pt = margin, pt
    return CheckEntry(
        name="interlacing",
        passed=min_margin > tol,
        max_residual=max(0.0, -min_margin),
        tolerance=tol,
        worst_point=list(worst_pt.values),
        detail=f"strict interlacing margin {min_margin:.3e} at {len(pts)} samples",
    )


def gc_build(n: int, kappa: float = _TWOPI, gap_min: float = 0.15, component_min: float = 0.08) -> SystemBundle:
    """Ladder bundle on n x n Hermitian matrices, 2 <= n <= 5."""
    if not 2 <= n <= 5:
        raise ValueError("supported matrix sizes are 2 <= n <= 5")
    chart = Chart("gelfand-cetlin", coordinate_names(n))
    tensor = _structure_tensor(n, kappa)
    pi = CallableBivector(chart, "gelfand-cetlin", lambda vals: np.tensordot(tensor, vals, axes=([2], [0])))

    def mu_value(i: int, p: int):
        def fn(vals: np.ndarray) -> float:
            w, _ = _block_eig(decode(vals, n), i)
            return float(w[p - 1])

        return fn

    def mu_grad(i: int, p: int):
        def fn(vals: np.ndarray) -> np.ndarray:
            _, vecs = _block_eig(decode(vals, n), i)
            v = np.zeros(n, dtype=complex)
            v[:i] = vecs[:, p - 1]
            return _dual_encode(np.outer(v, v.conj()))

        return fn

    mu_fields = {
        (i, p): CallableField(chart, f"mu_{p}_{i}", mu_value(i, p), mu_grad(i, p))
        for i in range(1, n + 1)
        for p in range(1, i + 1)
    }
    order = _ladder_order(n)
    fields = tuple(mu_fields[key] for key in order)
    r = n * (n - 1) // 2
    family = NciFamily(pi, fields, rank=r)
    actions = tuple(mu_fields[(i, p)] for i in range(1, n) for p in range(1, i + 1))
    casimirs = tuple(mu_fields[(n, p)] for p in range(1, n + 1))

    def phi_value(i: int, p: int):
        return lambda vals: gc_angle(decode(vals, n), i, p)

    angles = tuple(
        CallableField(chart, f"phi_{p}_{i}", phi_value(i, p), codomain="angle")
        for i in range(1, n)
        for p in range(1, i + 1)
    )

    def regular(vals: np.ndarray) -> bool:
        x = decode(vals, n)
        spectra = []
        for i in range(1, n + 1):
            w, vecs = _block_eig(x, i)
            if i > 1 and float(np.min(np.diff(w))) < gap_min:
                return False
            if i < n and float(np.min(np.abs(vecs[i - 1, :]))) < component_min:
                return False
            spectra.append(w)
        for i in range(1, n):
            cross = np.min(np.abs(spectra[i - 1][:, None] - spectra[i][None, :]))
            if float(cross) < gap_min:
                return False
        return True

    base_chart = Chart("gelfand-cetlin-base", [f"b_mu_{p}_{i}" for i, p in order])
    base_pi = CallableBivector(base_chart, "zero", lambda vals: np.zeros((len(order), len(order))))

    def project(vals: np.ndarray) -> np.ndarray:
        x = decode(vals, n)
        spectra = {i: _block_eig(x, i)[0] for i in range(1, n + 1)}
        return np.array([spectra[i][p - 1] for i, p in order])

    diag_box = (-2.5, 2.5)
    off_box = (-1.2, 1.2)
    boxes = tuple([diag_box] * n + [off_box] * (n * (n - 1)))

    return SystemBundle(
        name="gelfand-cetlin",
        chart=chart,
        pi=pi,
        family=family,
        sample_boxes=boxes,
        predicate=regular,
        compact_fibers=True,
        base=BaseRecord(base_chart, base_pi, project),
        actions=actions,
        angles=angles,
        lattice_fields=actions,
        casimirs=casimirs,
        tolerances={
            "jacobi": 1e-7,
            "involution": 1e-6,
            "casimir": 1e-6,
            "completeness": 1e-6,
            "angle-relations": 1e-4,
            "interlacing": 0.0,
        },
        extra_checks=(ExtraCheck("interlacing", 0.0, _interlacing_check),),
        params={"n": n, "kappa": kappa},
        notes="regular locus: simple block spectra, adjacent levels disjoint, nonzero last eigenvector rows",
    )
