"""Micro-motion extraction: receiver combining, circle fitting and phase-to-displacement."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import detrend

from radar_hr.config import SPEED_OF_LIGHT, RangeProfileSeries

N_BINS = 16
BIN_OFFSETS = np.arange(-7, 9)


class InsufficientDataError(ValueError):
    pass


class DegenerateMatrixError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


class SingularFitError(ValueError):
    pass


class UndefinedAngleError(ValueError):
    pass


@dataclass(frozen=True)
class CircleFit:
    center: complex
    radius: float
    residual: float


@dataclass(frozen=True, eq=False)
class MicroMotionSet:
    """Displacement waveforms ``(16, L)`` in meters, one per range bin."""

    waveforms: np.ndarray
    bin_indices: np.ndarray
    sample_rate: float
    clamped: bool = False


def covariance(x: np.ndarray) -> np.ndarray:
    """Sample covariance of stacked receiver signals ``x`` with shape ``(L, n_rx)``.

    The temporal mean (static clutter at this bin) is removed first.
    """
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] < 8:
        raise InsufficientDataError(f"need at least 8 samples, got shape {x.shape}")
    xc = x - x.mean(axis=0)
    q = xc.T @ xc.conj() / x.shape[0]
    return 0.5 * (q + q.conj().T)


def _phase_normalize(w: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(w) > 1e-12 * np.abs(w).max())
    return w * np.exp(-1j * np.angle(w[nz[0]]))


def _power(a: np.ndarray, v: np.ndarray, max_iter: int, tol: float) -> np.ndarray | None:
    v = v / np.linalg.norm(v)
    for _ in range(max_iter):
        u = a @ v
        nrm = np.linalg.norm(u)
        if nrm == 0:
            return None
        u = _phase_normalize(u / nrm)
        if np.linalg.norm(u - _phase_normalize(v)) < tol:
            return u
        v = u
    # slow convergence: square the operator to widen the eigenvalue gap
    b = a.copy()
    for _ in range(max_iter):
        b = b @ b
        b /= np.abs(b).max()
        u = b @ v
        nrm = np.linalg.norm(u)
        if nrm == 0:
            return None
        u = _phase_normalize(u / nrm)
        r = a @ u
        lam = np.vdot(u, r).real
        if np.linalg.norm(r - lam * u) <= 1e-9 * max(abs(lam), 1e-300):
            return u
        v = u
    return None


def dominant_eigvec(q: np.ndarray, max_iter: int = 100, tol: float = 1e-10) -> np.ndarray:
    """Unit dominant eigenvector of a Hermitian PSD matrix by power iteration.

    Starts from the all-ones direction.  A start orthogonal to the dominant
    eigenvector converges to a lesser one, so unless the eigenvalue found
    is at least half the trace (which proves dominance for a PSD matrix)
    the iteration is repeated from the largest column and from each basis
    vector, keeping the largest Rayleigh quotient.  Stalls from nearly equal
    leading eigenvalues are broken by repeated squaring.  The first
    non-negligible component of the result is real and positive.
    """
    q = np.asarray(q, dtype=complex)
    scale = np.abs(q).max()
    if scale == 0 or not np.isfinite(scale):
        raise DegenerateMatrixError("matrix is zero")
    a = q / scale
    n = a.shape[0]
    trace = np.trace(a).real
    starts = [np.ones(n, dtype=complex), a[:, np.argmax(np.linalg.norm(a, axis=0))],
              *np.eye(n, dtype=complex)]
    best, best_lam = None, -np.inf
    for v in starts:
        u = _power(a, v, max_iter, tol)
        if u is None:
            continue
        lam = np.vdot(u, a @ u).real
        if lam >= 0.5 * trace:
            return u
        if lam > best_lam:
            best, best_lam = u, lam
    if best is None:
        raise ConvergenceError("power iteration did not converge")
    return best


def mrc_combine(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Combine receivers: ``y(l) = w^H x(l)`` for ``x`` of shape ``(L, n_rx)``."""
    x = np.asarray(x)
    w = np.asarray(w)
    if x.shape[-1] != w.shape[0]:
        raise ValueError("receiver count mismatch")
    return x @ w.conj()


def fit_circle(y: np.ndarray) -> CircleFit:
    """Algebraic least-squares circle through complex samples.

    Minimizes ``sum((|y - eta|^2 - rho)^2)`` which is linear in
    ``(Re eta, Im eta, rho - |eta|^2)``.  Coordinates are centered and scaled
    before the solve; the radius is ``sqrt(rho)``.
    """
    y = np.asarray(y, dtype=complex)
    if y.size < 3:
        raise SingularFitError("need at least 3 points")
    origin = y.mean()
    z = y - origin
    s = np.abs(z).max()
    if s == 0:
        raise SingularFitError("points are coincident")
    z = z / s
    a = np.column_stack([2 * z.real, 2 * z.imag, np.ones(z.size)])
    rhs = z.real**2 + z.imag**2
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise SingularFitError("points are collinear")
    sol, *_ = np.linalg.lstsq(a, rhs, rcond=None)
    c = complex(sol[0], sol[1])
    rho = sol[2] + abs(c) ** 2
    if rho < 0:
        raise SingularFitError("negative squared radius")
    radius = np.sqrt(rho)
    resid = float(np.sum((np.abs(z - c) ** 2 - rho) ** 2) * s**4)
    return CircleFit(origin + s * c, float(s * radius), resid)


def extract_phase(y: np.ndarray, fit: CircleFit, f0: float) -> np.ndarray:
    """Displacement ``c / (4 pi f0) * unwrap(angle(y - eta))`` in meters."""
    z = np.asarray(y, dtype=complex) - fit.center
    if np.any(z == 0):
        raise UndefinedAngleError("sample coincides with the circle center")
    return SPEED_OF_LIGHT / (4 * np.pi * f0) * np.unwrap(np.angle(z))


def bin_waveform(x: np.ndarray, f0: float) -> np.ndarray:
    """Raw (not detrended) displacement of one range bin, ``x`` shaped ``(L, n_rx)``."""
    w = dominant_eigvec(covariance(x))
    y = mrc_combine(x, w)
    return extract_phase(y, fit_circle(y), f0)


def extract_micromotions(series: RangeProfileSeries, center_bin: int, f0: float,
                         detrend_waveforms: bool = True) -> MicroMotionSet:
    """Displacement waveforms for bins ``center-7 .. center+8``.

    Windows that would leave the positive range axis are shifted inside it
    and flagged ``clamped``.  Bins whose signal is degenerate (zero or
    collinear) yield an all-zero waveform.
    """
    n_bins = series.profiles.shape[2] // 2
    lo = center_bin + BIN_OFFSETS[0]
    clamped = False
    if lo < 0 or center_bin + BIN_OFFSETS[-1] >= n_bins:
        clamped = True
        lo = int(np.clip(lo, 0, n_bins - N_BINS))
        warnings.warn(f"16-bin neighbourhood of bin {center_bin} clamped to start at {lo}",
                      stacklevel=2)
    bins = lo + np.arange(N_BINS)
    out = np.zeros((N_BINS, series.n_samples))
    for i, b in enumerate(bins):
        try:
            d = bin_waveform(series.profiles[:, :, b], f0)
        except (DegenerateMatrixError, SingularFitError, UndefinedAngleError,
                ConvergenceError):
            continue
        out[i] = detrend(d) if detrend_waveforms else d
    return MicroMotionSet(out, bins, series.sample_rate, clamped)
