"""Floquet treatment of the longitudinally driven two-level anti-crossing.

The driven pair is

    H(t) = (delta + omega_rf * cos(2 pi f_rf t + phase)) * sz + coupling * sx

with all quantities linear frequencies in MHz and time in microseconds.
Two independent solvers are provided: the truncated Shirley (extended
Hilbert space) matrix, and direct propagation over one drive period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eig_banded

from .spin_core import SpinParams

N_CAP = 4096
TOL = 1e-10


class FloquetConvergenceError(RuntimeError):
    """Raised when the photon-block truncation hits the cap unconverged."""

    def __init__(self, message, spectrum):
        super().__init__(message)
        self.spectrum = spectrum


@dataclass(frozen=True)
class DriveParams:
    """Longitudinal RF drive: amplitude and frequency in MHz."""

    omega_rf: float
    f_rf: float
    phase: float = 0.0

    def __post_init__(self):
        if not self.f_rf > 0:
            raise ValueError("f_rf must be positive")
        if not self.omega_rf >= 0:
            raise ValueError("omega_rf must be non-negative")

    def scaled(self, factor):
        """Same drive with the amplitude multiplied by ``|factor|``."""
        return DriveParams(self.omega_rf * abs(factor), self.f_rf, self.phase)


@dataclass(frozen=True)
class TwoLevelParams:
    delta: float
    coupling: float

    def __post_init__(self):
        if self.coupling < 0:
            raise ValueError("coupling must be non-negative")


@dataclass(frozen=True)
class FloquetSpectrum:
    quasienergies: tuple
    dressed_gap: float
    truncation_n: int
    converged: bool


def fold(x, f):
    """Map energies into the zone (-f/2, f/2]."""
    return f / 2 - np.mod(f / 2 - np.asarray(x, dtype=float), f)


def _zone_distance(a, b, f):
    d = np.mod(np.asarray(a) - np.asarray(b), f)
    return np.minimum(d, f - d)


def _spectrum(q, f, n, converged):
    q = np.sort(fold(q, f))
    d = float(np.mod(q[1] - q[0], f))
    gap = min(d, f - d)
    return FloquetSpectrum((float(q[0]), float(q[1])), gap, int(n), converged)


def _static_spectrum(sys, drive):
    r = math.hypot(sys.delta, sys.coupling)
    q = np.sort(fold([-r, r], drive.f_rf))
    return FloquetSpectrum((float(q[0]), float(q[1])), 2 * r, 0, True)


def _shirley_pair(sys, drive, n):
    """Central two eigenvalues of the extended matrix with blocks -n..n."""
    f = drive.f_rf
    k = np.arange(-n, n + 1)
    dim = 2 * (2 * n + 1)
    complex_band = drive.phase != 0.0
    ab = np.zeros((3, dim), dtype=complex if complex_band else float)
    diag = np.empty(dim)
    diag[0::2] = sys.delta + k * f
    diag[1::2] = -sys.delta + k * f
    ab[2] = diag
    ab[1, 1::2] = sys.coupling
    # cos(wt + phase) couples block k to k+1 with (omega/2) e^{-i phase}
    half = 0.5 * drive.omega_rf * (np.exp(-1j * drive.phase) if complex_band else 1.0)
    sup = np.zeros(dim, dtype=ab.dtype)
    sup[2::2] = half
    sup[3::2] = -half
    ab[0, 2:] = sup[2:]
    return eig_banded(ab, lower=False, eigvals_only=True, select="i",
                      select_range=(2 * n, 2 * n + 1))


def floquet_quasienergies(sys: TwoLevelParams, drive: DriveParams,
                          tol=TOL, n_cap=N_CAP) -> FloquetSpectrum:
    """Quasienergies from the truncated Shirley matrix.

    The block count starts at ``N >= 5 (omega + |delta| + coupling) / f`` and
    is doubled until both quasienergies move by less than ``tol`` MHz.
    For a zero drive amplitude the static result is returned and the
    dressed gap is the unfolded splitting ``2 sqrt(delta^2 + coupling^2)``.
    """
    if drive.omega_rf == 0:
        return _static_spectrum(sys, drive)
    f = drive.f_rf
    n = max(4, math.ceil(5 * (drive.omega_rf + abs(sys.delta) + sys.coupling) / f))
    q = fold(_shirley_pair(sys, drive, n), f)
    while True:
        n2 = 2 * n
        if n2 > n_cap:
            raise FloquetConvergenceError(
                f"truncation cap {n_cap} reached without convergence",
                _spectrum(q, f, n, False))
        q2 = fold(_shirley_pair(sys, drive, n2), f)
        if np.max(_zone_distance(np.sort(q2), np.sort(q), f)) < tol:
            return _spectrum(q2, f, n2, True)
        q, n = q2, n2


def _qmul(b, a):
    """Product ``b @ a`` of SU(2) elements ``a0 - i a.sigma`` stored as 4-vectors."""
    c0 = b[..., 0] * a[..., 0] - np.sum(b[..., 1:] * a[..., 1:], axis=-1)
    c = b[..., :1] * a[..., 1:] + a[..., :1] * b[..., 1:] + np.cross(b[..., 1:], a[..., 1:])
    return np.concatenate([c0[..., None], c], axis=-1)


def _period_propagator(sys, drive, steps):
    """One-period propagator via fourth-order Magnus steps (two Gauss nodes)."""
    f = drive.f_rf
    h = 1.0 / (f * steps)
    t = np.arange(steps) * h
    c = math.sqrt(3) / 6
    w = 2 * math.pi * f
    d1 = sys.delta + drive.omega_rf * np.cos(w * (t + h * (0.5 - c)) + drive.phase)
    d2 = sys.delta + drive.omega_rf * np.cos(w * (t + h * (0.5 + c)) + drive.phase)
    ex = np.full(steps, float(sys.coupling))
    zero = np.zeros(steps)
    a1 = np.stack([ex, zero, d1], axis=-1)
    a2 = np.stack([ex, zero, d2], axis=-1)
    # exponent -i v.sigma; the commutator term of the Magnus series is a cross product
    v = math.pi * h * (a1 + a2) + (math.sqrt(3) / 6) * (2 * math.pi * h) ** 2 * np.cross(a2, a1)
    nv = np.linalg.norm(v, axis=-1)
    sinc = np.where(nv > 0, np.sin(nv) / np.where(nv > 0, nv, 1.0), 1.0)
    q = np.concatenate([np.cos(nv)[:, None], v * sinc[:, None]], axis=-1)
    while len(q) > 1:
        if len(q) % 2:
            q = np.concatenate([q[:-2], _qmul(q[-1], q[-2])[None]], axis=0)
        q = _qmul(q[1::2], q[0::2])
    return q[0]


def _eigenphase(u, f):
    if abs(float(np.dot(u, u)) - 1.0) > 1e-9:
        raise RuntimeError("period propagator is not unitary within 1e-9")
    theta = math.atan2(float(np.linalg.norm(u[1:])), float(u[0]))
    return theta * f / (2 * math.pi)


def default_steps(sys: TwoLevelParams, drive: DriveParams) -> int:
    """Step count scaling with the accumulated phase over one period."""
    hmax = math.hypot(abs(sys.delta) + drive.omega_rf, sys.coupling)
    phase = 2 * math.pi * hmax / drive.f_rf
    return max(1024, 1 << math.ceil(math.log2(max(1.0, 16 * phase))))


def monodromy_quasienergies(sys: TwoLevelParams, drive: DriveParams,
                            steps: int | None = None) -> FloquetSpectrum:
    """Quasienergies from the eigenphases of the one-period propagator.

    Runs the Magnus stepper with ``steps`` and ``2 * steps`` and combines the
    two eigenphases by Richardson extrapolation (the scheme is symmetric, so
    its error expands in even powers of the step).
    """
    if steps is None:
        steps = default_steps(sys, drive)
    steps = int(steps)
    if steps < 1000:
        raise ValueError("steps must be at least 1000")
    f = drive.f_rf
    x1 = _eigenphase(_period_propagator(sys, drive, steps), f)
    x2 = _eigenphase(_period_propagator(sys, drive, 2 * steps), f)
    x = (16 * x2 - x1) / 15
    x = min(max(x, 0.0), f / 2)
    spec = _spectrum(np.array([-x, x]), f, steps, True)
    if drive.omega_rf == 0:
        r = math.hypot(sys.delta, sys.coupling)
        return FloquetSpectrum(spec.quasienergies, 2 * r, steps, True)
    return spec


def dressed_gap_vs_field(params: SpinParams, drive: DriveParams, coupling, b_grid):
    """Dressed gap (MHz) along a field grid with ``delta = gamma_nv * B``."""
    b_grid = np.atleast_1d(np.asarray(b_grid, dtype=float))
    if b_grid.size == 0:
        raise ValueError("b_grid must not be empty")
    out = []
    for b in b_grid:
        spec = floquet_quasienergies(TwoLevelParams(params.gamma_nv * b, coupling), drive)
        out.append((float(b), spec.dressed_gap))
    return out


def local_minima(xs, ys):
    """Interior local minima ``(x, y)`` of a sampled curve, refined by a parabola."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    out = []
    for k in range(1, len(xs) - 1):
        if ys[k] < ys[k - 1] and ys[k] <= ys[k + 1]:
            den = ys[k - 1] - 2 * ys[k] + ys[k + 1]
            h = xs[k] - xs[k - 1]
            off = 0.5 * h * (ys[k - 1] - ys[k + 1]) / den if den > 0 else 0.0
            out.append((float(xs[k] + off), float(ys[k])))
    return out


def lz_probability(coupling, drive: DriveParams) -> float:
    """Landau-Zener interaction probability ``1 - exp(-E^2 / (f * omega))``."""
    if drive.omega_rf == 0 or drive.f_rf == 0:
        raise ValueError("interaction probability undefined without drive")
    p = -math.expm1(-(coupling**2) / (drive.f_rf * drive.omega_rf))
    return min(p, math.nextafter(1.0, 0.0))
