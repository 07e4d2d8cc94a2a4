"""Ensemble fluorescence contrast of the zero-field anti-crossing.

Each centre contributes a saturating mixing dip ``R / (1 + R)`` where the
mixing rate ``R`` between ``|+1, m_I>`` and ``|-1, m_I>`` is a sum of
Lorentzian multiphoton resonances:

    R = kappa * E^2 * sum_n J_n(2 Omega / f)^2 / ((delta - n f / 2)^2 + Gamma^2)

``delta`` is the axial Zeeman detuning from the sector centre, ``E`` the
transverse strain of the centre, ``Gamma`` a homogeneous linewidth and
``kappa`` a dimensionless coupling scale fixed by calibration against the
measured line width.  Without drive only ``n = 0`` survives and the dip is
``kappa E^2 / (kappa E^2 + delta^2 + Gamma^2)``.  The Bessel weights are the
photon-assisted couplings of the longitudinally driven pair; at ``delta = 0``
the ``n = 0`` term reproduces the renormalized gap ``2 E |J_0(2 Omega / f)|``
of the Floquet solver.

Because ``R`` is proportional to ``E^2`` the Gaussian strain average has a
closed form in terms of the scaled complementary error function.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import partial

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfcx, jv

from .driven_floquet import DriveParams
from .spin_core import SpinParams

NV_AXES = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float) / math.sqrt(3)

DIRECTIONS = {
    "100": np.array([1.0, 0.0, 0.0]),
    "110": np.array([1.0, 1.0, 0.0]) / math.sqrt(2),
    "111": np.array([1.0, 1.0, 1.0]) / math.sqrt(3),
}

SECTORS = (-1, 0, 1)
DEFAULT_I0_UA = 143.0


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class StrainDistribution:
    """Zero-mean Gaussian distribution of the transverse strain ``E`` (MHz)."""

    sigma_e: float = 5.0
    n_nodes: int = 41

    def __post_init__(self):
        if not self.sigma_e > 0:
            raise ValueError("sigma_e must be positive")
        if self.n_nodes < 11 or self.n_nodes % 2 == 0:
            raise ValueError("n_nodes must be odd and at least 11")

    def nodes(self):
        """Gauss-Hermite nodes (MHz) and normalized weights."""
        x, w = np.polynomial.hermite_e.hermegauss(self.n_nodes)
        return self.sigma_e * x, w / w.sum()


@dataclass(frozen=True)
class ContrastModel:
    """Parameters of the mixing-dip law.

    Parameters
    ----------
    c0 : float
        Fluorescence dip of a fully mixed centre (fraction).
    coupling_scale : float
        Dimensionless ``kappa`` multiplying ``E^2`` in the mixing rate.
    linewidth : float
        Homogeneous linewidth ``Gamma`` of the pair, MHz.
    sector_weights : tuple of float
        Weights of the ``m_I = -1, 0, +1`` sectors, summing to one.
    """

    c0: float = 0.013920417902445432
    coupling_scale: float = 0.6809710151724976
    linewidth: float = 0.3
    sector_weights: tuple = (1 / 3, 1 / 3, 1 / 3)

    def __post_init__(self):
        if not 0 < self.c0 < 0.05:
            raise ValueError("c0 must lie in (0, 0.05)")
        if not self.coupling_scale > 0:
            raise ValueError("coupling_scale must be positive")
        if not self.linewidth > 0:
            raise ValueError("linewidth must be positive")
        w = tuple(float(x) for x in self.sector_weights)
        if len(w) != 3 or min(w) < 0 or abs(sum(w) - 1) > 1e-9:
            raise ValueError("sector_weights must be three non-negative numbers summing to 1")
        object.__setattr__(self, "sector_weights", w)

    def to_dict(self):
        d = asdict(self)
        d["sector_weights"] = list(self.sector_weights)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(c0=float(d["c0"]), coupling_scale=float(d["coupling_scale"]),
                   linewidth=float(d["linewidth"]),
                   sector_weights=tuple(d.get("sector_weights", (1 / 3, 1 / 3, 1 / 3))))


@dataclass(frozen=True)
class FluorescenceCurve:
    b_grid: np.ndarray
    relative_photocurrent: np.ndarray
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FluorescenceMap:
    """Photocurrent (uA) on a field grid times a drive-parameter grid.

    ``total[i, j]`` and ``delta[i, j]`` refer to ``axis_values[i]`` and
    ``b_grid[j]``; ``baseline`` is the no-drive photocurrent on ``b_grid``.
    """

    b_grid: np.ndarray
    axis_name: str
    axis_values: np.ndarray
    total: np.ndarray
    delta: np.ndarray
    baseline: np.ndarray
    i0: float


def _has_drive(drive):
    return drive is not None and drive.omega_rf > 0


def sideband_rate_factor(delta, drive: DriveParams | None, model: ContrastModel):
    """Mixing rate divided by ``E^2`` (1/MHz^2) at axial detuning ``delta``."""
    delta = np.asarray(delta, dtype=float)
    g2 = model.linewidth**2
    if not _has_drive(drive):
        return model.coupling_scale / (delta**2 + g2)
    f = drive.f_rf
    z = 2 * drive.omega_rf / f
    nmax = int(math.ceil(z + 12 + 3 * z ** (1 / 3)))
    n = np.arange(-nmax, nmax + 1)
    weights = jv(n, z) ** 2
    lor = 1.0 / ((delta[..., None] - 0.5 * f * n) ** 2 + g2)
    return model.coupling_scale * (lor @ weights)


def sector_detuning(b_axial, m_i, params: SpinParams):
    return params.gamma_nv * (np.asarray(b_axial, dtype=float) - params.b_center(m_i))


def single_center_contrast(b_axial, e_value, drive, m_i, model: ContrastModel,
                           params: SpinParams | None = None):
    """Fractional fluorescence dip of one centre in one ``m_I`` sector."""
    params = params or SpinParams()
    k = sideband_rate_factor(sector_detuning(b_axial, m_i, params), drive, model)
    r = k * float(e_value) ** 2
    return model.c0 * model.sector_weights[SECTORS.index(m_i)] * r / (1 + r)


def gaussian_saturation_mean(k, sigma):
    """Mean of ``k E^2 / (1 + k E^2)`` for ``E ~ N(0, sigma^2)``."""
    k = np.asarray(k, dtype=float)
    u = k * sigma**2
    out = np.zeros_like(u)
    pos = u > 0
    x = 1.0 / np.sqrt(2.0 * u[pos])
    out[pos] = 1.0 - math.sqrt(math.pi) * x * erfcx(x)
    return out


def ensemble_contrast(b_axial, drive=None, dist: StrainDistribution | None = None,
                      model: ContrastModel | None = None, params: SpinParams | None = None,
                      method="exact"):
    """Strain- and sector-averaged dip at axial fields ``b_axial``.

    ``method="exact"`` evaluates the Gaussian average in closed form;
    ``method="quadrature"`` uses the Gauss-Hermite nodes of ``dist``.
    """
    dist = dist or StrainDistribution()
    model = model or ContrastModel()
    params = params or SpinParams()
    b = np.asarray(b_axial, dtype=float)
    total = np.zeros(b.shape)
    for m_i, w in zip(SECTORS, model.sector_weights):
        if w == 0:
            continue
        k = sideband_rate_factor(sector_detuning(b, m_i, params), drive, model)
        if method == "exact":
            avg = gaussian_saturation_mean(k, dist.sigma_e)
        elif method == "quadrature":
            e, we = dist.nodes()
            r = k[..., None] * e**2
            avg = (r / (1 + r)) @ we
        else:
            raise ValueError(f"unknown method {method!r}")
        total = total + w * avg
    return model.c0 * total


def axis_projections(lab_direction):
    u = np.asarray(lab_direction, dtype=float)
    norm = np.linalg.norm(u)
    if not abs(norm - 1.0) < 1e-9:
        raise ValueError("lab_direction must be a unit vector")
    return NV_AXES @ u


def resolve_direction(direction):
    if isinstance(direction, str):
        key = direction.strip("<>[] ")
        if key not in DIRECTIONS:
            raise ValueError(f"unknown direction {direction!r}")
        return DIRECTIONS[key]
    u = np.asarray(direction, dtype=float)
    return u / np.linalg.norm(u)


def orientation_dip(b_magnitude, lab_direction, drive=None, dist=None, model=None, params=None):
    """Dip averaged over the four NV axes for a field along ``lab_direction``.

    The RF field is collinear with the static field, so each axis sees both
    scaled by the same projection.
    """
    cosines = axis_projections(lab_direction)
    b = np.asarray(b_magnitude, dtype=float)
    acc = np.zeros(b.shape)
    for c in cosines:
        d = drive.scaled(c) if _has_drive(drive) else None
        acc = acc + ensemble_contrast(b * c, d, dist, model, params)
    return acc / len(cosines)


def orientation_projected_curve(b_magnitude_grid, lab_direction="100", drive=None,
                                dist=None, model=None, params=None) -> FluorescenceCurve:
    """Relative photocurrent ``1 - dip`` versus field magnitude."""
    u = resolve_direction(lab_direction)
    b = np.asarray(b_magnitude_grid, dtype=float)
    dip = orientation_dip(b, u, drive, dist, model, params)
    meta = {"direction": u.tolist(), "drive": None if drive is None else asdict(drive)}
    return FluorescenceCurve(b, 1.0 - dip, meta)


def _map_row(x, axis_name, fixed, b, u, dist, model, params):
    if axis_name == "f_rf":
        drive = DriveParams(omega_rf=fixed, f_rf=x)
    else:
        drive = DriveParams(omega_rf=x, f_rf=fixed)
    return orientation_dip(b, u, drive, dist, model, params)


def fluorescence_map(axis_name, axis_values, fixed, b_grid, lab_direction="100",
                     dist=None, model=None, params=None, i0=DEFAULT_I0_UA,
                     workers=1) -> FluorescenceMap:
    """Photocurrent over ``b_grid`` for each value of the second axis.

    ``axis_name`` is ``"f_rf"`` (then ``fixed`` is the drive amplitude) or
    ``"omega_rf"`` (then ``fixed`` is the drive frequency).  Rows are
    independent, so they may be evaluated by a process pool; results are
    collected in grid order.
    """
    if axis_name not in ("f_rf", "omega_rf"):
        raise ValueError("axis_name must be 'f_rf' or 'omega_rf'")
    xs = np.asarray(axis_values, dtype=float)
    b = np.asarray(b_grid, dtype=float)
    if xs.size == 0 or b.size == 0:
        raise ValueError("grids must not be empty")
    u = resolve_direction(lab_direction)
    dist = dist or StrainDistribution()
    model = model or ContrastModel()
    params = params or SpinParams()
    row = partial(_map_row, axis_name=axis_name, fixed=float(fixed), b=b, u=u,
                  dist=dist, model=model, params=params)
    if workers and workers > 1 and len(xs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            dips = list(ex.map(row, xs.tolist()))
    else:
        dips = [row(x) for x in xs.tolist()]
    base_dip = orientation_dip(b, u, None, dist, model, params)
    baseline = i0 * (1.0 - base_dip)
    total = i0 * (1.0 - np.array(dips))
    return FluorescenceMap(b, axis_name, xs, total, total - baseline[None, :], baseline, float(i0))


def half_width(dip_fn, b_max=60.0):
    """Half width at half maximum (G) of an even dip centred at zero."""
    d0 = float(dip_fn(0.0))
    if not d0 > 0:
        raise CalibrationError("no dip at zero field")
    f = lambda b: float(dip_fn(b)) - 0.5 * d0
    if f(b_max) > 0:
        raise CalibrationError(f"dip does not fall to half depth within {b_max} G")
    return brentq(f, 0.0, b_max, xtol=1e-12)


def curve_width_and_depth(model, dist=None, params=None, lab_direction="100"):
    u = resolve_direction(lab_direction)
    fn = lambda b: orientation_dip(np.array([b]), u, None, dist, model, params)[0]
    return half_width(fn), float(fn(0.0))


def calibrate_model(hwhm, depth, dist=None, params=None, lab_direction="100",
                    linewidth=0.3, sector_weights=(1 / 3, 1 / 3, 1 / 3),
                    bracket=(1e-4, 1e2)):
    """Fit ``coupling_scale`` to the no-drive HWHM and ``c0`` to the depth.

    The HWHM grows monotonically with the coupling scale, so a bracketed
    root search on ``log(kappa)`` fixes it; the depth is linear in ``c0``.

    Returns
    -------
    model : ContrastModel
    residuals : dict
        Relative errors of the re-evaluated width and depth.
    """
    if not (hwhm > 0 and depth > 0):
        raise ValueError("targets must be positive")
    dist = dist or StrainDistribution()
    params = params or SpinParams()

    def width(kappa):
        m = ContrastModel(c0=0.01, coupling_scale=kappa, linewidth=linewidth,
                          sector_weights=sector_weights)
        return curve_width_and_depth(m, dist, params, lab_direction)[0]

    lo, hi = (math.log(x) for x in bracket)
    w_lo, w_hi = width(math.exp(lo)), width(math.exp(hi))
    if not w_lo < hwhm < w_hi:
        raise CalibrationError(
            f"HWHM target {hwhm} G outside reachable range [{w_lo:.6g}, {w_hi:.6g}] G "
            f"for coupling_scale in [{bracket[0]:g}, {bracket[1]:g}]")
    s = brentq(lambda t: width(math.exp(t)) - hwhm, lo, hi, xtol=1e-13)
    kappa = math.exp(s)
    probe = ContrastModel(c0=0.01, coupling_scale=kappa, linewidth=linewidth,
                          sector_weights=sector_weights)
    _, d_probe = curve_width_and_depth(probe, dist, params, lab_direction)
    c0 = 0.01 * depth / d_probe
    if not 0 < c0 < 0.05:
        raise CalibrationError(f"depth target {depth} needs c0 = {c0:.4g} outside (0, 0.05)")
    model = replace(probe, c0=c0)
    w, d = curve_width_and_depth(model, dist, params, lab_direction)
    return model, {"hwhm": (w - hwhm) / hwhm, "depth": (d - depth) / depth}


def central_feature(b_grid, values):
    """Value at the grid point nearest B = 0 and the half width of that feature.

    The half width is the mean distance from zero at which ``|values|`` first
    drops below half its central magnitude on either side (linear
    interpolation); ``inf`` if it never does.
    """
    b = np.asarray(b_grid, dtype=float)
    y = np.asarray(values, dtype=float)
    i0 = int(np.argmin(np.abs(b)))
    a = abs(y[i0])
    widths = []
    for step in (1, -1):
        k = i0
        while 0 <= k + step < len(b) and abs(y[k + step]) > a / 2:
            k += step
        if not 0 <= k + step < len(b):
            widths.append(math.inf)
            continue
        y1, y2 = abs(y[k]), abs(y[k + step])
        t = (y1 - a / 2) / (y1 - y2) if y1 != y2 else 0.0
        widths.append(abs(b[k] + t * (b[k + step] - b[k]) - b[i0]))
    return float(y[i0]), float(np.mean(widths))
