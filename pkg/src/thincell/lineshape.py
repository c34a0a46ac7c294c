"""Derivative spectra, peak-to-peak features, parameter scans and power laws."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bloch import PhysicalParams
from .signal import QuadratureConfig, VelocityDistribution, dark_resonance_signal
from .spectrum import Spectrum, default_grid_scale, delta_grid

log = logging.getLogger(__name__)


class UnderResolvedError(ValueError):
    """The derivative extremum sits between the two grid points closest to zero."""


class NonUnimodalWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LineshapeFeatures:
    width_pp: float
    amp_pp: float
    delta_max: float
    delta_min: float
    value_max: float
    value_min: float
    pump_rate: float = float("nan")

    @property
    def width_pp_over_gp(self) -> float:
        return self.width_pp / self.pump_rate


@dataclass(frozen=True)
class PowerLawFit:
    """``y = prefactor * x**exponent`` fitted in log-log space.

    ``residual`` is the RMS of the natural-log deviations over ``fit_range``.
    """

    exponent: float
    prefactor: float
    fit_range: tuple
    residual: float
    npoints: int


@dataclass
class ScanResult:
    axis: str
    values: np.ndarray
    features: list
    errors: list = field(default_factory=list)
    fit: PowerLawFit | None = None
    spectra: list = field(default_factory=list, repr=False)

    def feature_array(self, name: str) -> np.ndarray:
        return np.array([getattr(f, name) if f is not None else np.nan for f in self.features])

    @property
    def widths(self) -> np.ndarray:
        return self.feature_array("width_pp")

    @property
    def widths_over_gp(self) -> np.ndarray:
        return self.feature_array("width_pp_over_gp")

    @property
    def amplitudes(self) -> np.ndarray:
        return self.feature_array("amp_pp")


def _innermost(delta):
    """Indices of the closest grid points on either side of zero."""
    neg = np.nonzero(delta < 0)[0]
    pos = np.nonzero(delta > 0)[0]
    out = set()
    if neg.size:
        out.add(int(neg[-1]))
    if pos.size:
        out.add(int(pos[0]))
    out.update(int(i) for i in np.nonzero(delta == 0)[0])
    return out


def derivative(spec: Spectrum, check_resolution: bool = True) -> Spectrum:
    """d(signal)/d(delta) by second-order finite differences on the grid.

    Raises :class:`UnderResolvedError` when an extremum of the derivative
    lands on the grid points adjacent to line centre, where it cannot be
    located; refine the grid towards zero in that case.
    """
    if spec.kind != "direct":
        raise ValueError("derivative needs a direct spectrum")
    if spec.delta.size < 3:
        raise ValueError("need at least three grid points")
    d = np.gradient(spec.values, spec.delta, edge_order=2)
    if check_resolution and spec.delta[0] < 0 < spec.delta[-1]:
        inner = _innermost(spec.delta)
        for idx in (int(np.argmax(d)), int(np.argmin(d))):
            if idx in inner and d[idx] != 0:
                raise UnderResolvedError(
                    f"derivative extremum at delta={spec.delta[idx]:.3g} is not resolved")
    return Spectrum(spec.delta, d, "derivative", dict(spec.meta))


def _refine(x, y, i):
    """Vertex of the parabola through points i-1, i, i+1."""
    if i == 0 or i == len(x) - 1:
        return x[i], y[i]
    xs, ys = x[i - 1:i + 2], y[i - 1:i + 2]
    c2, c1, c0 = np.polyfit(xs - xs[1], ys, 2)
    if c2 == 0:
        return x[i], y[i]
    xv = -c1 / (2 * c2)
    if not xs[0] - xs[1] <= xv <= xs[2] - xs[1]:
        return x[i], y[i]
    return xs[1] + xv, c0 - c1 ** 2 / (4 * c2)


def _rivals(y, i, sign):
    """Other local extrema of the same kind within 10% of the global one."""
    s = sign * y
    local = np.nonzero((s[1:-1] >= s[:-2]) & (s[1:-1] >= s[2:]))[0] + 1
    return [j for j in local if j != i and abs(j - i) > 1 and s[j] >= 0.9 * s[i]]


def extract_features(spec: Spectrum) -> LineshapeFeatures:
    if spec.kind != "derivative":
        raise ValueError("extract_features needs a derivative spectrum")
    x, y = spec.delta, spec.values
    imax, imin = int(np.argmax(y)), int(np.argmin(y))
    if _rivals(y, imax, 1) or _rivals(y, imin, -1):
        warnings.warn("derivative has secondary extrema within 10% of the global ones",
                      NonUnimodalWarning, stacklevel=2)
    xmax, ymax = _refine(x, y, imax)
    xmin, ymin = _refine(x, y, imin)
    width = abs(xmin - xmax)
    if not width > 0:
        raise ValueError("degenerate derivative spectrum: extrema coincide")
    return LineshapeFeatures(width, ymax - ymin, xmax, xmin, ymax, ymin, spec.pump_rate)


AXES = {
    "kL": "cell_length",
    "omega2": "rabi",
    "alpha": "branching",
    "gamma": "ground_relax",
    "delta_omega": "laser_detuning",
    "v_c": None,
}


def point_params(p_base: PhysicalParams, axis: str, value: float, dist=None):
    """Parameters and velocity distribution for one scan point."""
    if axis not in AXES:
        raise ValueError(f"unknown scan axis {axis!r}; choose from {sorted(AXES)}")
    if axis == "v_c":
        width = dist.width if dist is not None else None
        return p_base, VelocityDistribution.truncated(value, width)
    if axis == "omega2":
        return p_base.replace(rabi=math.sqrt(value)), dist
    return p_base.replace(**{AXES[axis]: value}), dist


def scan(p_base: PhysicalParams, axis: str, values, dist=None, q=None,
         grid_kw=None, workers=1, keep_spectra=False) -> ScanResult:
    """Run spectrum, derivative and feature extraction at each axis value.

    A failing point is logged and recorded in ``errors``; the scan goes on.
    """
    values = np.asarray(values, dtype=float)
    if np.any(np.diff(values) < 0):
        raise ValueError("scan values must be sorted")
    grid_kw = grid_kw or {}
    q = q or QuadratureConfig()
    result = ScanResult(axis, values, [])
    for v in values:
        try:
            p, d = point_params(p_base, axis, float(v), dist)
            grid = delta_grid(default_grid_scale(p.rabi ** 2, p.ground_relax), **grid_kw)
            spec = dark_resonance_signal(p, d, q, grid, workers=workers)
            feats = extract_features(derivative(spec))
            result.features.append(feats)
            result.errors.append(None)
            if keep_spectra:
                result.spectra.append(spec)
        except Exception as exc:  # recorded per point
            log.warning("scan %s=%g failed: %s", axis, v, exc)
            result.features.append(None)
            result.errors.append(f"{type(exc).__name__}: {exc}")
            if keep_spectra:
                result.spectra.append(None)
    return result


def fit_power_law(x, y=None, fit_range=None, feature="width_pp") -> PowerLawFit:
    """Least-squares line in log-log space.

    ``x`` may be a :class:`ScanResult`, in which case ``y`` is taken from
    ``feature`` and the fit is stored on the scan.
    """
    scan_result = None
    if isinstance(x, ScanResult):
        scan_result = x
        x, y = x.values, x.feature_array(feature)
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    lo, hi = fit_range if fit_range is not None else (np.nanmin(x), np.nanmax(x))
    sel = (x >= lo) & (x <= hi) & np.isfinite(y)
    if np.count_nonzero(sel) < 4:
        raise ValueError("need at least 4 points in the fit range")
    xs, ys = x[sel], y[sel]
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("power-law fit needs positive values")
    lx, ly = np.log(xs), np.log(ys)
    slope, icept = np.polyfit(lx, ly, 1)
    resid = float(np.sqrt(np.mean((ly - (slope * lx + icept)) ** 2)))
    fit = PowerLawFit(float(slope), float(np.exp(icept)), (float(lo), float(hi)),
                      resid, int(sel.sum()))
    if scan_result is not None:
        scan_result.fit = fit
    return fit


def saturation_scale(cutoffs, fractions, level=0.9) -> float:
    """Smallest cutoff at which ``fractions`` first reaches ``level``.

    Interpolates linearly in log(cutoff) between the bracketing points;
    returns ``nan`` when the level is never reached.
    """
    c = np.asarray(cutoffs, float)
    f = np.asarray(fractions, float)
    above = np.nonzero(f >= level)[0]
    if above.size == 0:
        return float("nan")
    i = int(above[0])
    if i == 0:
        return float(c[0])
    t = (level - f[i - 1]) / (f[i] - f[i - 1])
    return float(np.exp(np.log(c[i - 1]) + t * (np.log(c[i]) - np.log(c[i - 1]))))
