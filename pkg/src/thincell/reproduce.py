"""Bundled figure configurations with figure-level pass/fail checks.

Each ``figN`` function computes the data behind one figure and returns a
:class:`FigureResult`: named tables (written as CSV by the CLI), checks, and
a plot layout consumed by :mod:`thincell.figures`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import lineshape
from .bloch import PhysicalParams
from .lineshape import NonUnimodalWarning, derivative, extract_features, fit_power_law
from .signal import (VelocityDistribution, dark_resonance_signal, velocity_contributions,
                     velocity_selection_profile)
from .spectrum import Spectrum, delta_grid
from .validation import fig11_params, invariance_report

RABI = 0.01
GP = RABI ** 2


class NumericalFailure(RuntimeError):
    """A computation behind a figure did not produce usable numbers."""


@dataclass
class Table:
    columns: list
    rows: np.ndarray

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, float))
        if self.rows.shape[1] != len(self.columns):
            raise ValueError("column count mismatch")


@dataclass
class Check:
    name: str
    value: object
    expected: str
    passed: bool

    def __post_init__(self):
        # plain Python values keep reports and printed lines free of numpy reprs
        self.value = np.asarray(self.value).tolist()
        self.passed = bool(self.passed)


@dataclass
class Panel:
    """One subplot: ``y`` columns of ``table`` against column ``x``."""

    table: str
    x: str
    y: list
    xlabel: str = ""
    ylabel: str = ""
    xscale: str = "linear"
    yscale: str = "linear"
    normalize: bool = False
    tables: list = field(default_factory=list)  # overlay the same columns from several tables
    linthresh: float | None = None  # symlog linear range; None uses the smallest nonzero value


@dataclass
class FigureResult:
    figure: str
    tables: dict
    checks: list
    panels: list
    params: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _kl(phi, rabi=RABI):
    return phi / rabi ** 2


def _spectrum_rows(spec: Spectrum, deriv: Spectrum | None = None):
    d = deriv.values if deriv is not None else np.full(len(spec), np.nan)
    return np.column_stack([spec.delta, spec.delta_over_gp, spec.values, d])


SPECTRUM_COLUMNS = ["delta_over_gamma", "delta_over_gp", "signal", "derivative"]


def spectrum_table(spec: Spectrum, deriv: Spectrum | None = None) -> Table:
    return Table(list(SPECTRUM_COLUMNS), _spectrum_rows(spec, deriv))


def _within(value, target, rel):
    return abs(value / target - 1) <= rel


def _scan_features(p, axis, values, dist=None, grid_kw=None, workers=1):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonUnimodalWarning)
        res = lineshape.scan(p, axis, values, dist=dist, grid_kw=grid_kw, workers=workers)
    failed = [e for e in res.errors if e]
    if failed:
        raise NumericalFailure(f"scan over {axis} failed at some points: {failed}")
    return res


FIG2_PHI = (0.001, 0.01, 0.1, 1.0, 10.0, 100.0)
FIG2_DIRECT = (1.0e-5, 7.5e-4, 3.8e-2, 1.0, 9.9, 56.4)
FIG2_DERIV = (1.4e-6, 1.4e-4, 1.4e-2, 1.0, 28.6, 367.0)


def fig2(workers=1) -> FigureResult:
    """Spectra and derivative amplitudes over phi at Omega = 0.01."""
    tables, amps, apps = {}, [], []
    # the phi = 0.001 wings reach past 100 gamma_p
    grid = delta_grid(GP, hi=1e3)
    for phi in FIG2_PHI:
        p = PhysicalParams(rabi=RABI, branching=0.7, cell_length=_kl(phi))
        spec = dark_resonance_signal(p, delta_grid=grid, workers=workers)
        d = derivative(spec)
        amps.append(spec.amplitude)
        apps.append(extract_features(d).amp_pp)
        tables[f"fig2_phi{phi:g}"] = spectrum_table(spec, d)
    i1 = FIG2_PHI.index(1.0)
    a_rel = np.array(amps) / amps[i1]
    app_rel = np.array(apps) / apps[i1]
    tables["fig2_amplitudes"] = Table(
        ["phi", "amplitude_rel", "amplitude_rel_ref", "amp_pp_rel", "amp_pp_rel_ref"],
        np.column_stack([FIG2_PHI, a_rel, FIG2_DIRECT, app_rel, FIG2_DERIV]))
    checks = []
    for phi, a, ar, b, br in zip(FIG2_PHI, a_rel, FIG2_DIRECT, app_rel, FIG2_DERIV):
        checks.append(Check(f"A(phi={phi:g})/A(1)", float(a), f"{ar:g} +-10%", _within(a, ar, 0.1)))
        checks.append(Check(f"A_pp(phi={phi:g})/A_pp(1)", float(b), f"{br:g} +-10%",
                            _within(b, br, 0.1)))
    names = [f"fig2_phi{phi:g}" for phi in FIG2_PHI]
    panels = [
        Panel(names[0], "delta_over_gp", ["signal"], "delta / gamma_p", "normalised signal",
              xscale="symlog", linthresh=0.1, normalize=True, tables=names),
        Panel(names[0], "delta_over_gp", ["derivative"], "delta / gamma_p",
              "normalised derivative", xscale="symlog", linthresh=0.1, normalize=True,
              tables=names),
    ]
    return FigureResult("fig2", tables, checks, panels, {"rabi": RABI, "branching": 0.7})


FIG3_SPEEDS = (0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0)


def half_depth_width(delta, values) -> float:
    """Smallest positive detuning at which a centre-zero dip reaches half its depth."""
    delta = np.asarray(delta, float)
    values = np.asarray(values, float)
    pos = delta > 0
    x, y = delta[pos], values[pos]
    depth = y[np.argmax(np.abs(y))]
    k = int(np.argmax(np.abs(y) >= 0.5 * abs(depth)))
    if k == 0:
        return float(x[0])
    t = (0.5 * abs(depth) - abs(y[k - 1])) / (abs(y[k]) - abs(y[k - 1]))
    return float(math.exp(math.log(x[k - 1]) + t * (math.log(x[k]) - math.log(x[k - 1]))))


def fig3(workers=1) -> FigureResult:
    """Per-velocity contributions at phi = 0.01."""
    p = PhysicalParams(rabi=RABI, branching=0.7, cell_length=_kl(0.01))
    # beyond 0.1 Gamma the optical response, not the dark resonance, dominates
    grid = delta_grid(GP, hi=1e3, per_decade=20)
    contrib = velocity_contributions(p, FIG3_SPEEDS, grid)
    cols = ["delta_over_gamma", "delta_over_gp"] + [f"v_{v:g}" for v in FIG3_SPEEDS]
    table = Table(cols, np.column_stack([grid, grid / GP, contrib.T]))
    widths = [half_depth_width(grid, c) / GP for c in contrib]
    wtable = Table(["v_z", "half_depth_width_over_gp"], np.column_stack([FIG3_SPEEDS, widths]))
    checks = [Check("contribution width grows with |v_z|", widths, "strictly increasing",
                    bool(np.all(np.diff(widths) > 0))),
              Check("slowest class narrower than fastest by 10x",
                    widths[-1] / widths[0], ">= 10", widths[-1] / widths[0] >= 10)]
    panels = [Panel("fig3_contributions", "delta_over_gp", cols[2:], "delta / gamma_p",
                    "S(v, delta) - S_bg(v)", xscale="symlog", linthresh=0.1)]
    return FigureResult("fig3", {"fig3_contributions": table, "fig3_widths": wtable}, checks,
                        panels, {"phi": 0.01, "speeds": list(FIG3_SPEEDS)})


FIG4_PHI = tuple(float(x) for x in 10.0 ** np.arange(-3.0, 4.01, 0.5))
CURVES = {
    "open": dict(branching=0.7),
    "closed": dict(branching=1.0),
    "relaxed": dict(branching=0.7, ground_relax=1e-6, feed=1e-6),
}


def _curve_scan(name, axis, values, workers, **base):
    p = PhysicalParams(**(dict(rabi=RABI) | base | CURVES[name]))
    return _scan_features(p, axis, values, workers=workers)


def fig4(workers=1) -> FigureResult:
    """Width against cell thickness for open, closed and relaxing systems."""
    kls = [_kl(phi) for phi in FIG4_PHI]
    res = {n: _curve_scan(n, "kL", kls, workers) for n in CURVES}
    cols = ["phi", "kL"] + [f"width_pp_over_gp_{n}" for n in CURVES]
    table = Table(cols, np.column_stack([FIG4_PHI, kls] + [res[n].widths_over_gp for n in CURVES]))
    phi = np.array(FIG4_PHI)
    fit = fit_power_law(phi, res["open"].widths_over_gp, (10.0, 1e4))
    big = phi >= 10
    closed = res["closed"].widths_over_gp[big]
    plateau = np.concatenate([res[n].widths_over_gp[phi <= 0.01] for n in ("open", "closed")])
    last = {n: res[n].widths_over_gp[-1] for n in CURVES}
    checks = [
        Check("narrowing exponent S (open, phi in [10, 1e4])", -fit.exponent, "1/3 +- 0.07",
              abs(-fit.exponent - 1 / 3) <= 0.07),
        Check("closed-system max/min width (phi in [10, 1e4])", float(closed.max() / closed.min()),
              "<= 10", closed.max() / closed.min() <= 10),
        Check("plateau width / gamma_p at phi <= 0.01", plateau.tolist(), "in [0.5, 2]",
              bool(np.all((plateau >= 0.5) & (plateau <= 2)))),
        Check("ordering at phi = 1e4: open < relaxed and open < closed",
              [last["open"], last["relaxed"], last["closed"]], "open narrowest",
              last["open"] < last["relaxed"] and last["open"] < last["closed"]),
    ]
    panels = [Panel("fig4_widths", "phi", cols[2:], "phi", "width_pp / gamma_p", "log", "log")]
    return FigureResult("fig4", {"fig4_widths": table}, checks, panels,
                        {"rabi": RABI, "fit_exponent": fit.exponent})


FIG5_ALPHA = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)


def fig5(workers=1) -> FigureResult:
    """Width against branching ratio at phi = 1e4."""
    p = PhysicalParams(rabi=RABI, branching=0.7, cell_length=_kl(1e4))
    res = _scan_features(p, "alpha", FIG5_ALPHA, workers=workers)
    w = res.widths_over_gp
    table = Table(["alpha", "width_pp_over_gp", "amp_pp"],
                  np.column_stack([FIG5_ALPHA, w, res.amplitudes]))
    checks = [Check("width non-increasing as alpha decreases", w.tolist(), "monotone",
                    bool(np.all(np.diff(w) >= 0)))]
    panels = [Panel("fig5_alpha", "alpha", ["width_pp_over_gp"], "alpha", "width_pp / gamma_p",
                    yscale="log")]
    return FigureResult("fig5", {"fig5_alpha": table}, checks, panels, {"phi": 1e4})


FIG6_OMEGA2 = tuple(float(x) for x in 10.0 ** np.arange(-10.0, -3.99, 0.5))


def fig6(workers=1) -> FigureResult:
    """Width against intensity at kL = 1e4."""
    res = {n: _curve_scan(n, "omega2", FIG6_OMEGA2, workers, cell_length=1e4) for n in CURVES}
    om2 = np.array(FIG6_OMEGA2)
    cols = ["omega2"] + [f"width_pp_{n}" for n in CURVES]
    table = Table(cols, np.column_stack([om2] + [res[n].widths for n in CURVES]))
    floor = res["relaxed"].widths[0] / 1e-6
    checks = [Check("relaxed width / gamma at smallest Omega^2", float(floor), "in [0.5, 2]",
                    0.5 <= floor <= 2)]
    panels = [Panel("fig6_widths", "omega2", cols[1:], "Omega^2", "width_pp / Gamma",
                    "log", "log")]
    return FigureResult("fig6", {"fig6_widths": table}, checks, panels, {"cell_length": 1e4})


FIG7_PHI = tuple(float(x) for x in 10.0 ** np.arange(-3.0, 3.01, 0.5))


def fig7(workers=1) -> FigureResult:
    """Derivative amplitude against phi, relative to phi = 1 in the closed system."""
    kls = [_kl(phi) for phi in FIG7_PHI]
    res = {n: _curve_scan(n, "kL", kls, workers) for n in ("open", "closed")}
    phi = np.array(FIG7_PHI)
    ref = res["closed"].amplitudes[int(np.argmin(np.abs(phi - 1)))]
    rel = {n: res[n].amplitudes / ref for n in res}
    table = Table(["phi", "amp_pp_rel_open", "amp_pp_rel_closed"],
                  np.column_stack([phi, rel["open"], rel["closed"]]))
    low = fit_power_law(phi, rel["open"], (1e-3, 1.0))
    high = fit_power_law(phi, rel["open"], (10.0, 1e3))
    checks = [Check("A_pp exponent for phi <= 1", low.exponent, "2 +- 0.1",
                    abs(low.exponent - 2) <= 0.1),
              Check("A_pp exponent for phi in [10, 1e3]", high.exponent, "1 +- 0.15",
                    abs(high.exponent - 1) <= 0.15)]
    panels = [Panel("fig7_amplitudes", "phi", ["amp_pp_rel_open", "amp_pp_rel_closed"], "phi",
                    "A_pp relative", "log", "log")]
    return FigureResult("fig7", {"fig7_amplitudes": table}, checks, panels,
                        {"exponent_low": low.exponent, "exponent_high": high.exponent})


FIG8_CURVES = {
    "a": dict(phi=0.001),
    "b": dict(phi=0.01),
    "c": dict(phi=0.1),
    "d": dict(phi=1.0),
    "e": dict(phi=0.01, ground_relax=10 * GP),
}
FIG8_CUTOFFS = tuple(float(x) for x in 10.0 ** np.arange(-5.0, 1.01, 0.25))


def saturation_curves(p: PhysicalParams, cutoffs, dist=None, grid=None, q=None):
    """Direct and derivative amplitude of partial spectra relative to the full ones."""
    dist = (dist or VelocityDistribution()).resolve(p)
    cut = np.append(np.asarray(cutoffs, float), dist.upper)
    grid, prof = velocity_selection_profile(p, cut, dist, q, delta_grid=grid)
    amp = np.ptp(prof, axis=1)
    dv = np.gradient(prof, grid, axis=1, edge_order=2)
    app = np.ptp(dv, axis=1)
    return amp[:-1] / amp[-1], app[:-1] / app[-1]


def fig8(workers=1) -> FigureResult:
    """Partial-velocity saturation of direct and derivative amplitudes."""
    cols, data, sat = ["cutoff"], [np.array(FIG8_CUTOFFS)], {}
    direct_at_1 = {}
    for name, spec in FIG8_CURVES.items():
        p = PhysicalParams(rabi=RABI, branching=0.7, cell_length=_kl(spec["phi"]),
                           ground_relax=spec.get("ground_relax", 0.0))
        direct, deriv = saturation_curves(p, FIG8_CUTOFFS)
        cols += [f"direct_{name}", f"derivative_{name}"]
        data += [direct, deriv]
        sat[name] = lineshape.saturation_scale(FIG8_CUTOFFS, deriv, 0.9)
        direct_at_1[name] = float(direct[FIG8_CUTOFFS.index(1.0)])
    table = Table(cols, np.column_stack(data))
    ratios = [sat[n] / FIG8_CURVES[n]["phi"] for n in "abc"]
    spread = max(ratios) / min(ratios)
    low_phi = [direct_at_1[n] for n in "abcd"]
    checks = [Check("90% derivative saturation cutoff / phi (phi = 0.001, 0.01, 0.1)", ratios,
                    "max/min <= 1.3", spread <= 1.3),
              Check("direct fraction at cutoff 1 (phi <= 1)", low_phi, ">= 0.95",
                    min(low_phi) >= 0.95)]
    panels = [Panel("fig8_saturation", "cutoff", [f"direct_{n}" for n in "abcd"],
                    "cutoff |v_z| (Gamma/k)", "direct fraction", "log"),
              Panel("fig8_saturation", "cutoff", [f"derivative_{n}" for n in FIG8_CURVES],
                    "cutoff |v_z| (Gamma/k)", "derivative fraction", "log")]
    return FigureResult("fig8", {"fig8_saturation": table}, checks, panels,
                        {"saturation_cutoffs": sat})


FIG9_DETUNING = (0.0, 0.5, 1.0, 2.0, 5.0)


def fig9(workers=1) -> FigureResult:
    """Spectra for several optical detunings at phi = 0.1 and 10."""
    tables, checks, panels = {}, [], []
    for phi in (0.1, 10.0):
        p = PhysicalParams(rabi=RABI, branching=0.7, cell_length=_kl(phi))
        grid = delta_grid(GP, hi=1e3)
        names, amps = [], []
        for dw in FIG9_DETUNING:
            spec = dark_resonance_signal(p.replace(laser_detuning=dw), delta_grid=grid,
                                         workers=workers)
            d = derivative(spec, check_resolution=False)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", NonUnimodalWarning)
                amps.append(extract_features(d).amp_pp)
            name = f"fig9_phi{phi:g}_dw{dw:g}"
            tables[name] = spectrum_table(spec, d)
            names.append(name)
        tables[f"fig9_phi{phi:g}_amplitudes"] = Table(
            ["laser_detuning", "amp_pp"], np.column_stack([FIG9_DETUNING, amps]))
        if phi == 0.1:
            checks.append(Check("narrow component shrinks with detuning (phi = 0.1)", amps,
                                "A_pp strictly decreasing", bool(np.all(np.diff(amps) < 0))))
        panels.append(Panel(names[0], "delta_over_gp", ["signal"], "delta / gamma_p",
                            f"signal (phi={phi:g})", xscale="symlog", linthresh=0.1,
                            tables=names))
        panels.append(Panel(names[0], "delta_over_gp", ["derivative"], "delta / gamma_p",
                            f"derivative (phi={phi:g})", xscale="symlog", linthresh=0.1,
                            tables=names))
    return FigureResult("fig9", tables, checks, panels, {"detunings": list(FIG9_DETUNING)})


FIG10_CUTOFFS = (0.0, 0.01, 0.03, 0.1, 0.3, 1.0)
FIG10_PARAMS = dict(rabi=0.1, branching=0.7, ground_relax=1e-3, cell_length=40.0)


def fig10(workers=1) -> FigureResult:
    """Removal of slow atoms at realistic thin-cell parameters."""
    p = PhysicalParams(**FIG10_PARAMS)
    res = _scan_features(p, "v_c", FIG10_CUTOFFS, workers=workers)
    w, a = res.widths_over_gp, res.amplitudes
    table = Table(["v_c", "width_pp_over_gp", "amp_pp"], np.column_stack([FIG10_CUTOFFS, w, a]))
    i = FIG10_CUTOFFS.index(0.1)
    dw, da = w[i] / w[0] - 1, 1 - a[i] / a[0]
    checks = [Check("width change at v_c = 0.1", float(dw), "> 10%", dw > 0.1),
              Check("amplitude change at v_c = 0.1", float(da), "> 10%", da > 0.1),
              Check("width increasing and amplitude decreasing in v_c", [w.tolist(), a.tolist()],
                    "monotone", bool(np.all(np.diff(w) > 0) and np.all(np.diff(a) < 0)))]
    panels = [Panel("fig10_truncation", "v_c", ["width_pp_over_gp"], "v_c (Gamma/k)",
                    "width_pp / gamma_p", "symlog", "log"),
              Panel("fig10_truncation", "v_c", ["amp_pp"], "v_c (Gamma/k)", "A_pp", "symlog",
                    "log")]
    return FigureResult("fig10", {"fig10_truncation": table}, checks, panels, FIG10_PARAMS)


def fig11(workers=1) -> FigureResult:
    """Three parameter sets sharing phi, gamma/gamma_p and alpha."""
    sets = fig11_params()
    rep = invariance_report(sets)
    g = rep["grid_over_gp"]
    cols = ["delta_over_gp"] + [f"signal_set{i}" for i in range(len(sets))]
    table = Table(cols, np.column_stack([g] + rep["spectra"]))
    checks = [Check("max deviation relative to spectrum scale", rep["absolute"], "<= 0.05",
                    rep["absolute"] <= 0.05)]
    panels = [Panel("fig11_spectra", "delta_over_gp", cols[1:], "delta / gamma_p",
                    "Delta I / kappa", "symlog", linthresh=0.1)]
    return FigureResult("fig11", {"fig11_spectra": table}, checks, panels,
                        {"absolute_deviation": rep["absolute"],
                         "shape_deviation": rep["shape"]})


FIGURES = {f"fig{n}": globals()[f"fig{n}"] for n in range(2, 12)}
