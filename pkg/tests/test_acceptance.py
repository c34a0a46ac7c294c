"""Acceptance criteria, one test each, printing a PASS/FAIL line per criterion."""

import warnings

import numpy as np
import pytest

from thincell import reproduce
from thincell.bloch import (CC, DD, EE, PhysicalParams, build_liouvillian, density_matrix,
                            evolve, initial_state)
from thincell.lineshape import NonUnimodalWarning, fit_power_law, saturation_scale, scan
from thincell.reproduce import CURVES, RABI, saturation_curves
from thincell.signal import dark_resonance_signal
from thincell.spectrum import delta_grid
from thincell.validation import (fig11_params, invariance_report, propagator_deviation,
                                 random_draws, random_state)

GP = RABI ** 2


@pytest.fixture
def report(capsys):
    def emit(number, title, passed, detail):
        with capsys.disabled():
            print(f"\nAC{number} {'PASS' if passed else 'FAIL'}  {title}: {detail}")
        assert passed, f"AC{number} {title}: {detail}"
    return emit


def kl(phi):
    return phi / GP


def widths_over_gp(curve, axis, values, **base):
    p = PhysicalParams(**(dict(rabi=RABI) | base | CURVES[curve]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonUnimodalWarning)
        res = scan(p, axis, values)
    assert not any(res.errors), res.errors
    return res


def test_ac1_amplitude_table(report):
    res = reproduce.fig2()
    tab = res.tables["fig2_amplitudes"]
    rows = tab.rows
    direct = np.abs(rows[:, 1] / rows[:, 2] - 1)
    deriv = np.abs(rows[:, 3] / rows[:, 4] - 1)
    worst = max(direct.max(), deriv.max())
    detail = (f"direct {np.round(rows[:, 1], 7).tolist()} derivative "
              f"{np.round(rows[:, 3], 7).tolist()}; worst relative error {worst:.3f} (<= 0.10)")
    report(1, "amplitude table over phi", worst <= 0.10, detail)


def test_ac2_width_plateau(report):
    widths = {}
    for curve in ("open", "closed"):
        res = widths_over_gp(curve, "kL", [kl(0.001), kl(0.01)])
        widths[curve] = res.widths_over_gp.tolist()
    flat = np.concatenate(list(widths.values()))
    ok = bool(np.all((flat >= 0.5) & (flat <= 2)))
    report(2, "width plateau at phi <= 0.01", ok, f"width/gamma_p {widths} (in [0.5, 2])")


NARROW_PHI = tuple(float(x) for x in 10.0 ** np.arange(1.0, 4.01, 0.5))


def test_ac3_narrowing_exponent(report):
    res = widths_over_gp("open", "kL", [kl(phi) for phi in NARROW_PHI])
    fit = fit_power_law(NARROW_PHI, res.widths_over_gp, (10.0, 1e4))
    s = -fit.exponent
    report(3, "narrowing exponent", abs(s - 1 / 3) <= 0.07,
           f"S = {s:.4f} (1/3 +- 0.07), fit residual {fit.residual:.3g}")


def test_ac4_closed_system_bounded(report):
    res = widths_over_gp("closed", "kL", [kl(phi) for phi in NARROW_PHI])
    w = res.widths_over_gp
    ratio = float(w.max() / w.min())
    report(4, "closed-system width ratio", ratio <= 10,
           f"max/min = {ratio:.3f} over phi in [10, 1e4] (<= 10)")


def test_ac5_relaxation_floor(report):
    res = widths_over_gp("relaxed", "omega2", [1e-10, 1e-9, 1e-8], cell_length=1e4)
    floor = res.widths / 1e-6
    # library default feed = gamma / 2, reported for information
    p = PhysicalParams(rabi=1e-5, branching=0.7, ground_relax=1e-6, cell_length=1e4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonUnimodalWarning)
        half = scan(p, "omega2", [1e-10]).widths[0] / 1e-6
    ok = 0.5 <= floor[0] <= 2
    report(5, "width tends to gamma as Omega^2 -> 0", ok,
           f"width/gamma = {np.round(floor, 4).tolist()} at Omega^2 = 1e-10, 1e-9, 1e-8 "
           f"(factor 2; feed = gamma/2 gives {half:.4f})")


def test_ac6_amplitude_exponents(report):
    phi = np.array(reproduce.FIG7_PHI)
    res = widths_over_gp("open", "kL", [kl(x) for x in phi])
    low = fit_power_law(phi, res.amplitudes, (1e-3, 1.0)).exponent
    high = fit_power_law(phi, res.amplitudes, (10.0, 1e3)).exponent
    ok = abs(low - 2) <= 0.1 and abs(high - 1) <= 0.15
    report(6, "amplitude scaling exponents", ok,
           f"{low:.4f} for phi <= 1 (2 +- 0.1), {high:.4f} for phi in [10, 1e3] (1 +- 0.15)")


def test_ac7_dimensionless_invariance(report):
    rep = invariance_report(fig11_params())
    report(7, "dimensionless invariance", rep["absolute"] <= 0.05,
           f"max deviation {rep['absolute']:.2e} of spectrum scale (<= 0.05)")


def test_ac8_velocity_selection(report):
    cutoffs = reproduce.FIG8_CUTOFFS
    sat, direct_at_1 = {}, {}
    for phi in (0.001, 0.01, 0.1):
        p = PhysicalParams(rabi=RABI, branching=0.7, cell_length=kl(phi))
        direct, deriv = saturation_curves(p, cutoffs)
        sat[phi] = saturation_scale(cutoffs, deriv, 0.9) / phi
        direct_at_1[phi] = float(direct[cutoffs.index(1.0)])
    ratios = list(sat.values())
    spread = max(ratios) / min(ratios)
    ok = spread <= 1.3 and direct_at_1[0.01] >= 0.95
    report(8, "velocity selection", ok,
           f"saturation cutoff / phi = {np.round(ratios, 4).tolist()} (spread {spread:.3f} "
           f"<= 1.3); direct fraction at cutoff 1 = {np.round(list(direct_at_1.values()), 4)}"
           f" (>= 0.95 at phi = 0.01)")


def test_ac9_truncation_sensitivity(report):
    res = reproduce.fig10()
    rows = res.tables["fig10_truncation"].rows
    w, a = rows[:, 1], rows[:, 2]
    i = reproduce.FIG10_CUTOFFS.index(0.1)
    dw, da = w[i] / w[0] - 1, 1 - a[i] / a[0]
    mono = bool(np.all(np.diff(w) > 0) and np.all(np.diff(a) < 0))
    ok = dw > 0.1 and da > 0.1 and mono
    report(9, "truncation sensitivity", ok,
           f"width +{dw:.1%}, amplitude -{da:.1%} at v_c = 0.1 (> 10% each); "
           f"monotone in v_c: {mono}")


def test_ac10_property_suite(report):
    results = {}
    results["propagator vs oracle (1002 draws)"] = propagator_deviation(1002, seed=7) <= 1e-9

    closed = build_liouvillian(PhysicalParams(rabi=0.05, branching=1.0, raman_detuning=1e-3), 0.2)
    drift = max(abs(evolve(closed, initial_state(), t)[[DD, CC, EE]].sum() - 1)
                for t in np.geomspace(1e-2, 1e6, 20))
    results["trace conservation"] = drift <= 1e-10

    opened = build_liouvillian(PhysicalParams(rabi=0.05, branching=0.7), 0.2)
    tr = [evolve(opened, initial_state(), t)[[DD, CC, EE]].sum() for t in np.linspace(0, 2e3, 200)]
    results["trace monotone (open)"] = bool(np.all(np.diff(tr) <= 1e-15))

    rng = np.random.default_rng(3)
    low = 0.0
    for p, v, _ in random_draws(100, seed=9):
        L = build_liouvillian(p.replace(feed=0.0), v)
        x0 = random_state(rng)
        for t in (0.1, 10.0, 1e4):
            low = min(low, np.linalg.eigvalsh(density_matrix(evolve(L, x0, t))).min())
    results["positivity"] = low >= -1e-9

    p = PhysicalParams(rabi=0.01, cell_length=1000.0, ground_relax=1e-6)
    grid = delta_grid(1e-4, per_decade=10)
    spec = dark_resonance_signal(p, delta_grid=grid, check_convergence=True, tol=1e-3)
    sym = np.max(np.abs(spec.values - spec.values[::-1])) / np.max(np.abs(spec.values))
    results["parity"] = sym <= 1e-8
    results["convergence gate"] = max(spec.meta["convergence"].values()) < 1e-3

    again = dark_resonance_signal(p, delta_grid=grid, workers=3)
    results["worker independence"] = spec.values.tobytes() == again.values.tobytes()

    failed = [k for k, ok in results.items() if not ok]
    report(10, "property suite", not failed,
           f"{len(results) - len(failed)}/{len(results)} properties hold"
           + (f"; failed: {failed}" if failed else ""))
