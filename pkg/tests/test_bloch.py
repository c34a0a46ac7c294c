import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thincell import bloch
from thincell.bloch import (CC, DD, EE, IM_DC, IM_EC, NSTATE, PhysicalParams, build_liouvillian,
                            density_matrix, derived_params, evolve, initial_state,
                            path_integrated_coherence, slow_eigenvalues, steady_state)
from thincell.validation import (ode_oracle, propagator_deviation, random_state,
                                 trajectory_integral)


def lindblad_generator(p, v_z):
    """Real 9x9 generator built from a complex Hamiltonian and decay terms.

    Basis (D, C, e). The Hamiltonian is H = -delta/2 (|D><C| + h.c.)
    + W (|e><C| + h.c.) - Delta |e><e|; relaxation acts element-wise.
    """
    W = bloch.COUPLING_PER_RABI * p.rabi
    d, g, a = p.raman_detuning, p.ground_relax, p.branching
    opt = p.laser_detuning - v_z
    H = np.array([[0, -d / 2, 0], [-d / 2, 0, W], [0, W, -opt]], dtype=complex)

    def rhs(rho):
        out = -1j * (H @ rho - rho @ H)
        out[2, 2] += -(1 + g) * rho[2, 2]
        for k in (0, 1):
            out[k, k] += a / 2 * rho[2, 2] - g * rho[k, k]
            out[2, k] += -(0.5 + g) * rho[2, k]
            out[k, 2] += -(0.5 + g) * rho[k, 2]
        out[0, 1] += -g * rho[0, 1]
        out[1, 0] += -g * rho[1, 0]
        return out

    def to_vec(rho):
        return np.array([rho[0, 0].real, rho[1, 1].real, rho[2, 2].real,
                         rho[2, 0].real, rho[2, 0].imag, rho[2, 1].real, rho[2, 1].imag,
                         rho[0, 1].real, rho[0, 1].imag])

    M = np.empty((NSTATE, NSTATE))
    for j in range(NSTATE):
        e = np.zeros(NSTATE)
        e[j] = 1.0
        M[:, j] = to_vec(rhs(density_matrix(e)))
    return M


def test_derived_params_examples():
    d = derived_params(PhysicalParams(rabi=0.1, cell_length=40.0))
    assert d.phi == pytest.approx(0.4) and d.pump_rate == pytest.approx(0.01)
    d = derived_params(PhysicalParams(rabi=0.0))
    assert d.pump_rate == 0 and d.phi == 0
    d = derived_params(PhysicalParams(rabi=0.01, cell_length=1e4))
    assert d.phi == pytest.approx(1.0) and d.sat_rabi_sq == pytest.approx(1e-4)
    assert d.phi == pytest.approx(d.pump_rate * 1e4, rel=1e-15)
    assert d.phi == pytest.approx(0.01 ** 2 / d.sat_rabi_sq, rel=1e-15)


@pytest.mark.parametrize("kw", [dict(rabi=-1), dict(branching=1.5), dict(ground_relax=-1e-3),
                                dict(cell_length=0), dict(doppler_width=-1),
                                dict(rabi=float("nan"))])
def test_params_reject_invalid(kw):
    with pytest.raises(ValueError):
        PhysicalParams(**kw)


def test_params_warn_outside_weak_field():
    with pytest.warns(UserWarning):
        PhysicalParams(rabi=0.5)


def test_feed_defaults_to_half_relaxation():
    p = PhysicalParams(ground_relax=2e-3)
    assert p.feed == 1e-3
    assert p.replace(ground_relax=4e-3).feed == 2e-3
    assert p.replace(feed=5e-3, ground_relax=4e-3).feed == 5e-3


def test_named_matrix_elements():
    p = PhysicalParams(rabi=0.01, branching=0.7, ground_relax=1e-6)
    M = build_liouvillian(p, 0.0).matrix
    assert M[EE, EE] == pytest.approx(-(1 + 1e-6), rel=1e-15)
    # with the field coupling W = rabi / 2 this element is -2 W = -rabi
    assert M[EE, IM_EC] == pytest.approx(-0.01, rel=1e-15)


def test_matrix_matches_independent_construction():
    p = PhysicalParams(rabi=0.01, branching=0.7, ground_relax=1e-6, raman_detuning=0.001)
    M = build_liouvillian(p, 0.3).matrix
    ref = lindblad_generator(p, 0.3)
    np.testing.assert_allclose(M, ref, rtol=0, atol=1e-15)
    # entries that vanish in the equations are exactly zero
    assert np.array_equal(M == 0, np.abs(ref) < 1e-18)


def test_feed_vector():
    L = build_liouvillian(PhysicalParams(ground_relax=2e-4), 0.1)
    np.testing.assert_array_equal(L.feed_vec, [1e-4, 1e-4, 0, 0, 0, 0, 0, 0, 0])


def test_free_decay_spectrum():
    p = PhysicalParams(rabi=0.0, branching=0.7)
    ev = np.sort_complex(np.linalg.eigvals(build_liouvillian(p, 0.0).matrix))
    np.testing.assert_allclose(ev.real, [-1, -0.5, -0.5, -0.5, -0.5, 0, 0, 0, 0], atol=1e-14)
    np.testing.assert_allclose(ev.imag, 0, atol=1e-14)


def test_closed_population_row_sum():
    p = PhysicalParams(rabi=0.05, branching=1.0, raman_detuning=0.003)
    M = build_liouvillian(p, 0.7).matrix
    left = np.zeros(NSTATE)
    left[[DD, CC, EE]] = 1
    np.testing.assert_allclose(left @ M, 0, atol=1e-16)


def test_evolve_identity_at_zero_time():
    for p, v, x0 in _draws(20):
        np.testing.assert_allclose(evolve(build_liouvillian(p, v), x0, 0.0), x0, atol=1e-15)


def test_analytic_free_decay():
    p = PhysicalParams(rabi=0.0, branching=0.6)
    L = build_liouvillian(p, 0.0)
    x0 = np.zeros(NSTATE)
    x0[EE] = 1.0
    for t in (0.0, 0.3, 2.0, 15.0):
        x = evolve(L, x0, t)
        assert x[EE] == pytest.approx(math.exp(-t), abs=1e-12)
        for k in (DD, CC):
            assert x[k] == pytest.approx(0.3 * (1 - math.exp(-t)), abs=1e-12)
    y = ode_oracle(p, 0.0, x0, 2.0)
    assert y[EE] == pytest.approx(math.exp(-2.0), abs=1e-10)


def _draws(n, seed=11):
    from thincell.validation import random_draws
    return list(random_draws(n, seed))


def test_propagator_matches_ode_oracle_1000_draws():
    assert propagator_deviation(1002, seed=1) <= 1e-9


def test_propagator_batches_ill_conditioned_points():
    # Omega = delta = 0 with rabi tiny gives degenerate eigenvalues
    p = PhysicalParams(rabi=1e-9, branching=1.0)
    L = build_liouvillian(p, 0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", bloch.IllConditionedWarning)
        x = evolve(L, initial_state(), 1e5)
    ref = ode_oracle(p, 0.0, initial_state(), 1e5)
    np.testing.assert_allclose(x, ref, atol=1e-9)


def test_propagate_rejects_non_finite():
    L = build_liouvillian(PhysicalParams(), 0.1)
    with pytest.raises(ValueError):
        evolve(L, np.full(NSTATE, np.nan), 1.0)
    with pytest.raises(ValueError):
        evolve(L, initial_state(), float("inf"))


def test_trace_conserved_in_closed_system():
    p = PhysicalParams(rabi=0.05, branching=1.0, raman_detuning=1e-3)
    L = build_liouvillian(p, 0.2)
    for t in np.geomspace(1e-2, 1e6, 30):
        x = evolve(L, initial_state(), t)
        assert abs(x[DD] + x[CC] + x[EE] - 1) <= 1e-10


def test_trace_monotone_in_open_system():
    p = PhysicalParams(rabi=0.05, branching=0.7, raman_detuning=1e-3)
    L = build_liouvillian(p, 0.2)
    t = np.linspace(0, 2e3, 400)
    x = np.array([evolve(L, initial_state(), s) for s in t])
    tr = x[:, DD] + x[:, CC] + x[:, EE]
    assert np.all(np.diff(tr) <= 1e-15)
    assert tr[-1] < 1


def test_positivity_and_population_bounds():
    rng = np.random.default_rng(5)
    for p, v, _ in _draws(200, seed=2):
        x0 = random_state(rng)
        lam_free = p.replace(feed=0.0)
        L = build_liouvillian(lam_free, v)
        for t in (0.1, 10.0, 1e3, 1e5):
            x = evolve(L, x0, t)
            assert np.linalg.eigvalsh(density_matrix(x)).min() >= -1e-9
            assert np.all(x[[DD, CC, EE]] >= -1e-9) and np.all(x[[DD, CC, EE]] <= 1 + 1e-9)
            assert x[DD] + x[CC] + x[EE] <= 1 + 1e-9


def test_spectral_stability():
    for p, v, _ in _draws(300, seed=4):
        ev = np.linalg.eigvals(build_liouvillian(p, v).matrix)
        assert ev.real.max() <= 1e-12


@settings(max_examples=60, deadline=None)
@given(rabi=st.floats(1e-4, 0.1), alpha=st.floats(0, 1), gamma=st.floats(0, 1e-2),
       raman=st.floats(-0.05, 0.05), v=st.floats(1e-3, 5.0))
def test_velocity_symmetry_at_resonance(rabi, alpha, gamma, raman, v):
    p = PhysicalParams(rabi=rabi, branching=alpha, ground_relax=gamma, raman_detuning=raman,
                       cell_length=300.0)
    a = path_integrated_coherence(p, v)
    b = path_integrated_coherence(p, -v)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(0, 1), raman=st.floats(-0.01, 0.01), v=st.floats(1e-3, 5.0))
def test_no_field_no_coherence(alpha, raman, v):
    p = PhysicalParams(rabi=0.0, branching=alpha, raman_detuning=raman)
    assert path_integrated_coherence(p, v) == 0.0


def test_path_integral_matches_trajectory_quadrature():
    # phi = 0.1
    p = PhysicalParams(rabi=0.01, branching=0.7, cell_length=1000.0)
    ref = trajectory_integral(p, 0.5)
    assert path_integrated_coherence(p, 0.5) == pytest.approx(ref, rel=1e-8)


def test_path_integral_refuses_slow_velocity():
    with pytest.raises(ValueError):
        path_integrated_coherence(PhysicalParams(), 1e-9)


def test_steady_state_without_field():
    p = PhysicalParams(rabi=0.0, ground_relax=1e-3)
    x = steady_state(build_liouvillian(p))
    np.testing.assert_allclose(x, initial_state(), atol=1e-14)


def test_steady_state_needs_relaxation():
    with pytest.raises(np.linalg.LinAlgError):
        steady_state(build_liouvillian(PhysicalParams(ground_relax=0.0)))


def test_steady_state_dark_accumulation_and_long_time_limits():
    p = PhysicalParams(rabi=0.01, branching=0.7, ground_relax=1e-6)
    L = build_liouvillian(p)
    x = steady_state(L)
    # gamma / gamma_p = 0.01: the ground population sits in D, and C is
    # refilled from D only at the relaxation rate
    assert x[DD] / (x[DD] + x[CC] + x[EE]) > 0.98
    assert x[CC] / x[DD] == pytest.approx(1e-6 / 1e-4, rel=0.05)
    np.testing.assert_allclose(evolve(L, initial_state(), 50 / 1e-6), x, atol=1e-8)
    pf = PhysicalParams(rabi=0.01, branching=0.7, ground_relax=1e-3)
    Lf = build_liouvillian(pf, 0.2)
    y = ode_oracle(pf, 0.2, initial_state(), 100 / 1e-3)
    np.testing.assert_allclose(y, steady_state(Lf), atol=1e-8)


def test_slow_eigenvalues_vanish_without_field():
    ev = slow_eigenvalues(PhysicalParams(rabi=0.0, ground_relax=0.0))
    np.testing.assert_array_equal(ev, 0)


def test_slow_eigenvalue_perturbative_form():
    rows, ev = [], []
    for rabi in np.geomspace(1e-3, 1e-2, 5):
        for r in np.linspace(0, 0.03, 6):
            raman = r * rabi ** 2
            ev.append(slow_eigenvalues(PhysicalParams(rabi=rabi, branching=0.7,
                                                      raman_detuning=raman)))
            rows.append([1.0, rabi ** 2, (raman / rabi) ** 2])
    A, ev = np.array(rows), np.array(ev)
    for i in range(3):
        y = ev[:, i].real
        c, *_ = np.linalg.lstsq(A, y, rcond=None)
        assert np.linalg.norm(A @ c - y) / np.linalg.norm(y) < 1e-3


def test_slow_eigenvalues_collapse_under_scaling():
    # same phi, gamma / gamma_p and delta / gamma_p
    a = PhysicalParams(rabi=0.01, cell_length=1000.0, ground_relax=1e-6, raman_detuning=1e-6)
    b = PhysicalParams(rabi=0.02, cell_length=250.0, ground_relax=4e-6, raman_detuning=4e-6)
    ea = slow_eigenvalues(a) * a.cell_length
    eb = slow_eigenvalues(b) * b.cell_length
    np.testing.assert_allclose(eb, ea, rtol=1e-3)


def test_slow_eigenvalues_warn_outside_regime():
    with pytest.warns(UserWarning):
        slow_eigenvalues(PhysicalParams(rabi=0.01, raman_detuning=0.05))


def test_phi_functions_stable():
    z = np.array([0, 1e-12, 0.49, 0.51, -3 + 2j, -800, -1e4j - 1])
    ref1 = np.array([1.0, 1 + 5e-13, np.expm1(0.49) / 0.49, np.expm1(0.51) / 0.51,
                     np.expm1(-3 + 2j) / (-3 + 2j), 1 / 800, np.expm1(-1e4j - 1) / (-1e4j - 1)])
    np.testing.assert_allclose(bloch.phi1(z), ref1, rtol=1e-13)
    zz = np.array([1e-3, 0.7, -900.0])
    ref2 = (np.expm1(zz) - zz) / zz ** 2
    ref2[0] = sum(1e-3 ** j / math.factorial(j + 2) for j in range(8))
    np.testing.assert_allclose(bloch.phi2(zz).real, ref2, rtol=1e-12)
