"""Bloch equations of the symmetric Lambda system and their closed-form solutions.

Units are fixed throughout the package: the optical decay rate and the wave
number are both 1, so rates are in units of Gamma, velocities in Gamma/k,
times in 1/Gamma and cell lengths are given as kL.

The state is the real 9-vector

    (rho_DD, rho_CC, rho_ee, Re rho_eD, Im rho_eD, Re rho_eC, Im rho_eC,
     Re rho_DC, Im rho_DC)

evolving as ``x' = M x + feed``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from dataclasses import replace as dc_replace

import numpy as np
from scipy.linalg import expm

DD, CC, EE, RE_ED, IM_ED, RE_EC, IM_EC, RE_DC, IM_DC = range(9)
NSTATE = 9

#: components that carry a coherence involving the dark state
DARK_COHERENCES = (RE_ED, IM_ED, RE_DC, IM_DC)

#: field coupling entering the equations per unit Rabi frequency; with 1/2 the
#: coupled state is pumped at exactly rabi**2 / Gamma
COUPLING_PER_RABI = 0.5

COND_LIMIT = 1e8
EXP_FLUSH = -700.0


class IllConditionedWarning(RuntimeWarning):
    """Eigenbasis too ill-conditioned; the augmented-expm route was used."""


@dataclass(frozen=True)
class PhysicalParams:
    """Model parameters in Gamma = k = 1 units.

    ``feed`` defaults to ``ground_relax / 2`` so that the density matrix stays
    normalised to one in the absence of optical losses.
    """

    rabi: float = 0.01
    branching: float = 0.7
    ground_relax: float = 0.0
    feed: float | None = None
    raman_detuning: float = 0.0
    laser_detuning: float = 0.0
    cell_length: float = 1000.0
    doppler_width: float = 50.0

    def __post_init__(self):
        if self.feed is None:
            object.__setattr__(self, "feed", 0.5 * self.ground_relax)
        for name in ("rabi", "branching", "ground_relax", "feed", "raman_detuning",
                     "laser_detuning", "cell_length", "doppler_width"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.rabi < 0 or self.ground_relax < 0 or self.feed < 0:
            raise ValueError("rabi, ground_relax and feed must be non-negative")
        if not 0.0 <= self.branching <= 1.0:
            raise ValueError("branching must lie in [0, 1]")
        if self.cell_length <= 0 or self.doppler_width <= 0:
            raise ValueError("cell_length and doppler_width must be positive")
        if self.rabi > 0.1:
            warnings.warn(f"rabi={self.rabi} is not small compared to Gamma; "
                          "optical saturation is outside the intended regime",
                          stacklevel=3)

    def replace(self, **changes) -> "PhysicalParams":
        # keep an explicit feed only if the caller gave one or it was not the default
        if "ground_relax" in changes and "feed" not in changes \
                and self.feed == 0.5 * self.ground_relax:
            changes["feed"] = None
        return dc_replace(self, **changes)

    @property
    def derived(self) -> "DerivedParams":
        return derived_params(self)


@dataclass(frozen=True)
class DerivedParams:
    pump_rate: float
    phi: float
    char_length: float
    sat_rabi_sq: float


def derived_params(p: PhysicalParams) -> DerivedParams:
    """Pumping rate, the dimensionless length phi, L_o and Omega_o^2."""
    gp = p.rabi ** 2
    char_length = math.inf if gp == 0 else 1.0 / gp
    return DerivedParams(pump_rate=gp, phi=gp * p.cell_length,
                         char_length=char_length, sat_rabi_sq=1.0 / p.cell_length)


def initial_state() -> np.ndarray:
    """Unpolarised ground state with no coherences, as atoms leave a wall."""
    x = np.zeros(NSTATE)
    x[DD] = x[CC] = 0.5
    return x


def density_matrix(x) -> np.ndarray:
    """Rebuild the Hermitian 3x3 matrix in the (D, C, e) basis."""
    x = np.asarray(x, dtype=float)
    rho = np.zeros(x.shape[:-1] + (3, 3), dtype=complex)
    rho[..., 0, 0] = x[..., DD]
    rho[..., 1, 1] = x[..., CC]
    rho[..., 2, 2] = x[..., EE]
    rho[..., 2, 0] = x[..., RE_ED] + 1j * x[..., IM_ED]
    rho[..., 2, 1] = x[..., RE_EC] + 1j * x[..., IM_EC]
    rho[..., 0, 1] = x[..., RE_DC] + 1j * x[..., IM_DC]
    rho[..., 0, 2] = np.conj(rho[..., 2, 0])
    rho[..., 1, 2] = np.conj(rho[..., 2, 1])
    rho[..., 1, 0] = np.conj(rho[..., 0, 1])
    return rho


def generator(rabi, branching, ground_relax, raman, optical, dark_coherences=True):
    """Stack of 9x9 generators, broadcasting over ``raman`` and ``optical``.

    ``optical`` is the optical detuning laser_detuning - v_z. The e-C
    coupling is ``COUPLING_PER_RABI * rabi``. With
    ``dark_coherences=False`` every row and column of rho_eD and rho_DC is
    zeroed, which leaves D as a pure population reservoir.
    """
    raman, optical = np.broadcast_arrays(np.asarray(raman, float), np.asarray(optical, float))
    M = np.zeros(raman.shape + (NSTATE, NSTATE))
    W = COUPLING_PER_RABI * float(rabi)
    a, g = float(branching), float(ground_relax)
    h = 0.5 + g  # optical coherence damping
    d = raman

    M[..., DD, DD] = -g
    M[..., DD, EE] = 0.5 * a
    M[..., DD, IM_DC] = d

    M[..., CC, CC] = -g
    M[..., CC, EE] = 0.5 * a
    M[..., CC, IM_DC] = -d
    M[..., CC, IM_EC] = 2 * W

    M[..., EE, EE] = -(1.0 + g)
    M[..., EE, IM_EC] = -2 * W

    M[..., RE_ED, RE_ED] = -h
    M[..., RE_ED, IM_ED] = -optical
    M[..., RE_ED, IM_EC] = 0.5 * d
    M[..., RE_ED, IM_DC] = -W

    M[..., IM_ED, IM_ED] = -h
    M[..., IM_ED, RE_ED] = optical
    M[..., IM_ED, RE_EC] = -0.5 * d
    M[..., IM_ED, RE_DC] = -W

    M[..., RE_EC, RE_EC] = -h
    M[..., RE_EC, IM_EC] = -optical
    M[..., RE_EC, IM_ED] = 0.5 * d

    M[..., IM_EC, IM_EC] = -h
    M[..., IM_EC, RE_EC] = optical
    M[..., IM_EC, RE_ED] = -0.5 * d
    M[..., IM_EC, CC] = -W
    M[..., IM_EC, EE] = W

    M[..., RE_DC, RE_DC] = -g
    M[..., RE_DC, IM_ED] = W

    M[..., IM_DC, IM_DC] = -g
    M[..., IM_DC, CC] = 0.5 * d
    M[..., IM_DC, DD] = -0.5 * d
    M[..., IM_DC, RE_ED] = W

    if not dark_coherences:
        idx = list(DARK_COHERENCES)
        M[..., idx, :] = 0.0
        M[..., :, idx] = 0.0
    return M


def feed_vector(p: PhysicalParams) -> np.ndarray:
    lam = np.zeros(NSTATE)
    lam[DD] = lam[CC] = p.feed
    return lam


@dataclass(frozen=True)
class Liouvillian:
    matrix: np.ndarray
    feed_vec: np.ndarray
    velocity: float = 0.0
    params: PhysicalParams | None = field(default=None, compare=False)


def build_liouvillian(p: PhysicalParams, v_z: float = 0.0,
                      dark_coherences: bool = True) -> Liouvillian:
    if not math.isfinite(v_z):
        raise ValueError("v_z must be finite")
    M = generator(p.rabi, p.branching, p.ground_relax, p.raman_detuning,
                  p.laser_detuning - v_z, dark_coherences)
    return Liouvillian(M, feed_vector(p), float(v_z), p)


# ---------------------------------------------------------------------------
# phi-functions


def _series(z, k, nterms=24):
    # phi_k(z) = sum_j z^j / (j + k)!
    out = np.full_like(z, 1.0 / math.factorial(k + nterms - 1))
    for j in range(nterms - 2, -1, -1):
        out = out * z + 1.0 / math.factorial(j + k)
    return out


def phi1(z):
    """(e^z - 1) / z for complex arrays, stable near zero and for Re z << 0."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < 0.5
    flush = (z.real < EXP_FLUSH) & ~small
    rest = ~small & ~flush
    out[small] = _series(z[small], 1)
    out[flush] = -1.0 / z[flush]
    out[rest] = np.expm1(z[rest]) / z[rest]
    return out


def phi2(z):
    """(e^z - 1 - z) / z^2, same stability guarantees as :func:`phi1`."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < 0.5
    flush = (z.real < EXP_FLUSH) & ~small
    rest = ~small & ~flush
    out[small] = _series(z[small], 2)
    zf = z[flush]
    out[flush] = -(1.0 + zf) / zf ** 2
    zr = z[rest]
    out[rest] = (np.expm1(zr) - zr) / zr ** 2
    return out


def _exp(z):
    z = np.asarray(z, dtype=complex)
    out = np.zeros_like(z)
    keep = z.real >= EXP_FLUSH
    out[keep] = np.exp(z[keep])
    return out


# ---------------------------------------------------------------------------
# batched propagation


def _eigen(M):
    """Batched eigendecomposition, inverse eigenbasis and a mask of bad bases.

    The Frobenius-norm product bounds the 2-norm condition number from above.
    """
    evals, V = np.linalg.eig(M)
    Vinv = np.empty_like(V)
    bad = np.zeros(V.shape[:-2], dtype=bool)
    with np.errstate(all="ignore"):
        try:
            Vinv[...] = np.linalg.inv(V)
        except np.linalg.LinAlgError:
            # singular bases are rare; redo one by one to find them
            for idx in np.ndindex(*V.shape[:-2]):
                try:
                    Vinv[idx] = np.linalg.inv(V[idx])
                except np.linalg.LinAlgError:
                    Vinv[idx] = 0.0
                    bad[idx] = True
        cond = np.linalg.norm(V, axis=(-2, -1)) * np.linalg.norm(Vinv, axis=(-2, -1))
    bad |= ~np.isfinite(cond) | (cond > COND_LIMIT)
    return evals, V, Vinv, bad


def _apply(Vinv, rhs):
    return np.einsum("...ij,...j->...i", Vinv, rhs)


def _augmented(M, feed, tail_rows):
    n = M.shape[-1]
    k = 1 + tail_rows
    A = np.zeros(M.shape[:-2] + (n + k, n + k))
    A[..., :n, :n] = M
    A[..., :n, n] = feed
    return A


def propagate(M, feed, x0, t):
    """Transient solution ``x(t)`` for a stack of generators.

    ``M`` has shape (..., 9, 9); ``feed``, ``x0`` broadcast to (..., 9) and
    ``t`` to the batch shape. The eigenbasis route is used where it is well
    conditioned and the augmented expm route elsewhere.
    """
    M = np.asarray(M, float)
    batch = M.shape[:-2]
    feed = np.broadcast_to(np.asarray(feed, float), batch + (NSTATE,))
    x0 = np.broadcast_to(np.asarray(x0, float), batch + (NSTATE,))
    t = np.broadcast_to(np.asarray(t, float), batch)
    if not (np.all(np.isfinite(M)) and np.all(np.isfinite(x0)) and np.all(np.isfinite(t))):
        raise ValueError("non-finite input to propagate")
    if np.any(t < 0):
        raise ValueError("t must be non-negative")

    evals, V, Vinv, bad = _eigen(M)
    a = _apply(Vinv, x0)
    b = _apply(Vinv, feed)
    z = evals * t[..., None]
    coef = _exp(z) * a + t[..., None] * phi1(z) * b
    out = np.einsum("...ij,...j->...i", V, coef).real

    if np.any(bad):
        warnings.warn(f"{int(np.sum(bad))} ill-conditioned eigenbases; using expm",
                      IllConditionedWarning, stacklevel=2)
        A = _augmented(M[bad], feed[bad], 0)
        E = expm(A * t[bad][:, None, None])
        y0 = np.concatenate([x0[bad], np.ones((A.shape[0], 1))], axis=1)
        out[bad] = np.einsum("bij,bj->bi", E, y0)[:, :NSTATE]
    return out


def path_integral(M, feed, x0, T, row=IM_EC, warn=False):
    """``int_0^T x_row(t) dt`` for a stack of generators.

    Closed form ``T phi1(DT) a + T^2 phi2(DT) b`` in the eigenbasis; the
    augmented generator (state, constant 1, running integral) is
    exponentiated instead where the eigenbasis is ill-conditioned.
    """
    M = np.asarray(M, float)
    batch = M.shape[:-2]
    feed = np.broadcast_to(np.asarray(feed, float), batch + (NSTATE,))
    x0 = np.broadcast_to(np.asarray(x0, float), batch + (NSTATE,))
    T = np.broadcast_to(np.asarray(T, float), batch)
    if not (np.all(np.isfinite(M)) and np.all(np.isfinite(T))):
        raise ValueError("non-finite input to path_integral")

    evals, V, Vinv, bad = _eigen(M)
    a = _apply(Vinv, x0)
    z = evals * T[..., None]
    coef = T[..., None] * phi1(z) * a
    if np.any(feed):
        b = _apply(Vinv, feed)
        coef = coef + (T ** 2)[..., None] * phi2(z) * b
    out = np.einsum("...j,...j->...", V[..., row, :], coef).real

    if np.any(bad):
        if warn:
            warnings.warn(f"{int(np.sum(bad))} ill-conditioned eigenbases; using expm",
                          IllConditionedWarning, stacklevel=2)
        Mb = M[bad]
        A = _augmented(Mb, feed[bad], 1)
        A[:, NSTATE + 1, :NSTATE] = np.eye(NSTATE)[row]
        E = expm(A * T[bad][:, None, None])
        y0 = np.concatenate([x0[bad], np.ones((Mb.shape[0], 1)),
                             np.zeros((Mb.shape[0], 1))], axis=1)
        out[bad] = np.einsum("bj,bj->b", E[:, NSTATE + 1, :], y0)
    return out


# ---------------------------------------------------------------------------
# single-trajectory operations


def evolve(L: Liouvillian, x0, t: float) -> np.ndarray:
    """State after time ``t`` (1/Gamma) starting from ``x0``."""
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    with warnings.catch_warnings():
        warnings.simplefilter("always", IllConditionedWarning)
        return propagate(L.matrix, L.feed_vec, np.asarray(x0, float), t)


def path_integrated_coherence(p: PhysicalParams, v_z: float, x0=None,
                              v_min: float = 1e-6, dark_coherences: bool = True) -> float:
    """Integral of Im rho_eC over the flight from one wall to the other.

    Returns ``int_0^kL Im rho_eC d(kz) = |v_z| int_0^{kL/|v_z|} Im rho_eC dt``;
    the optical detuning carries the sign of ``v_z``.
    """
    if not abs(v_z) >= v_min:
        raise ValueError(f"|v_z|={abs(v_z)!r} is below v_min={v_min}; use the v->0 limit")
    if x0 is None:
        x0 = initial_state()
    L = build_liouvillian(p, v_z, dark_coherences)
    speed = abs(v_z)
    return float(speed * path_integral(L.matrix, L.feed_vec, x0, p.cell_length / speed))


def steady_state(L: Liouvillian) -> np.ndarray:
    """Solution of ``M x + feed = 0``; needs ground_relax > 0."""
    if L.params is not None and L.params.ground_relax == 0:
        raise np.linalg.LinAlgError("generator is singular for ground_relax = 0")
    x = np.linalg.solve(L.matrix, -L.feed_vec)
    res = np.max(np.abs(L.matrix @ x + L.feed_vec))
    if not np.all(np.isfinite(x)) or res > 1e-12 * max(1.0, np.max(np.abs(x))):
        raise np.linalg.LinAlgError(f"steady state residual {res:.3g}")
    return x


def slow_eigenvalues(p: PhysicalParams, v_z: float = 0.0, count: int = 3) -> np.ndarray:
    """The ``count`` eigenvalues of smallest |Re|, i.e. the Raman manifold."""
    if p.rabi > 0.1 or abs(p.raman_detuning) > p.rabi:
        warnings.warn("perturbative regime needs rabi << 1 and |raman| << rabi",
                      stacklevel=2)
    ev = np.linalg.eigvals(build_liouvillian(p, v_z).matrix)
    order = np.lexsort((ev.imag, np.abs(ev.real)))
    return ev[order][:count]
