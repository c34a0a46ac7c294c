"""Velocity-averaged absorption signal of the thin cell.

Atoms leave either wall with the longitudinal velocity density ``W(v_z)`` and
cross the cell in ``kL / |v_z|``. The absorbed intensity is

    Delta I / kappa = Omega * int dv_z W(v_z) S(v_z),

with ``S`` the wall-to-wall integral of Im rho_eC from :mod:`thincell.bloch`.
As in the original equations, this is negative when light is absorbed.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bloch
from .bloch import IM_EC, DARK_COHERENCES, PhysicalParams, derived_params
from .spectrum import Spectrum, default_grid_scale, delta_grid

CHUNK = 32  # detuning points per work unit; fixed so results never depend on workers


class QuadratureError(RuntimeError):
    """Velocity quadrature failed the refinement gate."""

    def __init__(self, message, estimate=None, deviation=None):
        super().__init__(message)
        self.estimate = estimate
        self.deviation = deviation


@dataclass(frozen=True)
class VelocityDistribution:
    """Even longitudinal velocity density.

    ``kind`` is one of ``"maxwell_boltzmann"``, ``"truncated"`` or
    ``"tabulated"``. ``width`` is the 1/e half-width u (so k u is the Doppler
    width); ``None`` means "take it from PhysicalParams.doppler_width". The
    truncated density is the Maxwell-Boltzmann one with ``|v| < cutoff``
    removed and is deliberately not renormalised. A tabulated density is
    given over ``|v|`` and interpolated linearly, zero outside the table.
    """

    kind: str = "maxwell_boltzmann"
    width: float | None = None
    cutoff: float = 0.0
    table: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("maxwell_boltzmann", "truncated", "tabulated"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.width is not None and self.width <= 0:
            raise ValueError("width must be positive")
        if self.cutoff < 0:
            raise ValueError("cutoff must be non-negative")
        if self.kind == "tabulated":
            if self.table is None:
                raise ValueError("tabulated distribution needs a table")
            v, w = (np.asarray(a, float) for a in self.table)
            if v.ndim != 1 or v.shape != w.shape or v.size < 2:
                raise ValueError("table must be two 1-D arrays of equal length >= 2")
            if np.any(np.diff(v) <= 0) or v[0] < 0:
                raise ValueError("table velocities must be |v| values, strictly increasing")
            if np.any(w < 0):
                raise ValueError("tabulated density must be non-negative")
            object.__setattr__(self, "table", (v, w))

    @classmethod
    def maxwell_boltzmann(cls, width=None):
        return cls("maxwell_boltzmann", width)

    @classmethod
    def truncated(cls, cutoff, width=None):
        return cls("truncated", width, cutoff)

    @classmethod
    def tabulated(cls, v, w):
        return cls("tabulated", None, 0.0, (v, w))

    def resolve(self, p: PhysicalParams) -> "VelocityDistribution":
        if self.width is None and self.kind != "tabulated":
            return VelocityDistribution(self.kind, p.doppler_width, self.cutoff, self.table)
        return self

    @property
    def lower(self) -> float:
        """Smallest |v| carrying density."""
        if self.kind == "truncated":
            return self.cutoff
        if self.kind == "tabulated":
            return float(self.table[0][0])
        return 0.0

    @property
    def upper(self) -> float:
        if self.kind == "tabulated":
            return float(self.table[0][-1])
        return 4.0 * self.width

    def density(self, v):
        a = np.abs(np.asarray(v, dtype=float))
        if self.kind == "tabulated":
            tv, tw = self.table
            return np.interp(a, tv, tw, left=0.0, right=0.0)
        u = self.width
        w = np.exp(-(a / u) ** 2) / (u * math.sqrt(math.pi))
        if self.kind == "truncated":
            w = np.where(a < self.cutoff, 0.0, w)
        return w

    def describe(self) -> dict:
        d = {"kind": self.kind, "width": self.width, "cutoff": self.cutoff}
        if self.table is not None:
            d["table_v"] = self.table[0].tolist()
            d["table_w"] = self.table[1].tolist()
        return d


@dataclass(frozen=True)
class QuadratureConfig:
    """Velocity mesh: Gauss-Legendre panels graded geometrically in |v|.

    Each panel spans ``panel_order / nodes_per_decade`` decades, so the node
    density is ``nodes_per_decade`` per decade everywhere. ``v_max=None``
    means four 1/e widths of the distribution.
    """

    v_min: float = 1e-6
    v_max: float | None = None
    nodes_per_decade: int = 16
    panel_order: int = 8

    def __post_init__(self):
        if self.v_min <= 0 or (self.v_max is not None and self.v_max <= self.v_min):
            raise ValueError("need 0 < v_min < v_max")
        if self.nodes_per_decade < 1 or self.panel_order < 1:
            raise ValueError("nodes_per_decade and panel_order must be positive")

    def refined(self) -> "QuadratureConfig":
        return QuadratureConfig(self.v_min, self.v_max, 2 * self.nodes_per_decade,
                                self.panel_order)


def velocity_mesh(lo, hi, q: QuadratureConfig, breaks=()):
    """Nodes and weights for ``int_lo^hi f(v) dv`` on log-graded GL panels."""
    if not 0 < lo < hi:
        raise ValueError(f"bad integration range [{lo}, {hi}]")
    span = q.panel_order / q.nodes_per_decade
    n = max(1, math.ceil(math.log10(hi / lo) / span - 1e-9))
    edges = np.log(np.geomspace(lo, hi, n + 1))
    extra = [math.log(b) for b in breaks if lo < b < hi]
    edges = np.unique(np.concatenate([edges, extra]))
    x, w = np.polynomial.legendre.leggauss(q.panel_order)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    u = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    v = np.exp(u)
    weights = (half[:, None] * w[None, :]).ravel() * v
    return v, weights


@dataclass
class _Plan:
    """Everything needed to evaluate the velocity integral at any detuning."""

    speeds: np.ndarray
    weights: np.ndarray  # quadrature weight times density
    signs: tuple
    sliver: float  # weight of the analytic [0, lo] piece, per sign
    lo: float


def _plan(p, dist, q, upper=None, breaks=()):
    hi = dist.upper if q.v_max is None else q.v_max
    if upper is not None:
        hi = min(hi, upper)
    lo = max(q.v_min, dist.lower)
    if hi <= lo:
        return _Plan(np.zeros(0), np.zeros(0), (1,), 0.0, lo)
    v, w = velocity_mesh(lo, hi, q, breaks=tuple(breaks) + (0.1, 1.0))
    sliver = 0.0
    if dist.lower == 0.0:
        sliver = lo * float(dist.density(0.0))
    signs = (1,) if p.laser_detuning == 0 else (1, -1)
    return _Plan(v, w * dist.density(v), signs, sliver, lo)


def _node_integrals(p, deltas, speeds, sign, dark):
    """S(sign * v, delta) for every detuning (rows) and speed (columns)."""
    deltas = np.asarray(deltas, float)
    if speeds.size == 0:
        return np.zeros((deltas.size, 0))
    M = bloch.generator(p.rabi, p.branching, p.ground_relax, deltas[:, None],
                        p.laser_detuning - sign * speeds[None, :], dark)
    lam = bloch.feed_vector(p)
    T = p.cell_length / speeds
    return speeds[None, :] * bloch.path_integral(M, lam, bloch.initial_state(), T[None, :])


def _limit_values(p, deltas, plan, dark):
    """v -> 0 limit of S: kL times the stationary Im rho_eC when it exists,
    otherwise the time average over the longest resolved flight."""
    deltas = np.asarray(deltas, float)
    if p.ground_relax > 0:
        keep = [i for i in range(bloch.NSTATE) if dark or i not in DARK_COHERENCES]
        M = bloch.generator(p.rabi, p.branching, p.ground_relax, deltas, p.laser_detuning, dark)
        M = M[:, keep][:, :, keep]
        lam = bloch.feed_vector(p)[keep]
        x = np.linalg.solve(M, np.broadcast_to(-lam, (deltas.size, len(keep)))[..., None])[..., 0]
        return p.cell_length * x[:, keep.index(IM_EC)]
    return _node_integrals(p, deltas, np.array([plan.lo]), 1, dark)[:, 0]


def _reduce(p, plan, rows, limits):
    """Omega * sum of all quadrature terms, one compensated sum per row."""
    out = np.empty(rows[0].shape[0])
    for i in range(out.size):
        terms = []
        for S in rows:
            terms.extend((plan.weights * S[i]).tolist())
        if plan.sliver:
            terms.append(2.0 * plan.sliver * limits[i])
        out[i] = p.rabi * math.fsum(terms)
    return out


def _chunk_signal(args):
    p, deltas, plan, dark = args
    rows = [_node_integrals(p, deltas, plan.speeds, s, dark) for s in plan.signs]
    if len(plan.signs) == 1:
        rows = [2.0 * rows[0]]
    limits = _limit_values(p, deltas, plan, dark) if plan.sliver else None
    return _reduce(p, plan, rows, limits)


def _signal_on_grid(p, deltas, plan, dark=True, workers=1):
    deltas = np.asarray(deltas, float)
    if not dark:
        # background does not depend on the Raman detuning
        val = _chunk_signal((p, np.zeros(1), plan, False))[0]
        return np.full(deltas.size, val)
    chunks = [(p, deltas[i:i + CHUNK], plan, True) for i in range(0, deltas.size, CHUNK)]
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk_signal, chunks))
    else:
        parts = [_chunk_signal(c) for c in chunks]
    return np.concatenate(parts) if parts else np.zeros(0)


def _defaults(p, dist, q):
    dist = (dist or VelocityDistribution()).resolve(p)
    return dist, q or QuadratureConfig()


def absorbed_intensity(p: PhysicalParams, dist=None, q=None) -> float:
    """Delta I / kappa at the Raman detuning stored in ``p``."""
    dist, q = _defaults(p, dist, q)
    return float(_signal_on_grid(p, [p.raman_detuning], _plan(p, dist, q))[0])


def background_signal(p: PhysicalParams, dist=None, q=None) -> float:
    """Linear absorption plus single-beam pumping, with D as a pure reservoir."""
    dist, q = _defaults(p, dist, q)
    return float(_signal_on_grid(p, [0.0], _plan(p, dist, q), dark=False)[0])


def _meta(p, dist, q, **extra):
    meta = {"params": asdict(p), "derived": asdict(derived_params(p)),
            "distribution": dist.describe(), "quadrature": asdict(q)}
    meta.update(extra)
    return meta


def _resolve_grid(p, grid):
    if grid is None:
        return delta_grid(default_grid_scale(p.rabi ** 2, p.ground_relax))
    grid = np.asarray(grid, float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("detuning grid must be a non-empty 1-D array")
    return grid


def _dark_values(p, dist, q, grid, upper=None, workers=1):
    plan = _plan(p, dist, q, upper=upper, breaks=() if upper is None else (upper,))
    full = _signal_on_grid(p, grid, plan, True, workers)
    bg = _signal_on_grid(p, [0.0], plan, False)[0]
    return full - bg, bg


def dark_resonance_signal(p: PhysicalParams, dist=None, q=None, delta_grid=None,
                          workers=1, check_convergence=False, tol=1e-3) -> Spectrum:
    """Absorbed intensity minus the coherence-free background on a Raman grid.

    With ``check_convergence`` the spectrum is recomputed with twice the node
    density and with half ``v_min``; a relative change (to the spectrum
    amplitude) above ``tol`` raises :class:`QuadratureError`.
    """
    dist, q = _defaults(p, dist, q)
    grid = _resolve_grid(p, delta_grid)
    values, bg = _dark_values(p, dist, q, grid, workers=workers)
    meta = _meta(p, dist, q, background=bg)
    if check_convergence:
        dev = _convergence(p, dist, q, grid, values, workers)
        meta["convergence"] = dev
        if max(dev.values()) > tol:
            raise QuadratureError(f"velocity quadrature not converged: {dev}",
                                  estimate=Spectrum(grid, values, "direct", meta),
                                  deviation=dev)
    return Spectrum(grid, values, "direct", meta)


def _convergence(p, dist, q, grid, values, workers):
    scale = max(np.max(np.abs(values)), np.finfo(float).tiny)
    dev = {}
    for name, q2 in (("nodes_doubled", q.refined()),
                     ("v_min_halved", QuadratureConfig(q.v_min / 2, q.v_max,
                                                       q.nodes_per_decade, q.panel_order))):
        other, _ = _dark_values(p, dist, q2, grid, workers=workers)
        dev[name] = float(np.max(np.abs(other - values)) / scale)
    return dev


def partial_velocity_signal(p: PhysicalParams, dist=None, q=None, delta_grid=None,
                            cutoff=1.0, workers=1) -> Spectrum:
    """Dark-resonance spectrum from atoms with ``|v_z| < cutoff`` only.

    The background is restricted to the same velocity range.
    """
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    dist, q = _defaults(p, dist, q)
    grid = _resolve_grid(p, delta_grid)
    hi = dist.upper if q.v_max is None else q.v_max
    upper = None if cutoff >= hi else cutoff
    values, bg = _dark_values(p, dist, q, grid, upper=upper, workers=workers)
    return Spectrum(grid, values, "direct", _meta(p, dist, q, background=bg, cutoff=cutoff))


def velocity_selection_profile(p: PhysicalParams, cutoffs, dist=None, q=None,
                               delta_grid=None):
    """Partial dark-resonance spectra for many cutoffs from a single pass.

    Returns ``(grid, values)`` with ``values[i]`` the spectrum restricted to
    ``|v_z| < cutoffs[i]``. Panels are split at every cutoff so each partial
    integral is exact to quadrature accuracy.
    """
    dist, q = _defaults(p, dist, q)
    grid = _resolve_grid(p, delta_grid)
    cutoffs = np.asarray(cutoffs, float)
    plan = _plan(p, dist, q, breaks=tuple(cutoffs))
    rows = [_node_integrals(p, grid, plan.speeds, s, True) for s in plan.signs]
    bg_rows = [_node_integrals(p, [0.0], plan.speeds, s, False) for s in plan.signs]
    if len(plan.signs) == 1:
        rows, bg_rows = [2.0 * rows[0]], [2.0 * bg_rows[0]]
    lim = _limit_values(p, grid, plan, True) if plan.sliver else np.zeros(grid.size)
    lim_bg = _limit_values(p, [0.0], plan, False) if plan.sliver else np.zeros(1)
    out = np.empty((cutoffs.size, grid.size))
    for k, c in enumerate(cutoffs):
        sel = plan.speeds < c
        sub = _Plan(plan.speeds[sel], plan.weights[sel], plan.signs,
                    plan.sliver if c > plan.lo else 0.0, plan.lo)
        full = _reduce(p, sub, [r[:, sel] for r in rows], lim)
        bg = _reduce(p, sub, [r[:, sel] for r in bg_rows], lim_bg)[0]
        out[k] = full - bg
    return grid, out


def velocity_contributions(p: PhysicalParams, velocities, delta_grid=None) -> np.ndarray:
    """Per-trajectory dark-resonance contributions ``S(v, delta) - S_bg(v)``.

    Rows follow ``velocities``; no velocity weighting is applied.
    """
    grid = _resolve_grid(p, delta_grid)
    out = []
    for v in np.asarray(velocities, float):
        s = 1 if v >= 0 else -1
        speed = np.array([abs(v)])
        full = _node_integrals(p, grid, speed, s, True)[:, 0]
        bg = _node_integrals(p, [0.0], speed, s, False)[0, 0]
        out.append(full - bg)
    return np.array(out)
