from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Spectrum:
    """Signal sampled on a Raman-detuning grid (Gamma units).

    ``kind`` is ``"direct"`` or ``"derivative"``; ``meta`` carries the full
    parameter record of the run that produced it.
    """

    delta: np.ndarray
    values: np.ndarray
    kind: str = "direct"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.delta.ndim != 1 or self.delta.shape != self.values.shape:
            raise ValueError("delta and values must be 1-D arrays of equal length")
        if self.delta.size and np.any(np.diff(self.delta) <= 0):
            raise ValueError("delta grid must be strictly increasing")
        if self.kind not in ("direct", "derivative"):
            raise ValueError(f"unknown spectrum kind {self.kind!r}")

    @property
    def pump_rate(self) -> float:
        return self.meta.get("derived", {}).get("pump_rate", float("nan"))

    @property
    def delta_over_gp(self) -> np.ndarray:
        return self.delta / self.pump_rate

    @property
    def amplitude(self) -> float:
        return float(np.max(self.values) - np.min(self.values))

    def __len__(self):
        return self.delta.size


def delta_grid(scale: float, lo: float = 1e-4, hi: float = 1e2, per_decade: int = 40) -> np.ndarray:
    """Symmetric Raman-detuning grid: geometric over ``scale * [lo, hi]`` on
    both sides plus a short linear patch through zero.

    The geometric part keeps the line-centre cusp resolved at every scale.
    """
    if scale <= 0 or not 0 < lo < hi or per_decade < 1:
        raise ValueError("need scale > 0, 0 < lo < hi and per_decade >= 1")
    n = int(round(np.log10(hi / lo) * per_decade)) + 1
    pos = np.geomspace(lo, hi, n) * scale
    patch = np.array([0.5 * lo * scale])
    half = np.concatenate([patch, pos])
    return np.concatenate([-half[::-1], [0.0], half])


def default_grid_scale(pump_rate: float, ground_relax: float = 0.0) -> float:
    scale = pump_rate + ground_relax
    if scale <= 0:
        raise ValueError("grid scale needs rabi > 0 or ground_relax > 0")
    return scale
