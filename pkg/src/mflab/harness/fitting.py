"""Power-law fits on log-log data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    prefactor: float
    r2: float


def fit_power_law(points) -> PowerLawFit:
    """Least squares for ``y = C n^alpha`` on ``(log n, log y)``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ValueError("need at least 3 (n, y) points")
    n, y = pts[:, 0], pts[:, 1]
    if np.any(y <= 0) or np.any(n <= 0):
        raise ValueError("power-law fits need positive n and y")
    lx, ly = np.log(n), np.log(y)
    slope, icpt = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + icpt)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 if ss_tot == 0 else 1.0 - np.sum(resid**2) / ss_tot
    return PowerLawFit(float(slope), float(np.exp(icpt)), float(r2))
