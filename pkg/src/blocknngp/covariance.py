"""Stationary isotropic covariance kernels."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

KINDS = ("exponential", "matern32")


@dataclass(frozen=True)
class CovarianceSpec:
    """Kernel family with marginal variance sigma2 and decay phi."""

    kind: str
    sigma2: float
    phi: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel '{self.kind}', expected one of {KINDS}")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if not self.phi > 0:
            raise ValueError("phi must be positive")


def cov(spec: CovarianceSpec, d):
    """Covariance at distance d (scalar or array)."""
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("distance must be non-negative")
    if spec.kind == "exponential":
        out = spec.sigma2 * np.exp(-spec.phi * d)
    else:
        out = spec.sigma2 * (1.0 + spec.phi * d) * np.exp(-spec.phi * d)
    return out if out.ndim else float(out)


def effective_range_to_phi(r: float) -> float:
    """Decay phi giving correlation ~0.05 at distance r (phi = 2/r)."""
    if not r > 0:
        raise ValueError("effective range must be positive")
    return 2.0 / r


def cov_matrix(spec: CovarianceSpec, rows, cols, locs) -> np.ndarray:
    """Cross-covariance C[rows, cols] between two index sets of locs."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if rows.size == 0 or cols.size == 0:
        return np.zeros((rows.size, cols.size))
    d = cdist(locs.coords[rows], locs.coords[cols])
    return cov(spec, d)
