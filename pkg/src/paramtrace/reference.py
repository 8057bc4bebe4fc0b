"""Exact smoothed densities from a full eigendecomposition, and the L1 metric."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chebyshev import GaussianKernel
from .estimators import DensityEstimate
from .operator import as_operator

__all__ = ["EigenSpectrum", "MAX_DENSE_DIM", "dense_spectrum", "exact_density", "l1_error"]

MAX_DENSE_DIM = 20000


@dataclass(frozen=True)
class EigenSpectrum:
    eigenvalues: np.ndarray

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=np.float64)
        if ev.ndim != 1:
            raise ValueError("eigenvalues must be a 1-D array")
        if np.any(np.diff(ev) < 0):
            raise ValueError("eigenvalues must be sorted ascending")
        object.__setattr__(self, "eigenvalues", ev)

    def __len__(self):
        return self.eigenvalues.size

    def transformed(self, interval) -> "EigenSpectrum":
        """Eigenvalues mapped by the affine transform of ``interval`` onto ``[-1, 1]``."""
        return EigenSpectrum(interval.to_unit(self.eigenvalues))


def dense_spectrum(A, max_dim: int = MAX_DENSE_DIM) -> EigenSpectrum:
    op = as_operator(A)
    if op.dim > max_dim:
        raise ValueError(f"matrix dimension {op.dim} exceeds the dense eigensolver limit {max_dim}")
    dense = op.to_dense()
    return EigenSpectrum(np.linalg.eigvalsh(0.5 * (dense + dense.T)))


def exact_density(spec: EigenSpectrum, sigma: float, grid) -> DensityEstimate:
    """``phi(t) = mean_j g_sigma(t - lambda_j)`` summed directly."""
    kernel = GaussianKernel(sigma)
    grid = np.asarray(grid, dtype=np.float64).ravel()
    ev = spec.eigenvalues
    values = np.empty(grid.size)
    # bound the temporary (n_t x n) array
    step = max(1, 2_000_000 // max(ev.size, 1))
    for start in range(0, grid.size, step):
        t = grid[start : start + step]
        values[start : start + step] = kernel(t[:, None] - ev[None, :]).mean(axis=1)
    return DensityEstimate(grid=grid, values=values, config={"method": "exact", "sigma": sigma}, matvec_count=0)


def l1_error(est: DensityEstimate, ref: DensityEstimate) -> float:
    """Composite midpoint rule on the shared grid, weight ``(t_max - t_min) / n_t`` per node.

    The nodes include both ends of the interval, so this is not a strict
    midpoint rule; the weights are kept equal so the metric is the
    customary one for uniformly sampled density curves.
    """
    g1 = np.asarray(est.grid, dtype=np.float64)
    g2 = np.asarray(ref.grid, dtype=np.float64)
    if g1.shape != g2.shape or not np.allclose(g1, g2, rtol=0, atol=1e-12 * max(1.0, np.abs(g1).max(initial=0))):
        raise ValueError("density estimates are given on different grids")
    if g1.size < 2:
        raise ValueError("need at least two grid points")
    steps = np.diff(g1)
    if not np.allclose(steps, steps[0], rtol=1e-8, atol=64 * np.finfo(float).eps * np.abs(g1).max()):
        raise ValueError("grid must be uniformly spaced")
    h = (g1[-1] - g1[0]) / g1.size
    return float(h * np.abs(np.asarray(est.values) - np.asarray(ref.values)).sum())
