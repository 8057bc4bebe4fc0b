"""Chebyshev interpolation of the Gaussian smoothing kernel.

Coefficients are always expressed in the basis ``T_0, ..., T_m`` on
``[-1, 1]``. The type-I DCT pair used throughout is pinned by the synthesis
formula::

    values[i] = sum_l coeffs[l] * cos(pi * i * l / m),   i = 0..m

so that ``values[i]`` is the polynomial evaluated at the Chebyshev node
``s_i = cos(pi * i / m)``. All transforms operate along the last axis, which
lets whole coefficient tables be processed in one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.fft

__all__ = [
    "GaussianKernel",
    "CoefficientTable",
    "ErrorBound",
    "chebyshev_nodes",
    "dct_i",
    "idct_i",
    "chebyshev_eval",
    "interpolate_kernel",
    "square_coeffs",
    "kernel_coeffs",
    "nonneg_kernel_coeffs",
    "error_bound_standard",
    "error_bound_nonneg",
    "build_tables",
]


@dataclass(frozen=True)
class GaussianKernel:
    """Gaussian smoothing kernel ``g(s) = exp(-s^2 / (2 sigma^2)) / (sigma sqrt(2 pi))``."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def __call__(self, s):
        s = np.asarray(s, dtype=np.float64)
        return np.exp(-(s**2) / (2.0 * self.sigma**2)) / (self.sigma * math.sqrt(2.0 * math.pi))

    def sqrt(self, s):
        """Pointwise square root of the kernel, evaluated without forming g first."""
        s = np.asarray(s, dtype=np.float64)
        scale = (self.sigma * math.sqrt(2.0 * math.pi)) ** -0.5
        return scale * np.exp(-(s**2) / (4.0 * self.sigma**2))


@dataclass
class CoefficientTable:
    """Per-parameter Chebyshev coefficients.

    ``coeffs[i, l]`` is the coefficient of ``T_l`` for the parameter value
    ``grid[i]``.
    """

    degree: int
    grid: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64)
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.shape != (self.grid.size, self.degree + 1):
            raise ValueError(
                f"coefficient array has shape {self.coeffs.shape}, "
                f"expected {(self.grid.size, self.degree + 1)}"
            )

    def evaluate(self, s) -> np.ndarray:
        """Evaluate every row at the points ``s``; returns shape ``(n_t, len(s))``."""
        return chebyshev_eval(self.coeffs, s)


@dataclass(frozen=True)
class ErrorBound:
    value: float
    kind: str

    def __post_init__(self):
        if self.kind not in ("standard", "nonneg"):
            raise ValueError(f"unknown bound kind {self.kind!r}")
        if not (math.isfinite(self.value) and self.value >= 0):
            raise ValueError(f"bound must be finite and nonnegative, got {self.value}")

    def __float__(self):
        return self.value


def chebyshev_nodes(m: int) -> np.ndarray:
    """Chebyshev points of the second kind ``cos(pi * i / m)``, ``i = 0..m``."""
    if m < 1:
        raise ValueError(f"need m >= 1, got {m}")
    return np.cos(np.pi * np.arange(m + 1) / m)


def _check_length(n: int):
    if n < 2:
        raise ValueError(f"DCT-I needs at least 2 samples, got {n}")


def idct_i(coeffs) -> np.ndarray:
    """Synthesis: values at the Chebyshev nodes from Chebyshev coefficients."""
    c = np.array(coeffs, dtype=np.float64)
    _check_length(c.shape[-1])
    c[..., 1:-1] *= 0.5
    return scipy.fft.dct(c, type=1, axis=-1)


def dct_i(values) -> np.ndarray:
    """Analysis: Chebyshev coefficients from values at the Chebyshev nodes.

    Inverse of :func:`idct_i`. Cost is ``O(m log m)`` per row.

    Examples
    --------
    >>> dct_i(np.ones(5))
    array([1., 0., 0., 0., 0.])
    """
    v = np.asarray(values, dtype=np.float64)
    _check_length(v.shape[-1])
    m = v.shape[-1] - 1
    c = scipy.fft.dct(v, type=1, axis=-1) / (2.0 * m)
    c[..., 1:-1] *= 2.0
    return c


def chebyshev_eval(coeffs, s) -> np.ndarray:
    """Evaluate ``sum_l coeffs[..., l] T_l(s)`` by Clenshaw's recurrence.

    ``coeffs`` may be a single row or a 2-D table; the last axis is the degree.
    The result has shape ``coeffs.shape[:-1] + np.shape(s)``.
    """
    c = np.asarray(coeffs, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    lead = c.shape[:-1]
    c2 = c.reshape(-1, c.shape[-1])
    x = s.reshape(1, -1)
    b1 = np.zeros((c2.shape[0], x.shape[1]))
    b2 = np.zeros_like(b1)
    for l in range(c2.shape[1] - 1, 0, -1):
        b1, b2 = 2.0 * x * b1 - b2 + c2[:, l : l + 1], b1
    out = x * b1 - b2 + c2[:, :1]
    return out.reshape(lead + s.shape)


def interpolate_kernel(f: Callable, t, m: int) -> np.ndarray:
    """Coefficients of the degree-``m`` interpolant of ``s -> f(t - s)``.

    ``t`` may be a scalar (one row of length ``m + 1``) or an array of
    parameter values (one row per value).
    """
    if m < 2:
        raise ValueError(f"interpolation degree must be >= 2, got {m}")
    return _interpolate(f, t, m)


def _interpolate(f, t, m):
    t = np.asarray(t, dtype=np.float64)
    return dct_i(f(t[..., None] - chebyshev_nodes(m)))


def square_coeffs(mu) -> np.ndarray:
    """Coefficients of the square of a Chebyshev expansion.

    Zero-pads the degree-``m`` input to degree ``2m``, evaluates at the
    ``2m + 1`` Chebyshev nodes, squares pointwise and transforms back. The
    product has degree ``2m`` so the node values determine it exactly.
    """
    mu = np.asarray(mu, dtype=np.float64)
    m = mu.shape[-1] - 1
    if m < 1:
        raise ValueError(f"need degree >= 1, got {m}")
    padded = np.zeros(mu.shape[:-1] + (2 * m + 1,))
    padded[..., : m + 1] = mu
    f = idct_i(padded)
    return dct_i(f * f)


def kernel_coeffs(sigma: float, t, m: int) -> np.ndarray:
    """Plain degree-``m`` interpolant of ``g_sigma(t - s)``; may dip below zero."""
    return interpolate_kernel(GaussianKernel(sigma), t, m)


def nonneg_kernel_coeffs(sigma: float, t, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Non-negative degree-``m`` approximation of ``g_sigma(t - s)`` and its square.

    The square root of the kernel is interpolated at degree ``m / 2`` and
    squared, which gives a polynomial that is nonnegative on the real line.
    Squaring once more gives the degree-``2m`` coefficients used for
    ``B(t)^2``; these are derived from the first result only.

    Returns
    -------
    mu_bar : ndarray, shape (..., m + 1)
    nu_bar : ndarray, shape (..., 2m + 1)
    """
    if m % 2 or m < 2:
        raise ValueError(f"non-negative approximation needs an even degree >= 2, got {m}")
    kernel = GaussianKernel(sigma)
    xi = _interpolate(kernel.sqrt, t, m // 2)
    mu_bar = square_coeffs(xi)
    nu_bar = square_coeffs(mu_bar)
    return mu_bar, nu_bar


_LOG_BOUND_PREFACTOR = math.log(2.0) + 0.5 * math.log(2.0 * math.e / math.pi)


def error_bound_standard(sigma: float, m: int) -> ErrorBound:
    """Sup-norm bound ``2 sqrt(2e/pi) sigma^-2 (1 + sigma)^-m`` for the plain interpolant.

    Evaluated in log space; ``sigma = 0.005, m = 2000`` would otherwise mix
    magnitudes around ``4e4`` and ``5e-5``.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if m < 0:
        raise ValueError(f"degree must be nonnegative, got {m}")
    log_value = _LOG_BOUND_PREFACTOR - 2.0 * math.log(sigma) - m * math.log1p(sigma)
    return ErrorBound(math.exp(log_value), "standard")


def error_bound_nonneg(sigma: float, m: int) -> ErrorBound:
    """L1 bound on ``[-1, 1]`` for the non-negative approximate smoothed density."""
    if m % 2:
        raise ValueError(f"non-negative bound needs an even degree, got {m}")
    e = error_bound_standard(math.sqrt(2.0) * sigma, m // 2).value
    return ErrorBound(4.0 * math.sqrt(2.0) * (1.0 + sigma * math.sqrt(math.pi) * e) * e, "nonneg")


def build_tables(sigma: float, grid, m: int, nonneg: bool = True) -> tuple[CoefficientTable, CoefficientTable]:
    """Coefficient tables of ``B(t)`` (degree m) and ``B(t)^2`` (degree 2m) over ``grid``.

    With ``nonneg=False`` the plain interpolant is used for ``B(t)``; the
    squared table is obtained by squaring it in either case.
    """
    grid = np.asarray(grid, dtype=np.float64).ravel()
    if grid.size and (grid.min() < -1.0 or grid.max() > 1.0):
        raise ValueError("grid values must lie in [-1, 1]")
    if nonneg:
        mu, nu = nonneg_kernel_coeffs(sigma, grid, m)
    else:
        mu = kernel_coeffs(sigma, grid, m)
        nu = square_coeffs(mu)
    return CoefficientTable(m, grid, mu), CoefficientTable(2 * m, grid, nu)
