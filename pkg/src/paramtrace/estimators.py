"""Trace estimators with constant randomization and the Chebyshev-Nyström++ pipeline.

The same Gaussian sketches ``Omega`` (Nyström) and ``Psi`` (Girard-Hutchinson)
are used for every parameter value ``t``. For spectral densities this lets
all products with ``A`` be shared across the parameter grid: the sketch
``Omega^T T_l(A) [Omega, Psi]`` is accumulated once per Chebyshev degree and
recombined with per-``t`` coefficients.

Random streams
--------------
Sketches are drawn from numpy's PCG64 seeded with
``SeedSequence(seed, spawn_key=(stream_id,))``. ``Omega`` uses stream 0 and
``Psi`` stream 1, so they are independent and reproducible across
platforms. Entries are filled column by column.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .chebyshev import CoefficientTable, build_tables
from .operator import SpectralInterval, SymmetricOperator, affine_transform, as_operator

__all__ = [
    "OMEGA_STREAM",
    "PSI_STREAM",
    "EstimatorConfig",
    "SketchState",
    "DensityEstimate",
    "sample_gaussian",
    "truncated_pinv_solve",
    "hutchinson_constant",
    "nystrom_constant",
    "nystrom_pp_constant",
    "parametric_trace",
    "chebyshev_blocks",
    "accumulate_sketch",
    "evaluate_density",
    "chebyshev_nystrom_pp",
]

OMEGA_STREAM = 0
PSI_STREAM = 1


@dataclass
class EstimatorConfig:
    """Parameters of the Chebyshev-Nyström++ estimator.

    ``sigma`` and ``grid`` are in whatever units the caller works in;
    :func:`chebyshev_nystrom_pp` maps them to ``[-1, 1]`` while
    :func:`accumulate_sketch` and :func:`evaluate_density` expect them there
    already. ``guard=False`` disables the vanishing-density check.
    """

    m: int
    n_omega: int
    n_psi: int
    sigma: float
    grid: np.ndarray
    seed: int = 0
    pinv_rel_threshold: float = 1e-5
    zero_density_threshold: float = 1e-5
    guard: bool = True
    nonneg: bool = True

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64).ravel()
        if self.m < 1 or (self.nonneg and self.m % 2):
            raise ValueError(f"degree m must be a positive even integer, got {self.m}")
        if self.n_omega < 0 or self.n_psi < 0:
            raise ValueError("sketch sizes must be nonnegative")
        if self.n_omega + self.n_psi < 1:
            raise ValueError("need n_omega + n_psi >= 1")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not (self.pinv_rel_threshold > 0 and self.zero_density_threshold > 0):
            raise ValueError("thresholds must be positive")
        if self.grid.size == 0:
            raise ValueError("grid must not be empty")
        if np.any(np.diff(self.grid) < 0):
            raise ValueError("grid must be sorted ascending")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def replace(self, **changes) -> "EstimatorConfig":
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return EstimatorConfig(**values)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["grid"] = [float(x) for x in self.grid]
        return d


@dataclass
class SketchState:
    """Recurrence blocks and per-``t`` accumulators after the degree loop.

    ``K1``, ``K2`` have shape ``(n_t, n_omega, n_omega)``, ``L1`` has shape
    ``(n_t, n_omega, n_psi)`` and ``ell`` has shape ``(n_t,)``.
    """

    dim: int
    V1: np.ndarray
    V2: np.ndarray
    V3: np.ndarray
    W1: np.ndarray
    W2: np.ndarray
    W3: np.ndarray
    K1: np.ndarray
    K2: np.ndarray
    L1: np.ndarray
    ell: np.ndarray
    matvec_count: int
    sketch_seconds: float = 0.0

    @property
    def n_omega(self) -> int:
        return self.K1.shape[1]

    @property
    def n_psi(self) -> int:
        return self.L1.shape[2]


@dataclass(eq=False)
class DensityEstimate:
    grid: np.ndarray
    values: np.ndarray
    config: dict = field(default_factory=dict)
    matvec_count: int = 0
    timings: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.grid.shape != self.values.shape:
            raise ValueError("grid and values must have the same shape")

    def __eq__(self, other):
        # timings are excluded: they differ between otherwise identical runs
        if not isinstance(other, DensityEstimate):
            return NotImplemented
        return (
            np.array_equal(self.grid, other.grid)
            and np.array_equal(self.values, other.values)
            and self.config == other.config
            and self.matvec_count == other.matvec_count
        )


def sample_gaussian(n: int, k: int, seed: int, stream_id: int) -> np.ndarray:
    """Standard normal ``n x k`` block from the ``(seed, stream_id)`` stream."""
    if k < 0 or n < 0:
        raise ValueError("block dimensions must be nonnegative")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream_id,))))
    # one row of draws per column, so column j is the j-th run of n draws
    return np.ascontiguousarray(rng.standard_normal((k, n)).T)


def truncated_pinv_solve(K, M, rel_threshold: float = 1e-5) -> np.ndarray:
    """Apply the pseudoinverse of symmetric ``K`` to ``M``, dropping tiny eigenvalues.

    Eigenvalues with ``|lambda| < rel_threshold * max |lambda|`` are treated
    as zero. Leading axes of ``K`` and ``M`` are batch axes.
    """
    K = np.asarray(K, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    p = K.shape[-1]
    if p == 0:
        return np.zeros(M.shape)
    Ks = 0.5 * (K + np.swapaxes(K, -1, -2))
    lam, V = np.linalg.eigh(Ks)
    cutoff = rel_threshold * np.abs(lam).max(axis=-1, keepdims=True)
    keep = np.abs(lam) >= cutoff
    keep &= np.abs(lam) > 0
    inv = np.where(keep, 1.0 / np.where(keep, lam, 1.0), 0.0)
    return V @ (inv[..., :, None] * (np.swapaxes(V, -1, -2) @ M))


def _matmul(B, X):
    if isinstance(B, SymmetricOperator):
        return B.apply_block(X)
    if callable(B) and not hasattr(B, "shape"):
        return np.asarray(B(X), dtype=np.float64)
    return np.asarray(B @ X, dtype=np.float64)


def hutchinson_constant(B, psi) -> float:
    """Girard-Hutchinson estimate ``trace(Psi^T B Psi) / n_psi``.

    ``B`` may be an array, sparse matrix, :class:`SymmetricOperator` or a
    callable acting on blocks.
    """
    psi = np.asarray(psi, dtype=np.float64)
    if psi.shape[1] < 1:
        raise ValueError("need at least one query vector")
    return float(np.sum(psi * _matmul(B, psi)) / psi.shape[1])


def nystrom_constant(B, omega, rel_threshold: float = 1e-5) -> float:
    """Trace of the Nyström approximation, ``trace((O^T B O)^+ (O^T B^2 O))``."""
    omega = np.asarray(omega, dtype=np.float64)
    if omega.shape[1] == 0:
        return 0.0
    Y = _matmul(B, omega)
    K1 = omega.T @ Y
    K2 = Y.T @ Y
    return float(np.trace(truncated_pinv_solve(K1, K2, rel_threshold)))


def nystrom_pp_constant(B, omega, psi, rel_threshold: float = 1e-5) -> float:
    """Nyström trace plus a Girard-Hutchinson estimate of the residual trace."""
    omega = np.asarray(omega, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    p, q = omega.shape[1], psi.shape[1]
    if p == 0:
        return hutchinson_constant(B, psi)
    Y = _matmul(B, omega)
    K1 = omega.T @ Y
    total = float(np.trace(truncated_pinv_solve(K1, Y.T @ Y, rel_threshold)))
    if q:
        L1 = Y.T @ psi
        ell = float(np.sum(psi * _matmul(B, psi)))
        correction = float(np.sum(L1 * truncated_pinv_solve(K1, L1, rel_threshold)))
        total += (ell - correction) / q
    return total


def parametric_trace(estimator: Callable, B_of_t: Callable, ts, *sketches, **kwargs) -> np.ndarray:
    """Evaluate ``estimator(B_of_t(t), *sketches)`` for each ``t`` with the same sketches."""
    return np.array([estimator(B_of_t(t), *sketches, **kwargs) for t in ts])


def chebyshev_blocks(A: SymmetricOperator, X, degree: int):
    """Yield ``(l, T_l(A) X)`` for ``l = 0..degree``.

    One block product with ``A`` is made after each yielded block, the last
    one included, for ``degree + 1`` products in total.
    """
    cur = np.asarray(X, dtype=np.float64)
    prev = np.zeros_like(cur)
    for l in range(degree + 1):
        yield l, cur
        nxt = A.apply_block(cur)
        if l:
            nxt *= 2.0
            nxt -= prev
        prev, cur = cur, nxt


_FLUSH_DEGREES = 128


def accumulate_sketch(
    A: SymmetricOperator,
    tables: tuple[CoefficientTable, CoefficientTable],
    config: EstimatorConfig,
) -> SketchState:
    """Run the Chebyshev recurrence on ``[Omega, Psi]`` and accumulate per-``t`` sketches.

    ``A`` must have its spectrum in ``[-1, 1]``. After the loop,
    ``K1[i] = Omega^T B(t_i) Omega``, ``K2[i] = Omega^T B(t_i)^2 Omega``,
    ``L1[i] = Omega^T B(t_i) Psi`` and ``ell[i] = trace(Psi^T B(t_i) Psi)``
    where ``B(t)`` is the polynomial in the first table.

    The sketches ``Omega^T T_l(A) [Omega, Psi]`` are buffered over blocks of
    degrees and folded into the accumulators with matrix products.
    """
    mu_table, nu_table = tables
    m = config.m
    if mu_table.degree != m or nu_table.degree != 2 * m:
        raise ValueError(
            f"table degrees ({mu_table.degree}, {nu_table.degree}) do not match m={m} "
            f"(expected ({m}, {2 * m}))"
        )
    if mu_table.grid.size != config.grid.size or nu_table.grid.size != config.grid.size:
        raise ValueError("coefficient tables and config grid have different lengths")
    mu = mu_table.coeffs
    nu = nu_table.coeffs
    n = A.dim
    p, q = config.n_omega, config.n_psi
    n_t = config.grid.size

    omega = sample_gaussian(n, p, config.seed, OMEGA_STREAM)
    psi = sample_gaussian(n, q, config.seed, PSI_STREAM)
    block = np.hstack([omega, psi])

    K1 = np.zeros((n_t, p * p))
    K2 = np.zeros((n_t, p * p))
    L1 = np.zeros((n_t, p * q))
    ell = np.zeros(n_t)

    chunk = min(_FLUSH_DEGREES, 2 * m + 1)
    Xbuf = np.zeros((chunk, p * p))
    Ybuf = np.zeros((chunk, p * q))
    zbuf = np.zeros(chunk)

    def flush(l0, count):
        ls = slice(l0, l0 + count)
        K2[:] += nu[:, ls] @ Xbuf[:count]
        low = min(count, max(0, m + 1 - l0))
        if low:
            ms = slice(l0, l0 + low)
            K1[:] += mu[:, ms] @ Xbuf[:low]
            L1[:] += mu[:, ms] @ Ybuf[:low]
            ell[:] += mu[:, ms] @ zbuf[:low]

    start = time.perf_counter()
    V1 = np.zeros_like(block)
    V2 = block
    matvecs = 0
    l0 = 0
    for l in range(2 * m + 1):
        j = l - l0
        XY = omega.T @ V2
        Xbuf[j] = XY[:, :p].ravel()
        Ybuf[j] = XY[:, p:].ravel()
        zbuf[j] = np.sum(psi * V2[:, p:])
        if j + 1 == chunk or l == 2 * m:
            flush(l0, j + 1)
            l0 = l + 1
        # fused product for the Omega and Psi columns; also made for l = 2m
        V3 = A.apply_block(V2)
        matvecs += V2.shape[1]
        if l:
            V3 *= 2.0
            V3 -= V1
        V1, V2 = V2, V3
    elapsed = time.perf_counter() - start

    return SketchState(
        dim=n,
        V1=V1[:, :p],
        V2=V2[:, :p],
        V3=V3[:, :p],
        W1=V1[:, p:],
        W2=V2[:, p:],
        W3=V3[:, p:],
        K1=K1.reshape(n_t, p, p),
        K2=K2.reshape(n_t, p, p),
        L1=L1.reshape(n_t, p, q),
        ell=ell,
        matvec_count=matvecs,
        sketch_seconds=elapsed,
    )


def evaluate_density(state: SketchState, config: EstimatorConfig) -> DensityEstimate:
    """Combine the accumulated sketches into density values on ``config.grid``.

    With ``n_omega = 0`` this is the Girard-Hutchinson estimate; with
    ``n_psi = 0`` the correction term is dropped and only the Nyström trace
    remains. Where ``trace(K1) / n_omega`` falls below the zero-density
    threshold the value is set to 0 (unless ``config.guard`` is off).
    """
    n = state.dim
    p, q = state.n_omega, state.n_psi
    if p == 0:
        values = state.ell / (n * q)
    else:
        thr = config.pinv_rel_threshold
        values = np.trace(truncated_pinv_solve(state.K1, state.K2, thr), axis1=-2, axis2=-1) / n
        if q:
            correction = np.sum(state.L1 * truncated_pinv_solve(state.K1, state.L1, thr), axis=(-2, -1))
            values = values + (state.ell - correction) / (n * q)
        if config.guard:
            nuclear = np.trace(state.K1, axis1=-2, axis2=-1) / p
            values = np.where(nuclear < config.zero_density_threshold, 0.0, values)
    return DensityEstimate(
        grid=config.grid.copy(),
        values=values,
        config=config.to_dict(),
        matvec_count=state.matvec_count,
        timings={"sketch_seconds": state.sketch_seconds},
    )


def chebyshev_nystrom_pp(A_raw, interval: SpectralInterval, config: EstimatorConfig) -> DensityEstimate:
    """Smoothed spectral density of ``A_raw`` on ``config.grid`` (original units).

    The operator and grid are mapped to ``[-1, 1]`` by the affine transform of
    ``interval``, the smoothing width is rescaled accordingly, and the
    resulting density is scaled back by the Jacobian ``2 / (b - a)``.
    """
    A = affine_transform(as_operator(A_raw), interval)
    jac = 2.0 / interval.width
    unit_grid = interval.to_unit(config.grid)
    # rounding in the map grows with |a| / (b - a) for narrow intervals
    tol = 1e-12 + 16 * np.finfo(float).eps * max(abs(interval.a), abs(interval.b)) / interval.width
    if np.any(np.abs(unit_grid) > 1.0 + tol):
        raise ValueError(f"grid points outside the spectral interval [{interval.a}, {interval.b}]")
    # endpoints may land a rounding error outside [-1, 1]
    unit_grid = np.clip(unit_grid, -1.0, 1.0)
    unit = config.replace(sigma=config.sigma * jac, grid=unit_grid)
    tables = build_tables(unit.sigma, unit.grid, unit.m, nonneg=unit.nonneg)
    state = accumulate_sketch(A, tables, unit)
    est = evaluate_density(state, unit)
    cfg = config.to_dict()
    cfg["interval"] = [interval.a, interval.b]
    return DensityEstimate(
        grid=config.grid.copy(),
        values=est.values * jac,
        config=cfg,
        matvec_count=est.matvec_count,
        timings=est.timings,
    )
