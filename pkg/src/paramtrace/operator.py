"""Symmetric linear operators accessed through block matrix-vector products."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "SymmetricOperator",
    "DenseSymmetric",
    "SparseSymmetric",
    "AffineTransformed",
    "CountingOperator",
    "SpectralInterval",
    "MatrixMarketError",
    "build_hamiltonian",
    "load_matrix_market",
    "estimate_spectral_interval",
    "affine_transform",
]


class SymmetricOperator:
    """A real symmetric ``n x n`` matrix known only through ``X -> A @ X``.

    Subclasses implement :meth:`_apply`, which receives a 2-D float64 block.
    """

    dim: int

    def apply_block(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            return self.apply_block(X[:, None])[:, 0]
        if X.shape[0] != self.dim:
            raise ValueError(f"block has {X.shape[0]} rows, operator dimension is {self.dim}")
        return self._apply(X)

    def _apply(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __matmul__(self, X):
        return self.apply_block(X)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.dim, self.dim)

    def to_dense(self) -> np.ndarray:
        return self.apply_block(np.eye(self.dim))


class DenseSymmetric(SymmetricOperator):
    def __init__(self, matrix, check: bool = True):
        A = np.array(matrix, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {A.shape}")
        if check and not np.allclose(A, A.T, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(A).max(initial=0.0))):
            raise ValueError("matrix is not symmetric")
        A.setflags(write=False)
        self.matrix = A
        self.dim = A.shape[0]

    def _apply(self, X):
        return self.matrix @ X

    def to_dense(self):
        return self.matrix.copy()


class SparseSymmetric(SymmetricOperator):
    """Symmetric matrix in CSR storage with the full (both triangles) pattern."""

    def __init__(self, matrix, check: bool = True):
        A = sp.csr_matrix(matrix, dtype=np.float64)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {A.shape}")
        A.sum_duplicates()
        A.sort_indices()
        if check:
            diff = A - A.T
            if diff.nnz and np.abs(diff.data).max() > 0.0:
                raise ValueError("sparse matrix is not symmetric")
        self.matrix = A
        self.dim = A.shape[0]

    @property
    def indptr(self) -> np.ndarray:
        return self.matrix.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.matrix.indices

    @property
    def data(self) -> np.ndarray:
        return self.matrix.data

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def _apply(self, X):
        return np.asarray(self.matrix @ X)

    def to_dense(self):
        return self.matrix.toarray()


class AffineTransformed(SymmetricOperator):
    """Lazy ``scale * A + shift * I``."""

    def __init__(self, base: SymmetricOperator, scale: float, shift: float):
        self.base = base
        self.scale = float(scale)
        self.shift = float(shift)
        self.dim = base.dim

    def _apply(self, X):
        return self.scale * self.base.apply_block(X) + self.shift * X


class CountingOperator(SymmetricOperator):
    """Wraps an operator and counts the matrix-vector products (columns) applied."""

    def __init__(self, base: SymmetricOperator):
        self.base = base
        self.dim = base.dim
        self.matvecs = 0
        self.calls = 0

    def _apply(self, X):
        self.calls += 1
        self.matvecs += X.shape[1]
        return self.base.apply_block(X)


@dataclass(frozen=True)
class SpectralInterval:
    a: float
    b: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b) and self.a < self.b):
            raise ValueError(f"invalid spectral interval [{self.a}, {self.b}]")

    @property
    def width(self) -> float:
        return self.b - self.a

    def to_unit(self, x):
        """Affine map of ``[a, b]`` onto ``[-1, 1]``."""
        return (2.0 * np.asarray(x, dtype=np.float64) - (self.a + self.b)) / (self.b - self.a)

    def from_unit(self, y):
        return 0.5 * ((self.b - self.a) * np.asarray(y, dtype=np.float64) + (self.a + self.b))

    @classmethod
    def parse(cls, text: str) -> "SpectralInterval":
        try:
            a, b = (float(v) for v in text.split(","))
        except ValueError:
            raise ValueError(f"interval must be given as 'a,b', got {text!r}") from None
        return cls(a, b)


def as_operator(A) -> SymmetricOperator:
    """Wrap dense arrays and scipy sparse matrices; operators pass through."""
    if isinstance(A, SymmetricOperator):
        return A
    if sp.issparse(A):
        return SparseSymmetric(A)
    return DenseSymmetric(A)


def _second_difference(N: int, periodic: bool) -> sp.csr_matrix:
    # kron of this with identities gives the 2-D / 3-D stencil
    main = np.full(N, 2.0)
    off = np.full(N - 1, -1.0)
    D = sp.diags([off, main, off], [-1, 0, 1], shape=(N, N), format="lil")
    if periodic:
        D[0, N - 1] -= 1.0
        D[N - 1, 0] -= 1.0
    return D.tocsr()


def _well_potential(N: int, h: float, n_c: int, L: float, v0: float, lam: float, dim: int) -> np.ndarray:
    """Sum of Gaussian wells at the cell centres, including the nearest periodic images."""
    period = n_c * L
    x = h * (np.arange(N) + 0.5)
    centres = (np.arange(n_c) + 0.5) * L
    # axes ordered (z, y, x) so that ravel() makes x the fastest index
    coords = np.meshgrid(*([x] * dim), indexing="ij")
    V = np.zeros([N] * dim)
    shifts = (-period, 0.0, period)
    for centre in itertools.product(centres, repeat=dim):
        for image in itertools.product(shifts, repeat=dim):
            r2 = sum((c - (ci + si)) ** 2 for c, ci, si in zip(coords, centre, image))
            V += v0 * np.exp(-lam * r2)
    return V.ravel()


def build_hamiltonian(
    n_c: int = 1,
    L: float = 6.0,
    h: float = 0.6,
    v0: float = -4.0,
    lam: float = 8.0,
    dim: int = 3,
    boundary: str = "periodic",
) -> SparseSymmetric:
    """Finite-difference discretization of ``-Laplace + V`` on a box of side ``n_c * L``.

    The box holds ``n_c * L / h`` grid points per axis, at ``h * (i + 1/2)``,
    ordered lexicographically with ``x`` fastest. ``V`` is a sum of Gaussian
    wells ``v0 * exp(-lam * r^2)`` centred in each of the ``n_c^dim`` cells
    (plus their nearest periodic images). The Laplacian is the standard
    second-order stencil with periodic (``"periodic"``, the default) or
    homogeneous Dirichlet (``"dirichlet"``) boundary conditions. ``dim = 2`` gives the
    planar analogue used for small test problems.
    """
    if n_c < 1:
        raise ValueError(f"n_c must be a positive integer, got {n_c}")
    if boundary not in ("dirichlet", "periodic"):
        raise ValueError(f"boundary must be 'dirichlet' or 'periodic', got {boundary!r}")
    if dim not in (1, 2, 3):
        raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
    ratio = L / h
    per_cell = round(ratio)
    if per_cell < 1 or abs(ratio - per_cell) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"L / h must be a positive integer, got L={L}, h={h} (ratio {ratio})")
    N = n_c * per_cell
    periodic = boundary == "periodic"
    if periodic and N < 3:
        raise ValueError(f"need at least 3 grid points per axis for the periodic stencil, got {N}")

    D = _second_difference(N, periodic)
    eye = sp.identity(N, format="csr")
    lap = sp.csr_matrix((N**dim, N**dim))
    for axis in range(dim):
        # axis 0 of the kron chain is the slowest index (z), the last is x
        factors = [D if k == axis else eye for k in range(dim)]
        term = factors[0]
        for f in factors[1:]:
            term = sp.kron(term, f, format="csr")
        lap = lap + term
    V = _well_potential(N, h, n_c, L, v0, lam, dim)
    H = lap / h**2 + sp.diags(V)
    return SparseSymmetric(H.tocsr())


class MatrixMarketError(ValueError):
    pass


def load_matrix_market(path) -> SparseSymmetric:
    """Read a real symmetric coordinate Matrix Market file.

    Only the lower (or upper) triangle is stored in the file; the returned
    matrix holds the mirrored full pattern.
    """
    path = Path(path)
    try:
        with path.open("r") as fh:
            banner = fh.readline()
            header = fh.readline()
            while header.startswith("%"):
                header = fh.readline()
    except OSError as exc:
        raise MatrixMarketError(f"cannot read {path}: {exc}") from exc

    tokens = banner.lower().split()
    if len(tokens) != 5 or tokens[0] != "%%matrixmarket" or tokens[1] != "matrix":
        raise MatrixMarketError(f"{path}: missing or malformed MatrixMarket banner: {banner.strip()!r}")
    _, _, fmt, field, symmetry = tokens
    if fmt != "coordinate":
        raise MatrixMarketError(f"{path}: expected coordinate format, got {fmt!r}")
    if field not in ("real", "integer", "double"):
        raise MatrixMarketError(f"{path}: expected a real field, got {field!r}")
    if symmetry != "symmetric":
        raise MatrixMarketError(f"{path}: expected a symmetric matrix, header says {symmetry!r}")

    try:
        rows, cols, nnz = (int(v) for v in header.split())
    except ValueError:
        raise MatrixMarketError(f"{path}: malformed size line {header.strip()!r}") from None
    if rows != cols:
        raise MatrixMarketError(f"{path}: symmetric matrix must be square, got {rows}x{cols}")

    try:
        entries = np.loadtxt(path, comments="%", skiprows=0, ndmin=2)
    except ValueError as exc:
        raise MatrixMarketError(f"{path}: cannot parse entries: {exc}") from exc
    # first non-comment row is the size line
    entries = entries[1:]
    if entries.shape[0] != nnz:
        raise MatrixMarketError(f"{path}: header declares {nnz} entries, found {entries.shape[0]}")
    if nnz and entries.shape[1] != 3:
        raise MatrixMarketError(f"{path}: each entry needs 'row col value', found {entries.shape[1]} columns")
    if nnz == 0:
        return SparseSymmetric(sp.csr_matrix((rows, cols)))

    i = entries[:, 0]
    j = entries[:, 1]
    if np.any(i != np.round(i)) or np.any(j != np.round(j)):
        raise MatrixMarketError(f"{path}: non-integer index")
    i = i.astype(np.int64) - 1
    j = j.astype(np.int64) - 1
    bad = (i < 0) | (i >= rows) | (j < 0) | (j >= cols)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise MatrixMarketError(
            f"{path}: entry {k + 1} index ({i[k] + 1}, {j[k] + 1}) out of range for a {rows}x{cols} matrix"
        )
    vals = entries[:, 2]
    off = i != j
    A = sp.coo_matrix(
        (np.concatenate([vals, vals[off]]), (np.concatenate([i, j[off]]), np.concatenate([j, i[off]]))),
        shape=(rows, cols),
    )
    return SparseSymmetric(A.tocsr())


def _gershgorin(op: SymmetricOperator) -> tuple[float, float]:
    if isinstance(op, SparseSymmetric):
        A = op.matrix
        d = A.diagonal()
        radius = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(d)
    else:
        A = op.to_dense()
        d = np.diag(A)
        radius = np.abs(A).sum(axis=1) - np.abs(d)
    return float(np.min(d - radius)), float(np.max(d + radius))


def _extreme_eigenpairs(op: SymmetricOperator, tol: float, seed: int) -> tuple[float, float] | None:
    """Residual-padded bounds from ARPACK's extreme Ritz pairs; ``None`` if it fails."""
    n = op.dim
    if n < 3:
        return None
    lin = spla.LinearOperator((n, n), matvec=op.apply_block, matmat=op.apply_block, dtype=np.float64)
    v0 = np.random.default_rng(seed).standard_normal(n)
    bounds = []
    for which in ("SA", "LA"):
        try:
            theta, y = spla.eigsh(lin, k=1, which=which, v0=v0, tol=tol)
        except spla.ArpackNoConvergence:
            return None
        y = y[:, 0] / np.linalg.norm(y[:, 0])
        pad = float(np.linalg.norm(op.apply_block(y) - theta[0] * y))
        bounds.append(float(theta[0]) + (pad if which == "LA" else -pad))
    return bounds[0], bounds[1]


def estimate_spectral_interval(A: SymmetricOperator, margin: float = 0.01, seed: int = 0) -> SpectralInterval:
    """Interval enclosing the spectrum of ``A``, widened by ``margin * width`` per side.

    Gershgorin discs give a guaranteed enclosure. It is tightened by the
    extreme Ritz values of a seeded Lanczos (ARPACK) run, each padded by its
    residual norm; the result is never wider than the Gershgorin interval.
    """
    if margin < 0:
        raise ValueError(f"margin must be nonnegative, got {margin}")
    op = as_operator(A)
    lo, hi = _gershgorin(op)
    if hi > lo:
        refined = _extreme_eigenpairs(op, tol=1e-10, seed=seed)
        if refined is not None:
            # absorb rounding in the Ritz values themselves
            slack = 64 * np.finfo(float).eps * max(abs(lo), abs(hi))
            lo, hi = max(lo, refined[0] - slack), min(hi, refined[1] + slack)
    if hi <= lo:
        # single-point spectrum, e.g. a multiple of the identity
        pad = max(abs(lo), 1.0) * 1e-8
        lo, hi = lo - pad, hi + pad
    w = hi - lo
    return SpectralInterval(lo - margin * w, hi + margin * w)


def affine_transform(A: SymmetricOperator, interval: SpectralInterval) -> AffineTransformed:
    """Operator for ``(2A - (a + b) I) / (b - a)``, whose spectrum lies in ``[-1, 1]``."""
    op = as_operator(A)
    scale = 2.0 / interval.width
    shift = -(interval.a + interval.b) / interval.width
    return AffineTransformed(op, scale, shift)
