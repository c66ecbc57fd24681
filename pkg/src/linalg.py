"""
Dense linear-algebra kernel.

Thin, validated wrappers over numpy's LAPACK bindings. Everything here works
in 64-bit floats and is a pure function of its inputs; random matrices come
from an explicit seed, never from global state.

Singular vectors carry a sign ambiguity. ``svd`` imposes no convention;
callers that compare singular vectors across matrices must align signs
themselves.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray

Matrix = NDArray[np.float64]

EPS = float(np.finfo(np.float64).eps)


def as_matrix(a: ArrayLike, name: str = "matrix") -> Matrix:
    """Convert to a finite 2-D float64 array or raise ValueError."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class QrResult:
    """Reduced QR factorization: q has orthonormal columns, r is upper triangular."""
    q: Matrix
    r: Matrix

    def reconstruct(self) -> Matrix:
        return self.q @ self.r

    def rank(self, tol: Optional[float] = None) -> int:
        """
        Numerical rank, counted on the singular values of r.

        q has orthonormal columns, so r has the singular values of the
        factored matrix and the count agrees with ``svd(a).rank()``. The
        diagonal of an unpivoted r undercounts when a dependent column
        comes first.
        """
        if self.r.size == 0:
            return 0
        sigma = np.linalg.svd(self.r, compute_uv=False)
        if tol is None:
            tol = default_tolerance(self.q.shape[0], self.r.shape[1], float(sigma[0]))
        return int(np.sum(sigma > tol))


@dataclass(frozen=True)
class SvdResult:
    """
    Thin SVD ``a = u @ diag(sigma) @ v.T``.

    sigma is non-negative and sorted in decreasing order; u and v have
    orthonormal columns, min(rows, cols) of them.
    """
    u: Matrix
    sigma: NDArray[np.float64]
    v: Matrix

    def reconstruct(self) -> Matrix:
        return (self.u * self.sigma) @ self.v.T

    def rank(self, tol: Optional[float] = None) -> int:
        if self.sigma.size == 0:
            return 0
        if tol is None:
            tol = default_tolerance(self.u.shape[0], self.v.shape[0], float(self.sigma[0]))
        return int(np.sum(self.sigma > tol))


def default_tolerance(rows: int, cols: int, sigma_max: float) -> float:
    """Standard cutoff max(rows, cols) * sigma_max * machine epsilon."""
    return max(rows, cols) * sigma_max * EPS


def qr(a: ArrayLike) -> QrResult:
    """
    Reduced QR factorization of a tall matrix.

    Rank-deficient input is allowed; use ``QrResult.rank`` rather than
    reading the diagonal of r.
    """
    a = as_matrix(a)
    rows, cols = a.shape
    if rows < cols:
        raise ValueError(f"qr requires rows >= cols, got shape {a.shape}")
    q, r = np.linalg.qr(a, mode="reduced")
    return QrResult(q=q, r=r)


def svd(a: ArrayLike) -> SvdResult:
    """Thin singular value decomposition."""
    a = as_matrix(a)
    u, sigma, vt = np.linalg.svd(a, full_matrices=False)
    return SvdResult(u=u, sigma=sigma, v=vt.T)


def pinv(a: ArrayLike, tol: Optional[float] = None) -> Matrix:
    """
    Moore-Penrose pseudoinverse via SVD.

    Singular values at or below ``tol`` are treated as zero. For an
    underdetermined system, ``pinv(X) @ y`` is the minimum-norm
    least-squares solution.

    Args:
        a: Input matrix
        tol: Cutoff; defaults to max(rows, cols) * sigma_max * eps
    """
    a = as_matrix(a)
    if tol is not None and tol < 0:
        raise ValueError(f"tol must be non-negative, got {tol}")
    result = svd(a)
    if result.sigma.size == 0:
        return np.zeros((a.shape[1], a.shape[0]))
    if tol is None:
        tol = default_tolerance(a.shape[0], a.shape[1], float(result.sigma[0]))

    keep = result.sigma > tol
    inv_sigma = np.zeros_like(result.sigma)
    inv_sigma[keep] = 1.0 / result.sigma[keep]
    return (result.v * inv_sigma) @ result.u.T


def matrix_rank(a: ArrayLike, tol: Optional[float] = None) -> int:
    """Numerical rank from singular values."""
    return svd(a).rank(tol)


def chi2_quantile_df2(p: float) -> float:
    """
    Exact quantile of the chi-square distribution with two degrees of freedom.

    The df=2 CDF is 1 - exp(-x/2), so the quantile is -2 ln(1 - p).
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"Probability must lie in (0, 1), got {p}")
    return float(-2.0 * np.log1p(-p))


def make_generator(seed) -> np.random.Generator:
    """
    The package's random generator: numpy's PCG64 bit generator.

    ``seed`` may be an int or a ``numpy.random.SeedSequence``.
    """
    return np.random.Generator(np.random.PCG64(seed))


def gaussian_matrix(rows: int, cols: int, seed) -> Matrix:
    """
    Matrix of i.i.d. standard normal entries.

    Drawn with ``make_generator(seed).standard_normal``; the same seed
    always yields bit-identical output.
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"rows and cols must be at least 1, got {rows}x{cols}")
    return make_generator(seed).standard_normal((rows, cols))
