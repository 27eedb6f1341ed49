"""Dense matrix primitives shared by the rest of the package.

Everything here is a pure function of its inputs, and symmetric inputs are
symmetrized on entry. Vectorization is column-major so that
``vec(A X B) = (B^T kron A) vec(X)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

Array = NDArray[np.float64]

PSD_TOL = 1e-10
PD_TOL = 1e-10
LOEWNER_TOL = 1e-9
RANK_TOL = 1e-9


class MatrixError(ValueError):
    """Raised when a matrix violates a structural precondition."""


def as_matrix(m: ArrayLike) -> Array:
    a = np.array(m, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise MatrixError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def symmetrize(m: ArrayLike) -> Array:
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise MatrixError(f"expected a square matrix, got shape {a.shape}")
    return 0.5 * (a + a.T)


def is_symmetric(m: ArrayLike, rtol: float = 1e-12) -> bool:
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        return False
    scale = max(np.abs(a).max(initial=0.0), 1.0)
    return bool(np.abs(a - a.T).max(initial=0.0) <= rtol * scale)


def min_eig(m: ArrayLike) -> float:
    """Smallest eigenvalue; ``+inf`` for the empty matrix, which is vacuously PD."""
    s = symmetrize(m)
    if s.size == 0:
        return float("inf")
    return float(np.linalg.eigvalsh(s)[0])


def is_psd(m: ArrayLike, tol: float = PSD_TOL) -> bool:
    s = symmetrize(m)
    eig = np.linalg.eigvalsh(s)
    return bool(eig[0] >= -tol * max(np.abs(eig).max(initial=0.0), 1e-300))


def is_pd(m: ArrayLike, tol: float = PD_TOL) -> bool:
    s = symmetrize(m)
    eig = np.linalg.eigvalsh(s)
    return bool(eig[0] > tol * max(np.abs(eig).max(initial=0.0), 1e-300))


def loewner_leq(m1: ArrayLike, m2: ArrayLike, tol: float = LOEWNER_TOL) -> bool:
    """True when ``m1 <= m2`` in the Loewner order, up to ``tol * (1 + ||m2||)``."""
    a, b = symmetrize(m1), symmetrize(m2)
    return min_eig(b - a) >= -tol * (1.0 + np.linalg.norm(b, 2))


def loewner_lt(m1: ArrayLike, m2: ArrayLike, margin: float = 0.0) -> bool:
    """True when ``m2 - m1`` has smallest eigenvalue strictly above ``margin``."""
    return min_eig(symmetrize(m2) - symmetrize(m1)) > margin


def kron(a: ArrayLike, b: ArrayLike) -> Array:
    return np.kron(as_matrix(a), as_matrix(b))


def vec(x: ArrayLike) -> Array:
    return as_matrix(x).reshape(-1, order="F")


def unvec(v: ArrayLike, dim: int | tuple[int, int]) -> Array:
    flat = np.asarray(v, dtype=float).reshape(-1)
    rows, cols = (dim, dim) if isinstance(dim, (int, np.integer)) else dim
    if flat.size != rows * cols:
        raise MatrixError(f"cannot reshape vector of length {flat.size} into {rows}x{cols}")
    return flat.reshape((rows, cols), order="F")


def schur_complement(m: ArrayLike, split: int, which: str = "upper-left") -> Array:
    """Schur complement of a 2x2 block matrix split at row/column ``split``.

    ``which="upper-left"`` returns ``M/A1 = A4 - A3 A1^{-1} A2`` and
    ``which="lower-right"`` returns ``M/A4 = A1 - A2 A4^{-1} A3``.
    """
    a = as_matrix(m)
    n = a.shape[0]
    if a.shape[1] != n or not 0 < split < n:
        raise MatrixError(f"invalid split {split} for shape {a.shape}")
    a1, a2 = a[:split, :split], a[:split, split:]
    a3, a4 = a[split:, :split], a[split:, split:]
    try:
        if which == "upper-left":
            _check_invertible(a1)
            return a4 - a3 @ np.linalg.solve(a1, a2)
        if which == "lower-right":
            _check_invertible(a4)
            return a1 - a2 @ np.linalg.solve(a4, a3)
    except np.linalg.LinAlgError as exc:
        raise MatrixError("designated block is singular") from exc
    raise MatrixError(f"unknown block selector {which!r}")


def _check_invertible(block: Array) -> None:
    if np.linalg.cond(block) > 1e14:
        raise MatrixError("designated block is singular")


def spectral_radius(m: ArrayLike) -> float:
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise MatrixError(f"spectral radius needs a square matrix, got {a.shape}")
    return float(np.abs(np.linalg.eigvals(a)).max(initial=0.0))


def psd_sqrt(m: ArrayLike, tol: float = PSD_TOL) -> Array:
    s = symmetrize(m)
    eig, vecs = np.linalg.eigh(s)
    if eig[0] < -tol * max(np.abs(eig).max(initial=0.0), 1e-300):
        raise MatrixError(f"matrix is not PSD (min eigenvalue {eig[0]:.3e})")
    root = (vecs * np.sqrt(np.clip(eig, 0.0, None))) @ vecs.T
    return 0.5 * (root + root.T)


@dataclass(frozen=True)
class OrderedSvd:
    """``M = U^T diag(sigma) U`` with non-increasing ``sigma`` and ``rank`` nonzero values."""

    U: Array
    sigma: Array
    rank: int

    @property
    def nonzero(self) -> Array:
        return self.sigma[: self.rank]

    def null_projector(self) -> Array:
        """Orthogonal projector onto the zero-singular-value subspace."""
        tail = self.U[self.rank :]
        return tail.T @ tail


def ordered_svd(m: ArrayLike, rank_tol: float = RANK_TOL) -> OrderedSvd:
    """Ordered eigen/singular decomposition of a symmetric PSD matrix.

    Rows of ``U`` are the singular vectors; each row's first entry that is
    not negligible is made positive so repeated calls agree bit for bit.
    ``rank`` counts singular values above ``rank_tol * sigma_max``.
    """
    s = symmetrize(m)
    if not is_psd(s):
        raise MatrixError("ordered_svd expects a PSD matrix")
    eig, vecs = np.linalg.eigh(s)
    order = np.argsort(-eig, kind="stable")
    sigma = np.clip(eig[order], 0.0, None)
    u = vecs[:, order].T.copy()
    for row in u:
        nz = np.flatnonzero(np.abs(row) > 1e-12)
        if nz.size and row[nz[0]] < 0:
            row *= -1.0
    top = sigma[0] if sigma.size else 0.0
    rank = int(np.count_nonzero(sigma > rank_tol * top)) if top > 0 else 0
    return OrderedSvd(U=u, sigma=sigma, rank=rank)

