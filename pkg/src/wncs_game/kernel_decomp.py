"""Split a PD matrix into a kernel-preserving part and a part annihilating ``B^c``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from .matrix_core import RANK_TOL, Array, MatrixError, OrderedSvd, is_pd, ordered_svd, psd_sqrt, symmetrize


class ZeroGain(ValueError):
    """The decomposition needs a nonzero controller gain."""


@dataclass(frozen=True)
class KernelSplit:
    T_ker: Array
    T_0: Array
    L: Array
    svd: OrderedSvd

    @property
    def rank(self) -> int:
        return self.svd.rank


def decompose(T: ArrayLike, bc_sample: ArrayLike, Rc: ArrayLike, rank_tol: float = RANK_TOL) -> KernelSplit:
    """``T = T_ker + T_0`` with ``T_0 B^c = 0`` and ``ker(T_ker B^c) = ker(T_ker)``.

    Let ``M = U T U^T`` be partitioned at the rank ``r`` of ``B^c Rc^{-1} B^c^T``
    and ``L = M21 M11^{-1}``. Both parts are Gram matrices:
    ``T_ker = Tk^T Tk`` with ``Tk = [M11^{1/2}; L M11^{1/2}]^T U`` and
    ``T_0 = T0^T T0`` with ``T0 = [0_r; [-L, I] M^{1/2}]^T U``.
    """
    t = symmetrize(T)
    bc = np.asarray(bc_sample, dtype=float)
    rc = symmetrize(Rc)
    if not np.any(bc):
        raise ZeroGain("B^c = 0: the decomposition needs a nonzero controller gain")
    if not is_pd(t):
        raise MatrixError("T must be positive definite")
    gram = bc @ np.linalg.solve(rc, bc.T)
    svd = ordered_svd(gram, rank_tol)
    r = svd.rank
    if r == 0:
        raise ZeroGain("B^c Rc^{-1} B^c^T has numerical rank 0")
    u = svd.U
    S = t.shape[0]
    m = symmetrize(u @ t @ u.T)
    m11 = m[:r, :r]
    if not is_pd(m11):
        raise MatrixError("leading block of U T U^T is not positive definite")
    root11 = psd_sqrt(m11)
    lmat = np.linalg.solve(m11, m[:r, r:]).T
    tk = np.vstack([root11, lmat @ root11]).T @ u
    t_ker = symmetrize(tk.T @ tk)
    if r == S:
        t_0 = np.zeros_like(t)
    else:
        sel = np.hstack([-lmat, np.eye(S - r)])
        tail = sel @ psd_sqrt(m)
        t0 = np.vstack([np.zeros((r, S)), tail]).T @ u
        t_0 = symmetrize(t0.T @ t0)
    return KernelSplit(t_ker, t_0, lmat, svd)
