"""The modified game algebraic Riccati operator and its fixed point.

With ``B(k) = [B^c(k), E[B^a]]`` and the block matrix
``Phi = [[Phi1, Phi2], [Phi2^T, -Phi3]]`` the operator is

    f(P) = A^T E_{B^c}[P - P B Phi^{-1} B^T P] A + Q.

When the scenario carries no attacker weight (``Ra is None``) the attacker
block is dropped, which is the ``Ra -> infinity`` limit of the operator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike

from .matrix_core import Array, min_eig, symmetrize
from .stochastic_model import SamplePool, attacker_moments


class ConcavityViolated(ArithmeticError):
    """``Ra - E[B^a^T P B^a]`` is not positive definite."""


class SingularPhi(ArithmeticError):
    """The stacked first-order system is singular."""


@dataclass(frozen=True)
class PhiBlocks:
    phi1: Array
    phi2: Array
    phi3: Array

    @property
    def phi(self) -> Array:
        return np.block([[self.phi1, self.phi2], [self.phi2.T, -self.phi3]])


@dataclass(frozen=True)
class Verdict:
    kind: str
    k: int | None = None

    def __str__(self) -> str:
        return self.kind if self.k is None else f"{self.kind}({self.k})"

    @property
    def exists(self) -> bool:
        return self.kind == "Exists"


@dataclass
class MgareSolution:
    P_star: Array
    iterations: int
    residual: float
    trajectory_norms: list[float]
    membership_ok: list[bool]
    verdict: Verdict
    iterates: list[Array] = field(default_factory=list, repr=False)


def attacker_active(pool: SamplePool) -> bool:
    return pool.scenario.Ra is not None and pool.ba.shape[2] > 0


def phi3(P: ArrayLike, pool: SamplePool) -> Array:
    """``Ra - E[B^a^T P B^a]`` (empty when the attacker block is inactive)."""
    if not attacker_active(pool):
        return np.zeros((0, 0))
    return symmetrize(pool.Ra - attacker_moments(pool, P).E_BatPBa)


def phi_blocks(P: ArrayLike, bc_sample: ArrayLike, pool: SamplePool) -> PhiBlocks:
    p = symmetrize(P)
    bc = np.asarray(bc_sample, dtype=float)
    p1 = symmetrize(bc.T @ p @ bc + pool.scenario.Rc)
    if attacker_active(pool):
        p2 = bc.T @ p @ pool.E_Ba
        p3 = phi3(p, pool)
    else:
        p2 = np.zeros((bc.shape[1], 0))
        p3 = np.zeros((0, 0))
    return PhiBlocks(p1, p2, p3)


def concavity_indicator(P: ArrayLike, pool: SamplePool) -> bool:
    """True iff ``Ra - E[B^a^T P B^a]`` is positive definite (strictly)."""
    if not attacker_active(pool):
        return True
    m = phi3(P, pool)
    return min_eig(m) > 1e-14 * max(1.0, float(np.abs(m).max()))


def stacked_gains(P: ArrayLike, pool: SamplePool) -> tuple[Array, Array]:
    """Per-atom ``Phi^{-1} B^T P`` and ``B`` for all controller atoms.

    Returns ``X`` of shape (M, n, S) and ``Bfull`` of shape (M, S, n) where
    ``n = nc + na`` (``na = 0`` without an active attacker).
    """
    p = symmetrize(P)
    bc = pool.bc
    m, S, nc = bc.shape
    rc = pool.scenario.Rc
    pb = np.einsum("st,mtc->msc", p, bc)
    phi11 = np.einsum("msc,msd->mcd", bc, pb) + rc
    if attacker_active(pool):
        eb = pool.E_Ba
        p3 = phi3(p, pool)
        if min_eig(p3) <= 1e-14 * max(1.0, float(np.abs(p3).max())):
            raise ConcavityViolated("Ra - E[B^a^T P B^a] is not positive definite")
        na = eb.shape[1]
        phi12 = np.einsum("msc,sa->mca", pb, eb)
        top = np.concatenate([phi11, phi12], axis=2)
        bot = np.concatenate([np.transpose(phi12, (0, 2, 1)), np.broadcast_to(-p3, (m, na, na))], axis=2)
        phi = np.concatenate([top, bot], axis=1)
        bfull = np.concatenate([bc, np.broadcast_to(eb, (m, S, na))], axis=2)
    else:
        phi = phi11
        bfull = bc
    rhs = np.einsum("msn,st->mnt", bfull, p)
    try:
        x = np.linalg.solve(phi, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularPhi(str(exc)) from exc
    return x, bfull


def f_operator(P: ArrayLike, pool: SamplePool) -> Array:
    p = symmetrize(P)
    x, bfull = stacked_gains(p, pool)
    correction = p @ np.tensordot(pool.bc_w, np.matmul(bfull, x), axes=1)
    inner = p - correction
    a = pool.scenario.A
    return symmetrize(a.T @ inner @ a + pool.scenario.Q)


def riccati_recursion(
    pool: SamplePool, K: int, divergence_cap: float = 1e12
) -> tuple[list[Array], list[bool]]:
    """``f^0(Q), ..., f^K(Q)`` with membership flags, stopping early on failure."""
    seq = [symmetrize(pool.scenario.Q)]
    flags = [concavity_indicator(seq[0], pool)]
    for _ in range(K):
        if not flags[-1] or np.linalg.norm(seq[-1], 2) > divergence_cap:
            break
        seq.append(f_operator(seq[-1], pool))
        flags.append(concavity_indicator(seq[-1], pool))
    return seq, flags


def solve_fixed_point(
    pool: SamplePool,
    tol: float = 1e-10,
    k_max: int = 10_000,
    divergence_cap: float = 1e12,
    keep_iterates: bool = False,
) -> MgareSolution:
    """Iterate ``f^k(Q)`` to the minimal fixed point or to a failure verdict."""
    p = symmetrize(pool.scenario.Q)
    norms = [float(np.linalg.norm(p, 2))]
    flags = [concavity_indicator(p, pool)]
    iterates = [p] if keep_iterates else []
    for k in range(k_max):
        if not flags[-1]:
            return MgareSolution(p, k, np.inf, norms, flags, Verdict("ConcavityViolatedAt", k), iterates)
        nxt = f_operator(p, pool)
        norms.append(float(np.linalg.norm(nxt, 2)))
        flags.append(concavity_indicator(nxt, pool))
        if keep_iterates:
            iterates.append(nxt)
        if norms[-1] > divergence_cap or not np.isfinite(norms[-1]):
            return MgareSolution(nxt, k + 1, np.inf, norms, flags, Verdict("DivergedAt", k + 1), iterates)
        change = np.linalg.norm(nxt - p, 2) / norms[-1]
        p = nxt
        if change < tol:
            if not flags[-1]:
                return MgareSolution(p, k + 1, np.inf, norms, flags, Verdict("ConcavityViolatedAt", k + 1), iterates)
            residual = float(np.linalg.norm(f_operator(p, pool) - p, 2) / norms[-1])
            return MgareSolution(p, k + 1, residual, norms, flags, Verdict("Exists"), iterates)
    return MgareSolution(p, k_max, np.inf, norms, flags, Verdict("UndecidedAtKmax", k_max), iterates)
