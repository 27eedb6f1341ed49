"""Constructive existence certificates.

The pipeline in :func:`certify` follows the chain

1. per-atom spectra of ``Sigma = B^c Rc^{-1} B^c^T`` and a threshold ``xi``;
2. the null-space contraction radius ``rho(E[(Pi A) kron (Pi A)])`` where
   ``Pi`` projects onto the zero-singular subspace of ``Sigma``;
3. ``T*`` from a generalized Lyapunov equation;
4. the condition ``E[g(T*)] + Q < T*``;
5. the attacker weight bound and a chosen ``Ra`` slightly above it;
6. ``P_tilde`` from its implicit equation, then ``f(P_tilde) < P_tilde``
   and the concavity membership of ``P_tilde``.

A certificate is issued only when every stage passes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import scipy.linalg as sla
from numpy.typing import ArrayLike

from .matrix_core import RANK_TOL, Array, min_eig, spectral_radius, symmetrize, unvec, vec
from .mgare import ConcavityViolated, Verdict, concavity_indicator, f_operator
from .stochastic_model import PlayerGates, SamplePool, Scenario, attacker_moments, build_pool, sigma2_Ba

DENSE_LIMIT = 4096


class SpectralRadiusTooLarge(ArithmeticError):
    pass


class NonConvergent(ArithmeticError):
    pass


class ConcavityLost(ArithmeticError):
    pass


class StructureMismatch(ValueError):
    pass


# ---------------------------------------------------------------------------
# per-atom spectra


@dataclass(frozen=True)
class BcSpectra:
    rank: Array
    sigma_min: Array
    tr_inv: Array
    null_proj: Array
    weights: Array

    @property
    def nonzero(self) -> Array:
        return self.rank > 0


def bc_spectra(pool: SamplePool, rank_tol: float = RANK_TOL) -> BcSpectra:
    """Rank, smallest nonzero singular value, ``Tr(Sigma_r^{-1})`` and null projector per atom."""
    key = ("spectra", rank_tol)
    if key in pool._cache:
        return pool._cache[key]
    rc = pool.scenario.Rc
    bc = pool.bc
    gram = np.einsum("msc,cd,mtd->mst", bc, np.linalg.inv(rc), bc)
    gram = 0.5 * (gram + np.transpose(gram, (0, 2, 1)))
    eig, vecs = np.linalg.eigh(gram)
    eig = np.clip(eig, 0.0, None)
    top = eig[:, -1]
    keep = eig > rank_tol * top[:, None]
    keep &= top[:, None] > 0
    rank = keep.sum(axis=1)
    with np.errstate(divide="ignore"):
        inv = np.where(keep, 1.0 / np.where(keep, eig, 1.0), 0.0)
    tr_inv = inv.sum(axis=1)
    sig_min = np.where(keep, eig, np.inf).min(axis=1)
    null_mask = (~keep).astype(float)
    null_proj = np.einsum("msk,mk,mtk->mst", vecs, null_mask, vecs)
    spectra = BcSpectra(rank, sig_min, tr_inv, null_proj, np.asarray(pool.bc_w))
    pool._cache[key] = spectra
    return spectra


def choose_xi(pool: SamplePool) -> float:
    """Half the smallest nonzero singular value (exact pools) or half its 1% quantile."""
    sp = bc_spectra(pool)
    mask = sp.nonzero
    if not mask.any():
        return 1.0
    smin = sp.sigma_min[mask]
    if pool.exact:
        return 0.5 * float(smin.min())
    w = sp.weights[mask]
    order = np.argsort(smin, kind="stable")
    cum = np.cumsum(w[order]) / w.sum()
    idx = int(np.searchsorted(cum, 0.01))
    return 0.5 * float(smin[order][min(idx, len(order) - 1)])


def _good_bad(sp: BcSpectra, xi: float) -> tuple[Array, Array]:
    good = sp.nonzero & (sp.sigma_min > xi)
    bad = sp.nonzero & ~good
    return good, bad


# ---------------------------------------------------------------------------
# g operator and its condition


def g_operator(T: ArrayLike, pool: SamplePool) -> Array:
    """``E[A^T (B^c Rc^{-1} B^c^T + T^{-1})^{-1} A]``."""
    t = symmetrize(T)
    a = pool.scenario.A
    bc = pool.bc
    gram = np.einsum("msc,cd,mtd->mst", bc, np.linalg.inv(pool.scenario.Rc), bc)
    inner = np.linalg.inv(gram + np.linalg.inv(t))
    inner = 0.5 * (inner + np.transpose(inner, (0, 2, 1)))
    mean = np.einsum("m,mst->st", pool.bc_w, inner)
    return symmetrize(a.T @ mean @ a)


def check_gT_condition(T: ArrayLike, pool: SamplePool) -> bool:
    t = symmetrize(T)
    gap = t - g_operator(t, pool) - pool.scenario.Q
    return min_eig(gap) > 1e-10 * np.linalg.norm(t, 2)


# ---------------------------------------------------------------------------
# contraction radius and T*


def _projected_A(pool: SamplePool) -> tuple[Array, BcSpectra]:
    sp = bc_spectra(pool)
    return np.einsum("mst,tu->msu", sp.null_proj, pool.scenario.A), sp


def kron_contraction_radius(pool: SamplePool, xi: float | None = None) -> float:
    """``rho(E[(Pi A) kron (Pi A)])`` with ``Pi`` the per-atom null projector.

    ``xi`` is accepted for interface symmetry; this quantity does not depend on it.
    """
    pa, sp = _projected_A(pool)
    S = pa.shape[1]
    mat = np.einsum("m,mab,mcd->acbd", sp.weights, pa, pa, optimize=True).reshape(S * S, S * S)
    return spectral_radius(mat)


def lyapunov_operator(pool: SamplePool, xi: float) -> Array:
    """Matrix of ``T -> Pr(bad) A^T T A + E[A^T Pi T Pi A]`` acting on ``vec(T)``."""
    pa, sp = _projected_A(pool)
    _, bad = _good_bad(sp, xi)
    a = pool.scenario.A
    S = a.shape[0]
    at_pi = np.transpose(pa, (0, 2, 1))
    op = np.einsum("m,mab,mcd->acbd", sp.weights, at_pi, at_pi, optimize=True).reshape(S * S, S * S)
    p_bad = float(sp.weights[bad].sum())
    return p_bad * np.kron(a.T, a.T) + op


def _tstar_rhs(pool: SamplePool, xi: float) -> Array:
    sp = bc_spectra(pool)
    good, _ = _good_bad(sp, xi)
    c = float(np.sum(sp.weights[good] * sp.tr_inv[good]))
    a = pool.scenario.A
    q = pool.scenario.Q
    S = a.shape[0]
    return np.linalg.norm(a, 2) ** 2 * np.linalg.norm(c * np.eye(S) + q, 2) * np.eye(S)


def _apply_lyapunov(T: Array, pool: SamplePool, xi: float) -> Array:
    pa, sp = _projected_A(pool)
    _, bad = _good_bad(sp, xi)
    a = pool.scenario.A
    p_bad = float(sp.weights[bad].sum())
    proj = np.einsum("m,mta,tu,mub->ab", sp.weights, pa, T, pa, optimize=True)
    return p_bad * a.T @ T @ a + proj


def solve_Tstar(pool: SamplePool, xi: float | None = None) -> Array:
    """Solve ``T = Pr(bad) A^T T A + E[A^T Pi T Pi A] + rhs``."""
    xi = choose_xi(pool) if xi is None else xi
    S = pool.S
    rhs = _tstar_rhs(pool, xi)
    op = lyapunov_operator(pool, xi)
    rho = spectral_radius(op)
    if rho >= 1 - 1e-9:
        raise SpectralRadiusTooLarge(f"rho(A_tilde) = {rho:.6g} >= 1")
    if S * S <= DENSE_LIMIT:
        t = unvec(np.linalg.solve(np.eye(S * S) - op, vec(rhs)), S)
    else:
        t = rhs.copy()
        term = rhs.copy()
        for _ in range(100_000):
            term = _apply_lyapunov(term, pool, xi)
            t = t + term
            if np.linalg.norm(term) <= 1e-15 * np.linalg.norm(t):
                break
    return symmetrize(t)


def tstar_residual(T: ArrayLike, pool: SamplePool, xi: float) -> float:
    t = symmetrize(T)
    op = lyapunov_operator(pool, xi)
    r = op @ vec(t) + vec(_tstar_rhs(pool, xi)) - vec(t)
    return float(np.linalg.norm(r) / np.linalg.norm(vec(t)))


# ---------------------------------------------------------------------------
# P_tilde and the attacker bound


def construct_P_tilde(
    T: ArrayLike, Ra: ArrayLike, pool: SamplePool, tol: float = 1e-12, n_max: int = 500
) -> Array:
    """Solve ``P^{-1} = E[B^a] (Ra - cov(P))^{-1} E[B^a]^T + T^{-1}`` from ``P_0 = T``."""
    t = symmetrize(T)
    ra = symmetrize(Ra)
    eb = pool.E_Ba
    t_inv = np.linalg.inv(t)
    if eb.shape[1] == 0 or (not np.any(eb) and not np.any(attacker_moments(pool, t).cov_term)):
        return t
    p = t
    for _ in range(n_max):
        gap = ra - attacker_moments(pool, p).cov_term
        if min_eig(gap) <= 0:
            raise ConcavityLost("Ra - cov(P_tilde) lost positive definiteness")
        nxt = symmetrize(np.linalg.inv(eb @ np.linalg.solve(gap, eb.T) + t_inv))
        if np.linalg.norm(nxt - p, 2) <= tol * np.linalg.norm(nxt, 2):
            return nxt
        p = nxt
    raise NonConvergent(f"P_tilde iteration did not converge in {n_max} steps")


def Ra_lower_bound(T: ArrayLike, pool: SamplePool) -> Array:
    """``E[B^a]^T ((E[g(T)] + Q)^{-1} - T^{-1})^{-1} E[B^a] + c I``.

    ``c`` is the larger of ``sigma2 Tr(T)`` and ``lambda_max(cov(T))``. The
    first term alone bounds ``cov(P)`` only when the entries of ``B^a`` are
    uncorrelated; the second covers every ``P <= T`` because ``cov`` is
    monotone in ``P``.
    """
    t = symmetrize(T)
    d = symmetrize(np.linalg.inv(g_operator(t, pool) + pool.scenario.Q) - np.linalg.inv(t))
    if min_eig(d) <= 0:
        raise ArithmeticError("(E[g(T)] + Q)^{-1} - T^{-1} is not positive definite")
    eb = pool.E_Ba
    na = eb.shape[1]
    if na == 0:
        return np.zeros((0, 0))
    cov = attacker_moments(pool, t).cov_term
    c = max(sigma2_Ba(pool) * np.trace(t), float(np.linalg.eigvalsh(cov)[-1]))
    return symmetrize(eb.T @ np.linalg.solve(d, eb) + c * np.eye(na))


def choose_Ra(bound: ArrayLike, rel_margin: float = 1e-3, floor: float = 1e-6) -> Array:
    b = symmetrize(bound)
    margin = max(rel_margin * float(np.linalg.norm(b, 2)) if b.size else 0.0, floor)
    return b + margin * np.eye(b.shape[0])


# ---------------------------------------------------------------------------
# full certificate


@dataclass
class Certificate:
    rho_kron: float
    xi: float
    rho_tilde: float = float("nan")
    T_star: Array | None = None
    P_tilde: Array | None = None
    Ra_bound: Array | None = None
    Ra_chosen: Array | None = None
    checks: dict[str, bool] = field(default_factory=lambda: {"gT_condition": False, "mnmi": False, "membership": False})
    verdict: Verdict = field(default_factory=lambda: Verdict("ConditionFailed(unknown)"))
    tstar_residual: float = float("nan")
    scenario_Ra_feasible: bool | None = None

    @property
    def certified(self) -> bool:
        return self.verdict.kind == "Certified"

    def to_dict(self) -> dict[str, Any]:
        def m(x: Array | None) -> Any:
            return None if x is None else np.asarray(x).tolist()

        return {
            "verdict": str(self.verdict),
            "rho_kron": self.rho_kron,
            "rho_tilde": self.rho_tilde,
            "xi": self.xi,
            "checks": dict(self.checks),
            "tstar_residual": self.tstar_residual,
            "scenario_Ra_feasible": self.scenario_Ra_feasible,
            "T_star": m(self.T_star),
            "P_tilde": m(self.P_tilde),
            "Ra_bound": m(self.Ra_bound),
            "Ra_chosen": m(self.Ra_chosen),
        }


def _failed(cert: Certificate, stage: str) -> Certificate:
    cert.verdict = Verdict(f"ConditionFailed({stage})")
    return cert


def certify(
    pool: SamplePool,
    xi: float | None = None,
    T: ArrayLike | None = None,
    rel_margin: float = 1e-3,
) -> Certificate:
    """Run the certificate pipeline; ``T`` overrides the Lyapunov ``T*`` if given."""
    xi = choose_xi(pool) if xi is None else float(xi)
    cert = Certificate(rho_kron=kron_contraction_radius(pool), xi=xi)
    if cert.rho_kron >= 1:
        return _failed(cert, "rho_kron")
    if T is None:
        cert.rho_tilde = spectral_radius(lyapunov_operator(pool, xi))
        try:
            t = solve_Tstar(pool, xi)
        except SpectralRadiusTooLarge:
            return _failed(cert, "rho_tilde")
        cert.tstar_residual = tstar_residual(t, pool, xi)
    else:
        t = symmetrize(T)
    cert.T_star = t
    cert.checks["gT_condition"] = check_gT_condition(t, pool)
    if not cert.checks["gT_condition"]:
        return _failed(cert, "gT_condition")
    bound = Ra_lower_bound(t, pool)
    cert.Ra_bound = bound
    ra = choose_Ra(bound, rel_margin)
    cert.Ra_chosen = ra
    if pool.scenario.Ra is not None and pool.scenario.Ra.shape == bound.shape:
        cert.scenario_Ra_feasible = bool(min_eig(pool.scenario.Ra - bound) > 0)
    try:
        p_tilde = construct_P_tilde(t, ra, pool)
    except (ConcavityLost, NonConvergent) as exc:
        return _failed(cert, type(exc).__name__)
    cert.P_tilde = p_tilde
    chosen = pool.with_Ra(ra)
    cert.checks["membership"] = concavity_indicator(p_tilde, chosen)
    if not cert.checks["membership"]:
        return _failed(cert, "membership")
    try:
        fp = f_operator(p_tilde, chosen)
    except ConcavityViolated:
        return _failed(cert, "membership")
    cert.checks["mnmi"] = min_eig(p_tilde - fp) > 0
    if not cert.checks["mnmi"]:
        return _failed(cert, "mnmi")
    cert.verdict = Verdict("Certified")
    return cert


# ---------------------------------------------------------------------------
# worked examples


def _gate_probs(sc: Scenario) -> tuple[float, ...]:
    if sc.controller_gates is None:
        raise StructureMismatch("controller access gates are required")
    return sc.controller_gates.probs


def example1_T_closed_form(pool: SamplePool, gamma2: float = 1.0) -> Array:
    """``(1+gamma2)/(1-(1-d) rho^2) * ||E[1{r!=0} Tr(Sigma_r^{-1})] I + Q|| * I``."""
    sc = pool.scenario
    d = _gate_probs(sc)[0]
    rho = spectral_radius(sc.A)
    eps = 1.0 - (1.0 - d) * rho**2
    if eps <= 0:
        return np.full((sc.S, sc.S), np.inf)
    sp = bc_spectra(pool)
    c = float(np.sum(sp.weights * sp.tr_inv))
    scale = np.linalg.norm(c * np.eye(sc.S) + sc.Q, 2)
    return (1.0 + gamma2) / eps * scale * np.eye(sc.S)


def example1_lower_P(scenario: Scenario, delta: float) -> Array:
    """Solution of ``P = (1 - delta) A^T P A + Q``."""
    a = np.sqrt(1.0 - delta) * scenario.A.T
    return symmetrize(sla.solve_discrete_lyapunov(a, scenario.Q))


def example1_necessary_Ra(pool: SamplePool, P_low: ArrayLike | None = None) -> float:
    """Spectral norm of ``E[B^a]^T Theta_t^{-1} E[B^a] + cov(P_low)`` with ``Theta = P_low^{-1}``.

    ``Theta_t = (1-d)^{-1} A^{-1} Theta A^{-T} - Theta``; requires invertible ``A``.
    """
    sc = pool.scenario
    d = _gate_probs(sc)[0]
    p_low = example1_lower_P(sc, d) if P_low is None else symmetrize(P_low)
    theta = np.linalg.inv(p_low)
    a_inv = np.linalg.inv(sc.A)
    theta_t = symmetrize(a_inv @ theta @ a_inv.T / (1.0 - d) - theta)
    eb = pool.E_Ba
    bound = eb.T @ np.linalg.solve(theta_t, eb) + attacker_moments(pool, p_low).cov_term
    return float(np.linalg.norm(symmetrize(bound), 2))


def _with_gate(scenario: Scenario, delta: float) -> Scenario:
    from dataclasses import replace

    g = scenario.controller_gates
    assert g is not None
    return replace(scenario, controller_gates=PlayerGates(tuple(delta for _ in g.probs), g.mode))


@dataclass
class TraceBoundRow:
    delta: float
    lower: float
    upper: float
    ra_sufficient: float
    ra_necessary: float
    eps: float


def example1_trace_bounds(
    scenario: Scenario,
    delta_grid: Sequence[float],
    seed: int | None = None,
    M: int | None = None,
    gamma2: float = 1.0,
    with_ra: bool = True,
) -> list[TraceBoundRow]:
    """Trace bounds on ``P*`` and the two attacker-weight bounds along a delta grid.

    Every grid point reuses the same seeded channel draws; only the gate
    probability changes.
    """
    _check_example1(scenario)
    rho = spectral_radius(scenario.A)
    rows = []
    for d in delta_grid:
        eps = 1.0 - (1.0 - d) * rho**2
        if eps <= 0:
            rows.append(TraceBoundRow(d, np.inf, np.inf, np.inf, np.inf, eps))
            continue
        sc = _with_gate(scenario, d)
        pool = build_pool(sc, seed, M)
        p_low = example1_lower_P(sc, d)
        t = example1_T_closed_form(pool, gamma2)
        ra_s = ra_n = float("nan")
        if with_ra:
            try:
                ra_s = float(np.linalg.norm(Ra_lower_bound(t, pool), 2))
            except ArithmeticError:
                ra_s = float("inf")
            ra_n = example1_necessary_Ra(pool, p_low)
        rows.append(TraceBoundRow(d, float(np.trace(p_low)), float(np.trace(t)), ra_s, ra_n, eps))
    return rows


def _check_example1(sc: Scenario) -> None:
    g = sc.controller_gates
    if g is None or (g.mode != "shared" and len(g.probs) > 1):
        raise StructureMismatch("Example 1 needs one shared controller access gate")


def _check_example2(sc: Scenario) -> int:
    g = sc.controller_gates
    if g is None or g.mode != "independent":
        raise StructureMismatch("Example 2 needs independent controller gates")
    n = sc.n_controllers
    if n != sc.n_actuators or sc.S % n:
        raise StructureMismatch("Example 2 needs as many controllers as actuators and S divisible by them")
    N = sc.S // n
    for i, b in enumerate(sc.B_list):
        mask = np.ones(sc.S, bool)
        mask[i * N : (i + 1) * N] = False
        if np.any(b[mask]):
            raise StructureMismatch(f"B[{i}] must vanish outside its own {N}-row block")
    for j, row in enumerate(sc.controller_links):
        for i, model in enumerate(row):
            if i != j and not _is_zero_model(model):
                raise StructureMismatch(f"controller {j} must not reach actuator {i}")
    return N


def _check_example3(sc: Scenario) -> None:
    g = sc.controller_gates
    if g is None or g.mode != "independent":
        raise StructureMismatch("Example 3 needs independent controller gates")
    if np.linalg.matrix_rank(np.hstack(sc.B_list)) < sc.S:
        raise StructureMismatch("Example 3 needs [B_1, ..., B_M] of full row rank")


def _is_zero_model(model: Any) -> bool:
    from .stochastic_model import FiniteSupport, GaussianIID

    if isinstance(model, FiniteSupport):
        return all(not np.any(a) for a in model.atoms)
    if isinstance(model, GaussianIID):
        return not np.any(model.mean) and not np.any(model.var)
    return model.p == 0.0 or _is_zero_model(model.inner)


def example_conditions(kind: str, scenario: Scenario, pool: SamplePool | None = None) -> dict[str, Any]:
    """Closed-form conditions for the three worked examples.

    ``kind`` is one of ``"Ex1"``, ``"Ex2"``, ``"Ex3"``.
    """
    rho = spectral_radius(scenario.A)
    a = scenario.A
    out: dict[str, Any] = {"kind": kind, "rho_A": rho}
    if kind == "Ex1":
        _check_example1(scenario)
        d = scenario.controller_gates.probs[0]  # type: ignore[union-attr]
        out["delta"] = d
        out["delta_star"] = 1.0 - rho**-2
        out["threshold_ok"] = d > out["delta_star"]
        out["kron_radius_closed_form"] = (1.0 - d) * rho**2
        out["necessary_flags"] = {"delta_above_threshold": out["threshold_ok"]}
        if out["threshold_ok"]:
            pool = pool or build_pool(scenario)
            t = example1_T_closed_form(pool)
            p_low = example1_lower_P(scenario, d)
            out["Tstar_closed_form"] = t
            out["trace_lower"] = float(np.trace(p_low))
            out["trace_upper"] = float(np.trace(t))
            if pool.ba.shape[2] and abs(np.linalg.det(a)) > 0:
                out["Ra_necessary_norm"] = example1_necessary_Ra(pool, p_low)
                if scenario.Ra is not None:
                    out["necessary_flags"]["Ra_norm_above_necessary"] = bool(
                        np.linalg.norm(scenario.Ra, 2) > out["Ra_necessary_norm"]
                    )
        return out
    if kind == "Ex2":
        N = _check_example2(scenario)
        probs = _gate_probs(scenario)
        scale = np.repeat(np.sqrt(1.0 - np.asarray(probs)), N)
        a1 = scale[:, None] * a
        out["A1"] = a1
        out["rho_A1"] = spectral_radius(a1)
        out["threshold_ok"] = out["rho_A1"] < 1.0
        out["delta_star_equal"] = 1.0 - rho**-2
        blocks = [a[i * N : (i + 1) * N, i * N : (i + 1) * N] for i in range(len(probs))]
        off = a.copy()
        for i in range(len(probs)):
            off[i * N : (i + 1) * N, i * N : (i + 1) * N] = 0
        out["block_diagonal"] = not np.any(off)
        if out["block_diagonal"]:
            out["per_block_delta_star"] = [1.0 - spectral_radius(b) ** -2 for b in blocks]
            out["per_block_ok"] = [d > s for d, s in zip(probs, out["per_block_delta_star"])]
        if out["threshold_ok"]:
            pool = pool or build_pool(scenario)
            sp = bc_spectra(pool)
            c = float(np.sum(sp.weights * sp.tr_inv))
            S = scenario.S
            rhs = np.linalg.norm(a, 2) ** 2 * c * np.eye(S) + scenario.Q
            op = np.kron(a1.T, a1.T)
            out["Tstar_closed_form"] = symmetrize(unvec(np.linalg.solve(np.eye(S * S) - op, vec(rhs)), S))
        return out
    if kind == "Ex3":
        _check_example3(scenario)
        probs = _gate_probs(scenario)
        prod = float(np.prod([1.0 - d for d in probs]))
        out["product_radius"] = prod * rho**2
        out["threshold_ok"] = out["product_radius"] < 1.0
        out["delta_star_equal"] = 1.0 - rho ** (-2.0 / len(probs))
        if out["threshold_ok"]:
            pool = pool or build_pool(scenario)
            sp = bc_spectra(pool)
            c = float(np.sum(sp.weights * sp.tr_inv))
            S = scenario.S
            rhs = np.linalg.norm(a, 2) ** 2 * c * np.eye(S) + scenario.Q
            op = prod * np.kron(a.T, a.T)
            out["Tstar_closed_form"] = symmetrize(unvec(np.linalg.solve(np.eye(S * S) - op, vec(rhs)), S))
        return out
    raise StructureMismatch(f"unknown example kind {kind!r}")
