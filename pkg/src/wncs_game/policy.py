"""Saddle-point policies and their closed-loop simulation.

Both players use linear feedback. For a matrix ``P`` and a controller
realization ``B^c`` the stacked controls solve

    Phi(P; B^c) [u_c; u_a] = -B^T P A x,    B = [B^c, E[B^a]],

so the attacker sees the realized ``B^c`` but only the mean of its own gain.
The simulator draws ``B^c`` and ``B^a`` from the atoms of the pool with their
weights, which keeps simulated costs consistent with the expectations used to
solve the Riccati equation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike

from . import simkernel
from .matrix_core import Array, spectral_radius, symmetrize
from .mgare import MgareSolution, concavity_indicator, f_operator, phi_blocks, stacked_gains
from .stochastic_model import SamplePool

UNBOUNDED = -1
BETA_CAP = 100_000
STATE_CAP = 1e200
_STREAM_SIM = 11


# ---------------------------------------------------------------------------
# per-slot controls


def _full_B(bc_sample: Array, pool: SamplePool) -> Array:
    bc = np.asarray(bc_sample, dtype=float)
    if pool.scenario.Ra is not None and pool.ba.shape[2]:
        return np.hstack([bc, pool.E_Ba])
    return bc


def steady_controls(P: ArrayLike, bc_sample: ArrayLike, pool: SamplePool, x: ArrayLike) -> tuple[Array, Array]:
    p = symmetrize(P)
    bc = np.asarray(bc_sample, dtype=float)
    phi = phi_blocks(p, bc, pool).phi
    b = _full_B(bc, pool)
    u = -np.linalg.solve(phi, b.T @ p @ pool.scenario.A @ np.asarray(x, dtype=float))
    nc = bc.shape[1]
    return u[:nc], u[nc:]


def xi_matrix(P: ArrayLike, bc_sample: ArrayLike, pool: SamplePool) -> Array:
    """Closed-loop matrix ``(I - B Phi^{-1} B^T P) A``."""
    p = symmetrize(P)
    bc = np.asarray(bc_sample, dtype=float)
    phi = phi_blocks(p, bc, pool).phi
    b = _full_B(bc, pool)
    S = p.shape[0]
    return (np.eye(S) - b @ np.linalg.solve(phi, b.T @ p)) @ pool.scenario.A


def feedback_gains(P: ArrayLike, pool: SamplePool) -> Array:
    """Per-atom stacked feedback ``-Phi^{-1} B^T P A``, shape (Mc, nc + na, S)."""
    x, _ = stacked_gains(P, pool)
    return -np.einsum("mnt,tu->mnu", x, pool.scenario.A)


def _xi_all(P: ArrayLike, pool: SamplePool) -> Array:
    gains = feedback_gains(P, pool)
    bfull = np.concatenate(
        [pool.bc, np.broadcast_to(pool.E_Ba, (pool.bc.shape[0],) + pool.E_Ba.shape)], axis=2
    ) if gains.shape[1] > pool.bc.shape[2] else pool.bc
    return pool.scenario.A + np.einsum("msn,mnu->msu", bfull, gains)


def second_moment_operator(P: ArrayLike, pool: SamplePool) -> Array:
    """``E[Xi kron Xi]`` over the controller atoms."""
    xi = _xi_all(P, pool)
    S = xi.shape[1]
    return np.einsum("m,mab,mcd->acbd", pool.bc_w, xi, xi, optimize=True).reshape(S * S, S * S)


# ---------------------------------------------------------------------------
# switching time of the achievable policy


def alpha(T0: int, pool: SamplePool, P_star: ArrayLike) -> float:
    """``max(||x0||^2, ||N||^2) * Tr(sum_{i<T0} E[Xi kron Xi]^i)``."""
    sc = pool.scenario
    scale = max(float(np.dot(sc.x_init, sc.x_init)), float(np.linalg.norm(sc.noise_cov(), 2)) ** 2)
    op = second_moment_operator(P_star, pool)
    power = np.eye(op.shape[0])
    total = 0.0
    for _ in range(int(T0)):
        total += float(np.trace(power))
        if not math.isfinite(total) or total > 1e300:
            return math.inf
        power = power @ op
    return scale * total


def extend_f_sequence(pool: SamplePool, f_seq: list[Array], upto: int) -> list[Array]:
    if not f_seq:
        f_seq.append(symmetrize(pool.scenario.Q))
    while len(f_seq) <= upto:
        f_seq.append(f_operator(f_seq[-1], pool))
    return f_seq


def beta(
    T0: int, pool: SamplePool, P_star: ArrayLike, f_seq: list[Array] | None = None, cap: int = BETA_CAP
) -> int:
    """Smallest ``beta >= T0`` with ``||P* - f^{beta - T0}(Q)|| alpha(T0) < 1``, else ``UNBOUNDED``."""
    a = alpha(T0, pool, P_star)
    if not math.isfinite(a):
        return UNBOUNDED
    p_star = symmetrize(P_star)
    seq = [] if f_seq is None else f_seq
    for j in range(cap + 1):
        extend_f_sequence(pool, seq, j)
        if np.linalg.norm(p_star - seq[j], 2) * a < 1.0:
            return T0 + j
        if j and np.array_equal(seq[j], seq[j - 1]):
            return UNBOUNDED
    return UNBOUNDED


# ---------------------------------------------------------------------------
# policies


@dataclass(frozen=True)
class PolicySpec:
    """A linear feedback policy over a horizon.

    ``matrices`` holds the Riccati matrices whose gains are used and
    ``schedule(K)`` maps slots to indices of ``matrices``. ``kind`` is
    ``"steady"``, ``"saddle"`` or ``"custom"``; custom policies carry a fixed
    gain ``custom_gain`` of shape (nc + na, S) applied regardless of the channel.
    """

    kind: str
    matrices: tuple[Array, ...] = ()
    T0: int = 0
    beta: int = 0
    alpha: float = float("nan")
    custom_gain: Array | None = None

    def schedule(self, K: int) -> Array:
        if self.kind == "saddle":
            if K > self.beta:
                raise ValueError(f"saddle policy covers {self.beta} slots, requested {K}")
            k = np.arange(K)
            # index 0 is P*, index 1 + j is f^j(Q)
            return np.where(k < self.T0, 0, 1 + (self.beta - k - 1)).astype(np.int64)
        return np.zeros(K, dtype=np.int64)

    def gain_sets(self, pool: SamplePool) -> Array:
        if self.kind == "custom":
            assert self.custom_gain is not None
            g = np.asarray(self.custom_gain, dtype=float)
            return np.ascontiguousarray(np.broadcast_to(g, (1, pool.bc.shape[0]) + g.shape))
        return np.ascontiguousarray(np.stack([feedback_gains(p, pool) for p in self.matrices]))


def steady_policy(P: ArrayLike) -> PolicySpec:
    return PolicySpec("steady", (symmetrize(P),))


def build_saddle_policy(T0: int, solution: MgareSolution, pool: SamplePool) -> PolicySpec:
    """Steady gains from ``P*`` before ``T0``; ``f^{beta-k-1}(Q)`` on ``T0 <= k < beta``."""
    if not solution.verdict.exists:
        raise ValueError(f"saddle policy needs an existing fixed point, got {solution.verdict}")
    seq: list[Array] = []
    b = beta(T0, pool, solution.P_star, seq)
    if b == UNBOUNDED:
        raise ValueError(f"beta({T0}) is unbounded for this instance")
    extend_f_sequence(pool, seq, max(b - T0 - 1, 0))
    mats = (solution.P_star,) + tuple(seq[: max(b - T0, 1)])
    return PolicySpec("saddle", mats, T0=T0, beta=b, alpha=alpha(T0, pool, solution.P_star))


# ---------------------------------------------------------------------------
# simulation


@dataclass
class PolicyTrace:
    states: Array
    controls: Array
    stage_costs: Array
    nc: int
    seed: int

    @property
    def u_c(self) -> Array:
        return self.controls[..., : self.nc]

    @property
    def u_a(self) -> Array:
        return self.controls[..., self.nc :]

    def header(self) -> list[str]:
        S, n = self.states.shape[2], self.controls.shape[2]
        return (
            ["run", "k"]
            + [f"x{i}" for i in range(S)]
            + [f"uc{i}" for i in range(self.nc)]
            + [f"ua{i}" for i in range(n - self.nc)]
            + ["stage_cost"]
        )

    def to_csv(self, path: str | Path) -> None:
        """One row per (run, slot): the state before the slot, both controls, the stage cost."""
        R, K = self.stage_costs.shape
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            for r in range(R):
                for k in range(K):
                    row = [r, k] + [repr(float(v)) for v in self.states[r, k]]
                    row += [repr(float(v)) for v in self.controls[r, k]] + [repr(float(self.stage_costs[r, k]))]
                    w.writerow(row)


@dataclass
class CostReport:
    empirical_J: float
    standard_error: float
    analytic_J: float
    horizon: int
    runs: int
    burn_in: int
    overflow_runs: int
    run_means: Array = field(repr=False, default_factory=lambda: np.zeros(0))

    def to_dict(self) -> dict:
        return {
            "empirical_J": self.empirical_J,
            "standard_error": self.standard_error,
            "analytic_J": self.analytic_J,
            "horizon": self.horizon,
            "runs": self.runs,
            "burn_in": self.burn_in,
            "overflow_runs": self.overflow_runs,
        }


def _draw_inputs(pool: SamplePool, K: int, runs: int, seed: int) -> tuple[Array, Array, Array]:
    """Per-run atom indices and additive noise; run ``r`` depends only on ``(seed, r)``."""
    S = pool.S
    root = _psd_root(pool.scenario.noise_cov())
    cw_c = np.cumsum(pool.bc_w)
    cw_a = np.cumsum(pool.ba_w)
    bc_idx = np.empty((runs, K), dtype=np.int64)
    ba_idx = np.empty((runs, K), dtype=np.int64)
    noise = np.empty((runs, K, S))
    for r in range(runs):
        rng = np.random.default_rng([seed, _STREAM_SIM, r])
        bc_idx[r] = np.minimum(np.searchsorted(cw_c, rng.random(K) * cw_c[-1], side="right"), len(cw_c) - 1)
        ba_idx[r] = np.minimum(np.searchsorted(cw_a, rng.random(K) * cw_a[-1], side="right"), len(cw_a) - 1)
        noise[r] = rng.standard_normal((K, S)) @ root.T
    return bc_idx, ba_idx, noise


def _psd_root(m: Array) -> Array:
    eig, vec = np.linalg.eigh(symmetrize(m))
    return vec * np.sqrt(np.clip(eig, 0.0, None))


def run_closed_loop(
    policy: PolicySpec,
    pool: SamplePool,
    K: int,
    runs: int,
    seed: int = 0,
    x0: ArrayLike | None = None,
    gain_noise: Array | None = None,
    record: bool = False,
    backend: str | None = None,
) -> tuple[Array, Array, Array, Array]:
    """Step the closed loop; returns ``(stage_costs, overflow_flags, states, controls)``.

    ``gain_noise`` of shape (runs, nc + na, S) is added to the feedback gain of
    each run for the whole horizon.
    """
    sc = pool.scenario
    gains = policy.gain_sets(pool)
    n = gains.shape[2]
    nc = pool.bc.shape[2]
    sched = policy.schedule(K)
    bc_idx, ba_idx, noise = _draw_inputs(pool, K, runs, seed)
    start = sc.x_init if x0 is None else np.asarray(x0, dtype=float)
    x_init = np.ascontiguousarray(np.broadcast_to(start, (runs, sc.S)), dtype=float)
    delta = np.zeros((runs, n, sc.S)) if gain_noise is None else np.ascontiguousarray(gain_noise, dtype=float)
    na = n - nc
    ra = sc.Ra if (na and sc.Ra is not None) else np.zeros((0, 0))
    ba = np.ascontiguousarray(pool.ba if na else np.zeros((pool.ba.shape[0], sc.S, 0)))
    costs = np.empty((runs, K))
    flags = np.zeros(runs, dtype=np.uint8)
    states = np.empty((runs, K + 1, sc.S) if record else (0, 0, 0))
    controls = np.empty((runs, K, n) if record else (0, 0, 0))
    fn = simkernel.run if backend is None else _backend(backend)
    fn(
        np.ascontiguousarray(sc.A), np.ascontiguousarray(sc.Q), np.ascontiguousarray(sc.Rc),
        np.ascontiguousarray(ra), gains, sched, np.ascontiguousarray(pool.bc), ba,
        bc_idx, ba_idx, noise, x_init, delta, nc, STATE_CAP, costs, flags, states, controls,
        simkernel.thread_count(),
    )
    return costs, flags.astype(bool), states, controls


def _backend(name: str):
    if name == "numpy":
        from . import _sim_numpy

        return _sim_numpy.run
    if name == "cython":
        from . import _sim_kernel  # type: ignore[attr-defined]

        return _sim_kernel.run
    raise ValueError(f"unknown backend {name!r}")


def game_value(P_star: ArrayLike, pool: SamplePool) -> float:
    """``Tr(P* N)`` with ``N = W + sum_i B_i V B_i^T``."""
    return float(np.trace(symmetrize(P_star) @ pool.scenario.noise_cov()))


def simulate(
    policy: PolicySpec,
    pool: SamplePool,
    K: int,
    runs: int,
    seed: int = 0,
    burn_in: int | None = None,
    analytic_J: float = float("nan"),
    trace_runs: int = 0,
    x0: ArrayLike | None = None,
) -> tuple[PolicyTrace | None, CostReport]:
    """Average stage cost per run after ``burn_in`` slots (default ``K // 10``)."""
    burn = K // 10 if burn_in is None else int(burn_in)
    costs, flags, states, controls = run_closed_loop(policy, pool, K, runs, seed, x0, record=trace_runs > 0)
    ok = ~flags
    means = costs[ok, burn:].mean(axis=1) if ok.any() else np.zeros(0)
    emp = float(means.mean()) if means.size else float("nan")
    se = float(means.std(ddof=1) / math.sqrt(means.size)) if means.size > 1 else float("nan")
    report = CostReport(emp, se, analytic_J, K, runs, burn, int(flags.sum()), means)
    trace = None
    if trace_runs:
        t = min(trace_runs, runs)
        trace = PolicyTrace(states[:t], controls[:t], costs[:t], pool.bc.shape[2], seed)
    return trace, report


# ---------------------------------------------------------------------------
# analytic values and tests


class ConcavityFailure(ArithmeticError):
    def __init__(self, k: int):
        super().__init__(f"R^a - E[B^a^T f^{k}(Q) B^a] is not positive definite (k = {k})")
        self.k = k


def analytic_JK(K: int, pool: SamplePool, x0: ArrayLike | None = None) -> float:
    """``(1/K) ||x0||^2_{f^K(Q) - Q} + Tr((1/K) sum_{k<K} f^k(Q) N)``."""
    seq = [symmetrize(pool.scenario.Q)]
    for k in range(K):
        if not concavity_indicator(seq[-1], pool):
            raise ConcavityFailure(k)
        seq.append(f_operator(seq[-1], pool))
    x = pool.scenario.x_init if x0 is None else np.asarray(x0, dtype=float)
    n = pool.scenario.noise_cov()
    transient = float(x @ (seq[K] - seq[0]) @ x)
    return (transient + float(sum(np.trace(p @ n) for p in seq[:K]))) / K


@dataclass
class DeviationResult:
    controller_dev_delta: float
    controller_se: float
    attacker_dev_delta: float
    attacker_se: float
    ne_cost: float
    scale: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def saddle_deviation_test(
    solution: MgareSolution,
    pool: SamplePool,
    K: int = 4000,
    runs: int = 64,
    scale: float = 0.1,
    seed: int = 0,
    burn_in: int | None = None,
) -> DeviationResult:
    """Unilateral gain deviations with common random numbers.

    Each run draws a fixed zero-mean Gaussian perturbation of one player's
    feedback gain, scaled by ``scale`` times the root-mean-square gain entry.
    The reported deltas are run-paired differences against the equilibrium
    cost, so channel and noise randomness cancels to first order.
    """
    policy = steady_policy(solution.P_star)
    gains = feedback_gains(solution.P_star, pool)
    nc = pool.bc.shape[2]
    n, S = gains.shape[1], gains.shape[2]
    burn = K // 10 if burn_in is None else burn_in
    rng = np.random.default_rng([seed, 13])
    base_c, _, _, _ = run_closed_loop(policy, pool, K, runs, seed)
    base = base_c[:, burn:].mean(axis=1)

    def deviate(rows: slice) -> tuple[float, float]:
        block = gains[:, rows]
        if block.size == 0:
            return 0.0, 0.0
        rms = float(np.sqrt(np.einsum("m,mij->", pool.bc_w, block**2) / (block.shape[1] * S)))
        noise = np.zeros((runs, n, S))
        noise[:, rows] = scale * rms * rng.standard_normal((runs, block.shape[1], S))
        c, _, _, _ = run_closed_loop(policy, pool, K, runs, seed, gain_noise=noise)
        d = c[:, burn:].mean(axis=1) - base
        d = np.where(np.isfinite(d), d, np.inf)
        se = float(d.std(ddof=1) / math.sqrt(runs)) if np.all(np.isfinite(d)) else float("inf")
        return float(d.mean()), se

    dc, sc_ = deviate(slice(0, nc))
    da, sa = deviate(slice(nc, n))
    return DeviationResult(dc, sc_, da, sa, float(base.mean()), scale)


@dataclass
class StabilityReport:
    stabilizing: bool
    rho: float
    rho_with_attacker_noise: float


def ms_stabilizing_check(solution: MgareSolution, pool: SamplePool) -> StabilityReport:
    """``rho(E[Xi kron Xi]) < 1``.

    The second radius also averages over the realized ``B^a`` that the
    attacker's gain multiplies in the simulated plant.
    """
    p = solution.P_star
    rho = spectral_radius(second_moment_operator(p, pool))
    gains = feedback_gains(p, pool)
    nc = pool.bc.shape[2]
    a = pool.scenario.A
    S = a.shape[0]
    m_c = a + np.einsum("msc,mcu->msu", pool.bc, gains[:, :nc])
    if gains.shape[1] > nc:
        # E over (Bc, Ba) of (Mc + Ba Ka) kron (Mc + Ba Ka); Ka depends on the Bc atom.
        ka = gains[:, nc:]
        e_ba = pool.E_Ba
        second_ba = np.einsum("q,qsa,qtb->satb", pool.ba_w, pool.ba, pool.ba)
        n_mean = np.einsum("sa,mau->msu", e_ba, ka)
        w = pool.bc_w
        term = np.einsum("m,mab,mcd->acbd", w, m_c, m_c, optimize=True)
        term += np.einsum("m,mab,mcd->acbd", w, m_c, n_mean, optimize=True)
        term += np.einsum("m,mab,mcd->acbd", w, n_mean, m_c, optimize=True)
        term += np.einsum("m,satb,mau,mbv->sutv", w, second_ba, ka, ka, optimize=True)
        full = term.reshape(S * S, S * S)
    else:
        full = np.einsum("m,mab,mcd->acbd", pool.bc_w, m_c, m_c, optimize=True).reshape(S * S, S * S)
    rho_full = spectral_radius(full)
    return StabilityReport(rho < 1.0, rho, rho_full)


def fixed_linear_policy(gain: ArrayLike) -> PolicySpec:
    return PolicySpec("custom", custom_gain=np.asarray(gain, dtype=float))


def expected_cost_fixed_policy(
    pool: SamplePool, gain: ArrayLike, K: int, x0: ArrayLike, exact_ba: bool = True
) -> float:
    """Exact ``J_K`` of a fixed linear policy by propagating the state second moment.

    ``X_{k+1} = E[M X_k M^T] + N`` with ``M = A + B^c K_c + B^a K_a`` averaged
    over all atoms of both sides.
    """
    sc = pool.scenario
    g = np.asarray(gain, dtype=float)
    nc = pool.bc.shape[2]
    kc, ka = g[:nc], g[nc:]
    a = sc.A
    mats = []
    weights = []
    for wc, bc in zip(pool.bc_w, pool.bc):
        for wa, ba in zip(pool.ba_w, pool.ba):
            mats.append(a + bc @ kc + (ba @ ka if ka.size else 0.0))
            weights.append(wc * wa)
    n = sc.noise_cov()
    x = np.outer(x0, x0)
    ra = sc.Ra if ka.size else np.zeros((0, 0))
    stage_u = kc.T @ sc.Rc @ kc - (ka.T @ ra @ ka if ka.size else 0.0)
    total = 0.0
    for _ in range(K):
        nxt = sum(w * m @ x @ m.T for w, m in zip(weights, mats)) + n
        total += float(np.trace(sc.Q @ nxt) + np.trace(stage_u @ x))
        x = nxt
    return total / K



@dataclass
class CostForms:
    direct: float
    upper: float
    lower: float


def _second_moments(pool: SamplePool, gain: Array, K: int, x0: Array) -> list[Array]:
    sc = pool.scenario
    nc = pool.bc.shape[2]
    kc, ka = gain[:nc], gain[nc:]
    n = sc.noise_cov()
    x = np.outer(x0, x0)
    out = [x]
    for _ in range(K):
        acc = np.zeros_like(x)
        for wc, bc in zip(pool.bc_w, pool.bc):
            for wa, ba in zip(pool.ba_w, pool.ba):
                m = sc.A + bc @ kc + (ba @ ka if ka.size else 0.0)
                acc += wc * wa * m @ x @ m.T
        x = acc + n
        out.append(x)
    return out


def completed_square_forms(pool: SamplePool, gain: ArrayLike, K: int, x0: ArrayLike) -> CostForms:
    """``J_K`` of a fixed linear policy by direct propagation and by both completed-square forms.

    With ``P_k = f^{K-k-1}(Q)`` and ``d = u - u*(P_k)`` the stage terms are
    ``||d_c||^2_{Phi/(-Phi3)} - ||d_a - Phi3^{-1} Phi2^T d_c||^2_{Phi3}`` (upper) and
    ``||d_c + Phi1^{-1} Phi2 d_a||^2_{Phi1} - ||d_a||^2_{-(Phi/Phi1)}`` (lower).
    All expectations are exact sums over the pool atoms.
    """
    g = np.asarray(gain, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    sc = pool.scenario
    nc = pool.bc.shape[2]
    moments = _second_moments(pool, g, K, x0)
    direct = expected_cost_fixed_policy(pool, g, K, x0)
    seq = extend_f_sequence(pool, [], K)
    n = sc.noise_cov()
    base = float(x0 @ (seq[K] - seq[0]) @ x0) + sum(float(np.trace(seq[j] @ n)) for j in range(K))
    upper = lower = base
    for k in range(K):
        p = seq[K - k - 1]
        if not concavity_indicator(p, pool):
            raise ConcavityFailure(K - k - 1)
        star = feedback_gains(p, pool)
        X = moments[k]
        for w, bc, ks in zip(pool.bc_w, pool.bc, star):
            blocks = phi_blocks(p, bc, pool)
            d = g - ks
            dc, da = d[:nc], d[nc:]
            p1, p2, p3 = blocks.phi1, blocks.phi2, blocks.phi3
            if da.size:
                schur_c = p1 + p2 @ np.linalg.solve(p3, p2.T)
                resid_a = da - np.linalg.solve(p3, p2.T @ dc)
                up = np.trace(dc.T @ schur_c @ dc @ X) - np.trace(resid_a.T @ p3 @ resid_a @ X)
                schur_a = -p3 - p2.T @ np.linalg.solve(p1, p2)
                resid_c = dc + np.linalg.solve(p1, p2 @ da)
                lo = np.trace(resid_c.T @ p1 @ resid_c @ X) - np.trace(da.T @ (-schur_a) @ da @ X)
            else:
                up = lo = np.trace(dc.T @ p1 @ dc @ X)
            upper += w * float(up)
            lower += w * float(lo)
    return CostForms(float(direct), float(upper) / K, float(lower) / K)
