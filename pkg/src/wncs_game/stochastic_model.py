"""Scenario descriptions and the frozen sample pool behind every expectation.

A :class:`Scenario` describes the plant, the cost weights and, for every
(player, actuator) pair, the distribution of the MIMO channel matrix
``H_{j,i}``. Player-level Bernoulli access gates sit on top of the link
models: ``mode="shared"`` uses one gate for every player of a side and
``mode="independent"`` gives each player its own gate.

:func:`build_pool` turns a scenario into a :class:`SamplePool`. The pool keeps
the controller gains ``B^c`` and attacker gains ``B^a`` as two independent
weighted atom lists. Finite-support factors (gates and finite link laws) are
always enumerated with their exact probabilities. Continuous factors (Gaussian
links) are replaced by ``M`` seeded draws. Atom ``i`` of a sampled pool comes
from the counter ``(seed, stream, i // CHUNK)``, so pools are reproducible and
a smaller pool is a prefix of a larger one.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Sequence, Union

import numpy as np
from numpy.typing import ArrayLike

from .matrix_core import Array, as_matrix, is_pd, is_psd, symmetrize

CHUNK = 1024
M_CAP = 4096
_STREAM_BC = 1
_STREAM_BA = 2


class ScenarioError(ValueError):
    """Raised for inconsistent or malformed scenario descriptions."""


class PoolError(ValueError):
    """Raised when a pool cannot be built as requested."""


# ---------------------------------------------------------------------------
# channel models


@dataclass(frozen=True)
class FiniteSupport:
    atoms: tuple[Array, ...]
    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.atoms) != len(self.probs) or not self.atoms:
            raise ScenarioError("finite support needs matching non-empty atoms and probs")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-12:
            raise ScenarioError("finite-support probabilities must form a simplex")
        shapes = {np.shape(a) for a in self.atoms}
        if len(shapes) != 1:
            raise ScenarioError("finite-support atoms must share one shape")

    @property
    def shape(self) -> tuple[int, int]:
        return np.shape(self.atoms[0])  # type: ignore[return-value]


@dataclass(frozen=True)
class GaussianIID:
    """Entries independent Gaussian with the given mean and per-entry variance."""

    mean: Array
    var: Array

    def __post_init__(self) -> None:
        if np.any(np.asarray(self.var) < 0):
            raise ScenarioError("Gaussian variances must be non-negative")
        if np.shape(self.var) != np.shape(self.mean):
            raise ScenarioError("Gaussian mean and variance shapes differ")

    @property
    def shape(self) -> tuple[int, int]:
        return np.shape(self.mean)  # type: ignore[return-value]


@dataclass(frozen=True)
class BernoulliGated:
    p: float
    inner: "ChannelModel"

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ScenarioError("gate probability must lie in [0, 1]")

    @property
    def shape(self) -> tuple[int, int]:
        return self.inner.shape


ChannelModel = Union[FiniteSupport, GaussianIID, BernoulliGated]


def finite(atoms: Sequence[ArrayLike], probs: Sequence[float]) -> FiniteSupport:
    return FiniteSupport(tuple(as_matrix(a) for a in atoms), tuple(float(p) for p in probs))


def deterministic(h: ArrayLike) -> FiniteSupport:
    return finite([h], [1.0])


def gaussian(mean: ArrayLike, var: ArrayLike | float) -> GaussianIID:
    m = as_matrix(mean)
    v = np.broadcast_to(np.asarray(var, dtype=float), m.shape).copy()
    return GaussianIID(m, v)


def _is_discrete(model: ChannelModel) -> bool:
    if isinstance(model, FiniteSupport):
        return True
    if isinstance(model, GaussianIID):
        return bool(np.all(model.var == 0))
    return _is_discrete(model.inner)


def _support(model: ChannelModel) -> list[tuple[Array, float]]:
    if isinstance(model, FiniteSupport):
        return list(zip(model.atoms, model.probs))
    if isinstance(model, GaussianIID):
        return [(model.mean, 1.0)]
    inner = [(h, model.p * w) for h, w in _support(model.inner)]
    return inner + [(np.zeros(model.shape), 1.0 - model.p)]


def _draw(model: ChannelModel, rng: np.random.Generator, n: int) -> Array:
    """Draw ``n`` realizations of ``model`` as an array of shape (n, rows, cols)."""
    rows, cols = model.shape
    if isinstance(model, GaussianIID):
        z = rng.standard_normal((n, rows, cols))
        return model.mean + np.sqrt(model.var) * z
    if isinstance(model, FiniteSupport):
        idx = rng.choice(len(model.atoms), size=n, p=np.asarray(model.probs))
        return np.stack(model.atoms)[idx]
    on = rng.random(n) < model.p
    inner = _draw(model.inner, rng, n)
    return inner * on[:, None, None]


# ---------------------------------------------------------------------------
# scenario


@dataclass(frozen=True)
class PlayerGates:
    """Bernoulli access gates for the players of one side."""

    probs: tuple[float, ...]
    mode: str = "independent"

    def __post_init__(self) -> None:
        if self.mode not in ("independent", "shared"):
            raise ScenarioError(f"unknown gate mode {self.mode!r}")
        if any(not 0.0 <= p <= 1.0 for p in self.probs):
            raise ScenarioError("gate probabilities must lie in [0, 1]")
        if self.mode == "shared" and len(set(self.probs)) > 1:
            raise ScenarioError("a shared gate needs one common probability")

    def patterns(self) -> list[tuple[tuple[int, ...], float]]:
        """All on/off patterns with their probabilities (zero-probability ones dropped)."""
        n = len(self.probs)
        if self.mode == "shared":
            p = self.probs[0]
            out = [((1,) * n, p), ((0,) * n, 1.0 - p)]
        else:
            out = []
            for bits in itertools.product((1, 0), repeat=n):
                w = float(np.prod([p if b else 1.0 - p for b, p in zip(bits, self.probs)]))
                out.append((bits, w))
        return [(b, w) for b, w in out if w > 0.0]


@dataclass(frozen=True)
class Scenario:
    """One problem instance of the zero-sum game.

    ``controller_links[j][i]`` models ``H^c_{j,i}`` (N_r x Nt_c) and
    ``attacker_links[l][i]`` models ``H^a_{l,i}`` (N_r x Nt_a). ``Ra`` may be
    ``None`` when it is meant to be chosen by the certifier.
    """

    A: Array
    B_list: tuple[Array, ...]
    Q: Array
    Rc: Array
    Ra: Array | None
    W: Array
    V: Array
    controller_links: tuple[tuple[ChannelModel, ...], ...]
    attacker_links: tuple[tuple[ChannelModel, ...], ...]
    controller_gates: PlayerGates | None = None
    attacker_gates: PlayerGates | None = None
    x0: Array | None = None
    name: str = "scenario"
    seed: int = 0
    samples: int = 2000

    def __post_init__(self) -> None:
        self.validate()

    # derived dimensions
    @property
    def S(self) -> int:
        return self.A.shape[0]

    @property
    def Nr(self) -> int:
        return self.B_list[0].shape[1]

    @property
    def n_actuators(self) -> int:
        return len(self.B_list)

    @property
    def n_controllers(self) -> int:
        return len(self.controller_links)

    @property
    def n_attackers(self) -> int:
        return len(self.attacker_links)

    @property
    def Nt_c(self) -> int:
        return self.controller_links[0][0].shape[1]

    @property
    def Nt_a(self) -> int:
        return self.attacker_links[0][0].shape[1] if self.attacker_links else 0

    @property
    def nc(self) -> int:
        return self.Nt_c * self.n_controllers

    @property
    def na(self) -> int:
        return self.Nt_a * self.n_attackers

    @property
    def x_init(self) -> Array:
        return np.zeros(self.S) if self.x0 is None else np.asarray(self.x0, dtype=float)

    def noise_cov(self) -> Array:
        """Total additive noise covariance ``W + sum_i B_i V B_i^T``."""
        n = self.W.copy()
        for b in self.B_list:
            n = n + b @ self.V @ b.T
        return symmetrize(n)

    def with_Ra(self, Ra: ArrayLike) -> "Scenario":
        return replace(self, Ra=symmetrize(Ra))

    def validate(self) -> None:
        S = self.A.shape[0]
        if self.A.shape != (S, S):
            raise ScenarioError("A: must be square")
        if not self.B_list:
            raise ScenarioError("B: at least one actuator gain is required")
        nr = self.B_list[0].shape[1]
        for i, b in enumerate(self.B_list):
            if b.shape != (S, nr):
                raise ScenarioError(f"B[{i}]: expected shape {(S, nr)}, got {b.shape}")
        for key, m, shape in (("Q", self.Q, (S, S)), ("W", self.W, (S, S)), ("V", self.V, (nr, nr))):
            if m.shape != shape:
                raise ScenarioError(f"{key}: expected shape {shape}, got {m.shape}")
        if not self.controller_links:
            raise ScenarioError("controller_links: at least one controller is required")
        for side, grid in (("controller_links", self.controller_links), ("attacker_links", self.attacker_links)):
            if not grid:
                continue
            nt = grid[0][0].shape[1]
            for j, row in enumerate(grid):
                if len(row) != len(self.B_list):
                    raise ScenarioError(f"{side}[{j}]: expected {len(self.B_list)} links, got {len(row)}")
                for i, model in enumerate(row):
                    if tuple(model.shape) != (nr, nt):
                        raise ScenarioError(f"{side}[{j}][{i}]: expected shape {(nr, nt)}, got {model.shape}")
        nc = grid_cols(self.controller_links)
        na = grid_cols(self.attacker_links)
        if self.Rc.shape != (nc, nc):
            raise ScenarioError(f"Rc: expected shape {(nc, nc)}, got {self.Rc.shape}")
        if self.Ra is not None and self.Ra.shape != (na, na):
            raise ScenarioError(f"Ra: expected shape {(na, na)}, got {self.Ra.shape}")
        if not is_pd(self.Q):
            raise ScenarioError("Q: must be positive definite")
        if not is_pd(self.Rc):
            raise ScenarioError("Rc: must be positive definite")
        if self.Ra is not None and na and not is_pd(self.Ra):
            raise ScenarioError("Ra: must be positive definite")
        if not is_psd(self.W) or not is_psd(self.V):
            raise ScenarioError("W, V: must be positive semidefinite")
        for side, gates, grid in (
            ("controller_gates", self.controller_gates, self.controller_links),
            ("attacker_gates", self.attacker_gates, self.attacker_links),
        ):
            if gates is not None and len(gates.probs) != len(grid):
                raise ScenarioError(f"{side}: expected {len(grid)} probabilities")
        if self.x0 is not None and np.shape(self.x0) != (S,):
            raise ScenarioError(f"x0: expected length {S}")
        if self.samples < 1:
            raise ScenarioError("samples: must be at least 1")


def grid_cols(grid: Sequence[Sequence[ChannelModel]]) -> int:
    return sum(row[0].shape[1] for row in grid) if grid else 0


def make_scenario(
    A: ArrayLike,
    B_list: Sequence[ArrayLike],
    Q: ArrayLike,
    Rc: ArrayLike,
    Ra: ArrayLike | None,
    controller_links: Sequence[Sequence[ChannelModel]],
    attacker_links: Sequence[Sequence[ChannelModel]] = (),
    W: ArrayLike | None = None,
    V: ArrayLike | None = None,
    controller_gates: PlayerGates | None = None,
    attacker_gates: PlayerGates | None = None,
    x0: ArrayLike | None = None,
    name: str = "scenario",
    seed: int = 0,
    samples: int = 2000,
) -> Scenario:
    """Convenience constructor that coerces array-likes and fills default noise."""
    a = as_matrix(A)
    bs = tuple(as_matrix(b) for b in B_list)
    S, nr = a.shape[0], bs[0].shape[1]
    if Ra is None and not attacker_links:
        Ra = np.zeros((0, 0))
    return Scenario(
        A=a,
        B_list=bs,
        Q=symmetrize(Q),
        Rc=symmetrize(Rc),
        Ra=None if Ra is None else (np.zeros((0, 0)) if np.size(Ra) == 0 else symmetrize(Ra)),
        W=np.zeros((S, S)) if W is None else symmetrize(W),
        V=np.zeros((nr, nr)) if V is None else symmetrize(V),
        controller_links=tuple(tuple(r) for r in controller_links),
        attacker_links=tuple(tuple(r) for r in attacker_links),
        controller_gates=controller_gates,
        attacker_gates=attacker_gates,
        x0=None if x0 is None else np.asarray(x0, dtype=float).reshape(-1),
        name=name,
        seed=int(seed),
        samples=int(samples),
    )


# ---------------------------------------------------------------------------
# gain assembly


def _assemble(B_list: Sequence[Array], H_grid: Sequence[Sequence[Array]]) -> Array:
    blocks = []
    for row in H_grid:
        if len(row) != len(B_list):
            raise ScenarioError(f"expected {len(B_list)} links per player, got {len(row)}")
        acc = np.zeros((B_list[0].shape[0], np.shape(row[0])[1]))
        for b, h in zip(B_list, row):
            h = as_matrix(h)
            if h.shape[0] != b.shape[1]:
                raise ScenarioError(f"channel has {h.shape[0]} rows, actuator expects {b.shape[1]}")
            acc = acc + b @ h
        blocks.append(acc)
    if not blocks:
        return np.zeros((B_list[0].shape[0], 0))
    return np.hstack(blocks)


def assemble_Bc(B_list: Sequence[ArrayLike], H_grid: Sequence[Sequence[ArrayLike]]) -> Array:
    """Controller gain: column block ``j`` is ``sum_i B_i H^c_{j,i}``."""
    return _assemble([as_matrix(b) for b in B_list], H_grid)  # type: ignore[arg-type]


def assemble_Ba(B_list: Sequence[ArrayLike], H_grid: Sequence[Sequence[ArrayLike]]) -> Array:
    """Attacker gain: column block ``l`` is ``sum_i B_i H^a_{l,i}``."""
    return _assemble([as_matrix(b) for b in B_list], H_grid)  # type: ignore[arg-type]


# ---------------------------------------------------------------------------
# sample pool


@dataclass(frozen=True)
class SamplePool:
    """Frozen weighted atoms of ``B^c`` and ``B^a`` for one scenario.

    ``bc`` has shape (Mc, S, nc) and ``ba`` has shape (Ma, S, na). Controller
    and attacker channels are independent, so joint expectations factor into
    a sum over ``bc`` atoms times moments over ``ba`` atoms.
    """

    scenario: Scenario
    seed: int
    M: int
    bc: Array
    bc_w: Array
    ba: Array
    ba_w: Array
    exact: bool
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        for arr in (self.bc, self.bc_w, self.ba, self.ba_w):
            arr.setflags(write=False)

    @property
    def S(self) -> int:
        return self.scenario.S

    @property
    def bc_samples(self) -> Array:
        return self.bc

    @property
    def ba_samples(self) -> Array:
        return self.ba

    def with_Ra(self, Ra: ArrayLike) -> "SamplePool":
        """Same atoms, different attacker weight (shares the frozen arrays)."""
        pool = SamplePool(self.scenario.with_Ra(Ra), self.seed, self.M, self.bc, self.bc_w, self.ba, self.ba_w, self.exact)
        for key in ("E_Ba", "sigma2", "svd", "M2_ba"):
            if key in self._cache:
                pool._cache[key] = self._cache[key]
        return pool

    @property
    def Ra(self) -> Array:
        if self.scenario.Ra is None:
            raise ScenarioError("Ra: not set for this scenario")
        return self.scenario.Ra

    @property
    def E_Ba(self) -> Array:
        if "E_Ba" not in self._cache:
            self._cache["E_Ba"] = np.einsum("m,mij->ij", self.ba_w, self.ba)
        return self._cache["E_Ba"]


def _side_atoms(
    B_list: Sequence[Array],
    grid: Sequence[Sequence[ChannelModel]],
    gates: PlayerGates | None,
    seed: int,
    stream: int,
    M: int,
    force_exact: bool,
    m_cap: int,
) -> tuple[Array, Array, bool]:
    S = B_list[0].shape[0]
    if not grid:
        return np.zeros((1, S, 0)), np.ones(1), True
    widths = [row[0].shape[1] for row in grid]
    offsets = np.concatenate([[0], np.cumsum(widths)])
    links = [m for row in grid for m in row]
    discrete = all(_is_discrete(m) for m in links)
    patterns = gates.patterns() if gates is not None else [((1,) * len(grid), 1.0)]

    if discrete:
        supports = [_support(m) for m in links]
        size = int(np.prod([len(s) for s in supports])) * len(patterns)
        if size <= m_cap:
            blocks: list[Array] = []
            weights: list[float] = []
            for combo in itertools.product(*supports):
                hs = [h for h, _ in combo]
                w = float(np.prod([p for _, p in combo]))
                if w == 0.0:
                    continue
                rows = [hs[j * len(B_list) : (j + 1) * len(B_list)] for j in range(len(grid))]
                blocks.append(_assemble(B_list, rows))
                weights.append(w)
            ungated = np.stack(blocks)
            base_w = np.asarray(weights)
            atoms, wts = _apply_patterns(ungated, base_w, patterns, offsets)
            return atoms, wts, True
        if force_exact:
            raise PoolError(f"joint support of size {size} exceeds the exact-enumeration cap {m_cap}")

    ungated = np.empty((M, S, offsets[-1]))
    for start in range(0, M, CHUNK):
        n = min(CHUNK, M - start)
        rng = np.random.default_rng([seed, stream, start // CHUNK])
        draws = [_draw(m, rng, n) for m in links]
        for j in range(len(grid)):
            acc = np.zeros((n, S, widths[j]))
            for i, b in enumerate(B_list):
                acc += np.einsum("sr,nrc->nsc", b, draws[j * len(B_list) + i])
            ungated[start : start + n, :, offsets[j] : offsets[j + 1]] = acc
    atoms, wts = _apply_patterns(ungated, np.full(M, 1.0 / M), patterns, offsets)
    return atoms, wts, False


def _apply_patterns(
    ungated: Array, base_w: Array, patterns: list[tuple[tuple[int, ...], float]], offsets: Array
) -> tuple[Array, Array]:
    atoms: list[Array] = []
    weights: list[Array] = []
    for bits, pw in patterns:
        if not any(bits):
            atoms.append(np.zeros((1,) + ungated.shape[1:]))
            weights.append(np.array([pw]))
            continue
        mask = np.zeros(ungated.shape[2])
        for j, b in enumerate(bits):
            mask[offsets[j] : offsets[j + 1]] = b
        atoms.append(ungated * mask)
        weights.append(base_w * pw)
    return np.concatenate(atoms), np.concatenate(weights)


def build_pool(
    scenario: Scenario,
    seed: int | None = None,
    M: int | None = None,
    force_exact: bool = False,
    m_cap: int = M_CAP,
) -> SamplePool:
    """Build the frozen pool of channel realizations used by all expectations."""
    seed = scenario.seed if seed is None else int(seed)
    M = scenario.samples if M is None else int(M)
    if M < 1:
        raise PoolError("M must be at least 1")
    bc, bc_w, ex_c = _side_atoms(
        scenario.B_list, scenario.controller_links, scenario.controller_gates, seed, _STREAM_BC, M, force_exact, m_cap
    )
    ba, ba_w, ex_a = _side_atoms(
        scenario.B_list, scenario.attacker_links, scenario.attacker_gates, seed, _STREAM_BA, M, force_exact, m_cap
    )
    return SamplePool(scenario, seed, M, bc, bc_w, ba, ba_w, ex_c and ex_a)


# ---------------------------------------------------------------------------
# expectations


@dataclass(frozen=True)
class AttackerMoments:
    E_Ba: Array
    E_BatPBa: Array
    cov_term: Array


def attacker_moments(pool: SamplePool, P: ArrayLike) -> AttackerMoments:
    """First and second moments of ``B^a`` weighted by ``P``.

    ``cov_term = E[B^a^T P B^a] - E[B^a]^T P E[B^a]``.
    """
    p = symmetrize(P)
    e = pool.E_Ba
    ba = pool.ba
    second = symmetrize(np.tensordot(pool.ba_w, np.matmul(np.transpose(ba, (0, 2, 1)), np.matmul(p, ba)), axes=1))
    mean_part = symmetrize(e.T @ p @ e)
    return AttackerMoments(E_Ba=e, E_BatPBa=second, cov_term=symmetrize(second - mean_part))


def sigma2_Ba(pool: SamplePool) -> float:
    """Largest per-entry variance of ``B^a`` under the pool weights."""
    if "sigma2" not in pool._cache:
        if pool.ba.shape[2] == 0:
            pool._cache["sigma2"] = 0.0
        else:
            dev = pool.ba - pool.E_Ba
            var = np.einsum("m,mij->ij", pool.ba_w, dev * dev)
            pool._cache["sigma2"] = float(var.max())
    return pool._cache["sigma2"]


def expect_over_Bc(pool: SamplePool, fn: Callable[[Array], ArrayLike]) -> Array:
    """Weighted average of ``fn(B^c)`` over controller atoms in index order."""
    acc = None
    for w, b in zip(pool.bc_w, pool.bc):
        term = w * np.asarray(fn(b), dtype=float)
        acc = term if acc is None else acc + term
    return np.asarray(acc)


# ---------------------------------------------------------------------------
# scenario file I/O


def _model_to_dict(model: ChannelModel) -> dict[str, Any]:
    if isinstance(model, FiniteSupport):
        return {"kind": "finite", "atoms": [a.tolist() for a in model.atoms], "probs": list(model.probs)}
    if isinstance(model, GaussianIID):
        return {"kind": "gaussian", "mean": model.mean.tolist(), "var": model.var.tolist()}
    return {"kind": "gated", "p": model.p, "inner": _model_to_dict(model.inner)}


def _model_from_dict(d: dict[str, Any], where: str) -> ChannelModel:
    kind = d.get("kind")
    try:
        if kind == "finite":
            return finite(d["atoms"], d["probs"])
        if kind == "gaussian":
            return gaussian(d["mean"], d["var"])
        if kind == "gated":
            return BernoulliGated(float(d["p"]), _model_from_dict(d["inner"], where + ".inner"))
    except KeyError as exc:
        raise ScenarioError(f"{where}: missing key {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: {exc}") from exc
    raise ScenarioError(f"{where}: unknown channel kind {kind!r}")


def _gates_to_dict(g: PlayerGates | None) -> dict[str, Any] | None:
    return None if g is None else {"probs": list(g.probs), "mode": g.mode}


def scenario_to_dict(sc: Scenario) -> dict[str, Any]:
    return {
        "name": sc.name,
        "A": sc.A.tolist(),
        "B": [b.tolist() for b in sc.B_list],
        "Q": sc.Q.tolist(),
        "Rc": sc.Rc.tolist(),
        "Ra": None if sc.Ra is None else sc.Ra.tolist(),
        "W": sc.W.tolist(),
        "V": sc.V.tolist(),
        "x0": None if sc.x0 is None else np.asarray(sc.x0).tolist(),
        "controller_links": [[_model_to_dict(m) for m in row] for row in sc.controller_links],
        "attacker_links": [[_model_to_dict(m) for m in row] for row in sc.attacker_links],
        "controller_gates": _gates_to_dict(sc.controller_gates),
        "attacker_gates": _gates_to_dict(sc.attacker_gates),
        "pool": {"seed": sc.seed, "samples": sc.samples},
    }


def _matrix(d: dict[str, Any], key: str, required: bool = True) -> Array | None:
    if key not in d or d[key] is None:
        if required:
            raise ScenarioError(f"{key}: missing")
        return None
    value = d[key]
    if key == "Ra" and value == []:
        return np.zeros((0, 0))
    rows = value if isinstance(value, list) else None
    if rows is None or not rows:
        raise ScenarioError(f"{key}: expected a nested list of numbers")
    if isinstance(rows[0], list):
        widths = {len(r) if isinstance(r, list) else -1 for r in rows}
        if len(widths) != 1 or -1 in widths:
            bad = next(i for i, r in enumerate(rows) if not isinstance(r, list) or len(r) != len(rows[0]))
            raise ScenarioError(f"{key}: row {bad} has inconsistent length")
    try:
        return as_matrix(value)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{key}: {exc}") from exc


def scenario_from_dict(d: dict[str, Any]) -> Scenario:
    if not isinstance(d, dict):
        raise ScenarioError("scenario: expected a mapping at top level")
    if "B" not in d or not isinstance(d["B"], list) or not d["B"]:
        raise ScenarioError("B: expected a non-empty list of matrices")
    B_list = [_matrix({f"B[{i}]": b}, f"B[{i}]") for i, b in enumerate(d["B"])]

    def grid(key: str) -> list[list[ChannelModel]]:
        raw = d.get(key, [])
        if not isinstance(raw, list):
            raise ScenarioError(f"{key}: expected a list of lists")
        return [[_model_from_dict(m, f"{key}[{j}][{i}]") for i, m in enumerate(row)] for j, row in enumerate(raw)]

    def gates(key: str) -> PlayerGates | None:
        g = d.get(key)
        if g is None:
            return None
        try:
            return PlayerGates(tuple(float(p) for p in g["probs"]), g.get("mode", "independent"))
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"{key}: {exc}") from exc

    pool = d.get("pool") or {}
    x0 = d.get("x0")
    W = _matrix(d, "W", required=False)
    V = _matrix(d, "V", required=False)
    return make_scenario(
        A=_matrix(d, "A"),  # type: ignore[arg-type]
        B_list=B_list,  # type: ignore[arg-type]
        Q=_matrix(d, "Q"),  # type: ignore[arg-type]
        Rc=_matrix(d, "Rc"),  # type: ignore[arg-type]
        Ra=_matrix(d, "Ra", required=False),
        controller_links=grid("controller_links"),
        attacker_links=grid("attacker_links"),
        W=W,
        V=V,
        controller_gates=gates("controller_gates"),
        attacker_gates=gates("attacker_gates"),
        x0=x0,
        name=str(d.get("name", "scenario")),
        seed=int(pool.get("seed", 0)),
        samples=int(pool.get("samples", 2000)),
    )


def save_scenario(sc: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=1))


def load_scenario(path: str | Path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"line {exc.lineno}: {exc.msg}") from exc
    return scenario_from_dict(data)
