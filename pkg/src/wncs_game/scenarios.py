"""Built-in scenarios: the three worked network examples and a few small oracles.

The 6-state plant and the actuator gains ship as ``data/plant6.json``.
Example generators share the channel statistics of that configuration:
controller links are i.i.d. standard Gaussian, attacker links have mean
``I`` and unit per-entry variance.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import numpy as np
from numpy.typing import ArrayLike

from .matrix_core import Array
from .stochastic_model import PlayerGates, Scenario, deterministic, gaussian, make_scenario


@lru_cache(maxsize=1)
def _fixture() -> dict:
    text = resources.files("wncs_game").joinpath("data/plant6.json").read_text()
    return json.loads(text)


def plant_A() -> Array:
    return np.array(_fixture()["A"], dtype=float)


def plant_B() -> list[Array]:
    return [np.array(b, dtype=float) for b in _fixture()["B"]]


def plant_B_tilde() -> list[Array]:
    return [np.array(b, dtype=float) for b in _fixture()["B_tilde"]]


def _link(mean: Array, frozen: bool, rng: np.random.Generator):
    """Unit-variance Gaussian link, or one seeded realization of it when ``frozen``."""
    if frozen:
        return deterministic(mean + rng.standard_normal(mean.shape))
    return gaussian(mean, 1.0)


def _grid(rows: int, cols: int, mean: Array, frozen: bool, rng: np.random.Generator) -> list[list]:
    return [[_link(mean, frozen, rng) for _ in range(cols)] for _ in range(rows)]


def _attacker_grid(n_attackers: int, n_actuators: int, nr: int, nt: int, frozen: bool = False, seed: int = 0) -> list[list]:
    rng = np.random.default_rng([seed, 7])
    return _grid(n_attackers, n_actuators, np.eye(nr, nt), frozen, rng)


def _noise(S: int, nr: int, W: ArrayLike | None, V: ArrayLike | None) -> tuple[Array, Array]:
    return (np.eye(S) if W is None else np.asarray(W, float), np.eye(nr) if V is None else np.asarray(V, float))


def example1(
    delta: float = 0.8,
    Ra: ArrayLike | None = None,
    seed: int = 0,
    samples: int = 2000,
    W: ArrayLike | None = None,
    V: ArrayLike | None = None,
    x0: ArrayLike | None = None,
    frozen_links: bool = False,
) -> Scenario:
    """Three controllers behind one shared access gate, Gaussian 2x3 links.

    ``frozen_links`` replaces every Gaussian link by one seeded realization so
    the pool is enumerated exactly.
    """
    A, Bs = plant_A(), plant_B()
    S, nr, nt = A.shape[0], Bs[0].shape[1], 3
    w, v = _noise(S, nr, W, V)
    rng = np.random.default_rng([seed, 5])
    return make_scenario(
        A=A,
        B_list=Bs,
        Q=np.eye(S),
        Rc=np.eye(3 * nt),
        Ra=Ra,
        controller_links=_grid(3, 3, np.zeros((nr, nt)), frozen_links, rng),
        attacker_links=_attacker_grid(3, 3, nr, 2, frozen_links, seed),
        W=w,
        V=v,
        controller_gates=PlayerGates((delta,) * 3, "shared"),
        x0=x0,
        name=f"example1-delta{delta:g}",
        seed=seed,
        samples=samples,
    )


def example2(
    delta: float | tuple[float, float, float] = 0.8,
    Ra: ArrayLike | None = None,
    seed: int = 0,
    samples: int = 2000,
    attacker_p: float = 0.5,
    A: ArrayLike | None = None,
    frozen_links: bool = False,
) -> Scenario:
    """Interference-free network: controller ``j`` reaches only actuator ``j``.

    Actuator ``i`` drives rows ``2i, 2i+1`` through ``B_tilde_i``.
    """
    a = plant_A() if A is None else np.asarray(A, float)
    bt = plant_B_tilde()
    S, nr, nt = a.shape[0], 2, 2
    Bs = []
    for i, b in enumerate(bt):
        full = np.zeros((S, nr))
        full[nr * i : nr * (i + 1)] = b
        Bs.append(full)
    deltas = (delta,) * 3 if np.isscalar(delta) else tuple(delta)  # type: ignore[arg-type]
    rng = np.random.default_rng([seed, 5])
    off = deterministic(np.zeros((nr, nt)))
    grid = [[_link(np.zeros((nr, nt)), frozen_links, rng) if i == j else off for i in range(3)] for j in range(3)]
    w, v = _noise(S, nr, None, None)
    return make_scenario(
        A=a,
        B_list=Bs,
        Q=np.eye(S),
        Rc=np.eye(3 * nt),
        Ra=Ra,
        controller_links=grid,
        attacker_links=_attacker_grid(3, 3, nr, 2, frozen_links, seed),
        W=w,
        V=v,
        controller_gates=PlayerGates(tuple(float(d) for d in deltas), "independent"),
        attacker_gates=PlayerGates((attacker_p,) * 3, "independent"),
        name="example2",
        seed=seed,
        samples=samples,
    )


def example3(
    delta: float | tuple[float, float, float] = 0.5,
    Ra: ArrayLike | None = None,
    seed: int = 0,
    samples: int = 2000,
    attacker_p: float = 0.5,
    frozen_links: bool = False,
) -> Scenario:
    """Six transmit antennas per controller, independent access gates."""
    A, Bs = plant_A(), plant_B()
    S, nr, nt = A.shape[0], Bs[0].shape[1], 6
    deltas = (delta,) * 3 if np.isscalar(delta) else tuple(delta)  # type: ignore[arg-type]
    rng = np.random.default_rng([seed, 5])
    w, v = _noise(S, nr, None, None)
    return make_scenario(
        A=A,
        B_list=Bs,
        Q=np.eye(S),
        Rc=np.eye(3 * nt),
        Ra=Ra,
        controller_links=_grid(3, 3, np.zeros((nr, nt)), frozen_links, rng),
        attacker_links=_attacker_grid(3, 3, nr, 2, frozen_links, seed),
        W=w,
        V=v,
        controller_gates=PlayerGates(tuple(float(d) for d in deltas), "independent"),
        attacker_gates=PlayerGates((attacker_p,) * 3, "independent"),
        name="example3",
        seed=seed,
        samples=samples,
    )


def scalar_golden() -> Scenario:
    """``a = b = q = r_c = 1`` with no attacker; the fixed point is the golden ratio."""
    return make_scenario(
        A=[[1.0]],
        B_list=[[[1.0]]],
        Q=[[1.0]],
        Rc=[[1.0]],
        Ra=None,
        controller_links=[[deterministic([[1.0]])]],
        name="scalar-golden",
    )


def builtin(example: int, delta: float, **kw) -> Scenario:
    makers = {1: example1, 2: example2, 3: example3}
    if example not in makers:
        raise ValueError(f"unknown example {example}; choose 1, 2 or 3")
    return makers[example](delta=delta, **kw)
