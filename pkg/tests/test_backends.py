import numpy as np
import pytest

from wncs_game import mgare, policy, simkernel
from wncs_game.stochastic_model import build_pool

from conftest import two_state_instance

needs_compiled = pytest.mark.skipif(simkernel.BACKEND != "cython", reason="compiled kernel not built")


def _case():
    pool = build_pool(two_state_instance())
    sol = mgare.solve_fixed_point(pool)
    return pool, policy.steady_policy(sol.P_star)


@needs_compiled
def test_backends_agree():
    pool, spec = _case()
    noise = np.random.default_rng(0).normal(scale=0.05, size=(6, 2, 2))
    out = {
        b: policy.run_closed_loop(spec, pool, 500, 6, seed=4, gain_noise=noise, record=True, backend=b)
        for b in ("numpy", "cython")
    }
    for a, b in zip(out["numpy"], out["cython"]):
        np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-12)


@needs_compiled
def test_backends_agree_on_overflow():
    pool, _ = _case()
    spec = policy.fixed_linear_policy(np.array([[50.0, 50.0], [0.0, 0.0]]))
    c1, f1, _, _ = policy.run_closed_loop(spec, pool, 300, 3, seed=1, backend="numpy")
    c2, f2, _, _ = policy.run_closed_loop(spec, pool, 300, 3, seed=1, backend="cython")
    np.testing.assert_array_equal(f1, f2)
    np.testing.assert_array_equal(np.isnan(c1), np.isnan(c2))


def test_pure_python_switch(monkeypatch):
    import importlib

    monkeypatch.setenv("MGARE_PURE_PYTHON", "1")
    mod = importlib.reload(simkernel)
    try:
        assert mod.BACKEND == "numpy"
    finally:
        monkeypatch.delenv("MGARE_PURE_PYTHON")
        importlib.reload(simkernel)


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("MGARE_THREADS", "3")
    assert simkernel.thread_count() == 3
    monkeypatch.delenv("MGARE_THREADS")
    assert simkernel.thread_count() >= 1


def test_unknown_backend():
    with pytest.raises(ValueError):
        policy._backend("fortran")
