import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wncs_game import scenarios
from wncs_game import stochastic_model as sm

from conftest import scalar_scenario


def _naive(B_list, grid):
    cols = []
    for row in grid:
        acc = np.zeros((B_list[0].shape[0], row[0].shape[1]))
        for i in range(len(B_list)):
            for r in range(B_list[i].shape[1]):
                acc += np.outer(B_list[i][:, r], row[i][r])
        cols.append(acc)
    return np.hstack(cols)


def test_assemble_single_identity():
    np.testing.assert_array_equal(sm.assemble_Bc([np.eye(2)], [[np.eye(2)]]), np.eye(2))
    np.testing.assert_array_equal(sm.assemble_Ba([np.eye(2)], [[np.eye(2)]]), np.eye(2))
    np.testing.assert_array_equal(sm.assemble_Ba([np.eye(2)], [[np.zeros((2, 2))]]), np.zeros((2, 2)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 3), st.integers(1, 3))
def test_assemble_matches_double_sum(seed, n_players, n_act):
    rng = np.random.default_rng(seed)
    B = [rng.normal(size=(4, 2)) for _ in range(n_act)]
    grid = [[rng.normal(size=(2, 3)) for _ in range(n_act)] for _ in range(n_players)]
    np.testing.assert_allclose(sm.assemble_Bc(B, grid), _naive(B, grid), atol=1e-12)


def test_example2_gain_is_block_diagonal():
    sc = scenarios.example2(0.8, frozen_links=True)
    pool = sm.build_pool(sc)
    bt = scenarios.plant_B_tilde()
    full = pool.bc[np.argmax(pool.bc_w)]  # all three gates open has the largest weight
    for i in range(3):
        h = sc.controller_links[i][i].atoms[0]
        np.testing.assert_allclose(full[2 * i : 2 * i + 2, 2 * i : 2 * i + 2], bt[i] @ h)
        mask = np.ones(6, bool)
        mask[2 * i : 2 * i + 2] = False
        assert not full[mask, 2 * i : 2 * i + 2].any()


def test_bernoulli_gate_on_single_atom():
    sc = sm.make_scenario([[1.0]], [[[1.0]]], [[1.0]], [[1.0]], None,
                          [[sm.BernoulliGated(0.3, sm.deterministic([[2.0]]))]])
    pool = sm.build_pool(sc)
    assert pool.exact and pool.bc.shape[0] == 2
    got = sorted(zip(pool.bc_w, pool.bc[:, 0, 0]))
    np.testing.assert_allclose(got, [(0.3, 2.0), (0.7, 0.0)])


def test_player_gates_patterns():
    shared = sm.PlayerGates((0.8,) * 3, "shared").patterns()
    assert shared == [((1, 1, 1), 0.8), ((0, 0, 0), pytest.approx(0.2))]
    indep = sm.PlayerGates((0.5, 0.25), "independent").patterns()
    assert len(indep) == 4 and sum(w for _, w in indep) == pytest.approx(1.0)
    with pytest.raises(sm.ScenarioError):
        sm.PlayerGates((0.5, 0.6), "shared")


def test_gaussian_pool_is_reproducible():
    a = sm.build_pool(scenarios.example1(0.8, samples=1000, seed=4))
    b = sm.build_pool(scenarios.example1(0.8, samples=1000, seed=4))
    assert a.bc.tobytes() == b.bc.tobytes() and a.ba.tobytes() == b.ba.tobytes()
    c = sm.build_pool(scenarios.example1(0.8, samples=1000, seed=5))
    assert not np.array_equal(a.bc, c.bc)


def test_weights_form_simplex():
    pool = sm.build_pool(scenarios.example3(0.4, samples=500))
    assert pool.bc_w.sum() == pytest.approx(1.0) and pool.ba_w.sum() == pytest.approx(1.0)
    assert np.all(pool.bc_w >= 0)


def test_attacker_moments_deterministic_has_no_covariance():
    pool = sm.build_pool(scalar_scenario(Ra=2.0, ba=1.5))
    m = sm.attacker_moments(pool, [[3.0]])
    np.testing.assert_allclose(m.cov_term, 0.0)
    np.testing.assert_allclose(m.E_BatPBa, [[3.0 * 1.5**2]])


def test_attacker_moments_symmetric_two_point():
    B = np.array([[1.0, 0.5], [0.0, 2.0]])
    sc = sm.make_scenario(np.eye(2), [np.eye(2)], np.eye(2), np.eye(2), np.eye(2) * 10,
                          [[sm.deterministic(np.eye(2))]], [[sm.finite([B, -B], [0.5, 0.5])]])
    pool = sm.build_pool(sc)
    m = sm.attacker_moments(pool, np.eye(2))
    np.testing.assert_allclose(m.E_Ba, 0.0)
    np.testing.assert_allclose(m.cov_term, B.T @ B)


def test_sigma2_examples():
    assert sm.sigma2_Ba(sm.build_pool(scalar_scenario(Ra=2.0, ba=1.0))) == 0.0
    gated = sm.make_scenario([[1.0]], [[[1.0]]], [[1.0]], [[1.0]], [[5.0]], [[sm.deterministic([[1.0]])]],
                             [[sm.BernoulliGated(0.3, sm.deterministic([[2.0]]))]])
    assert sm.sigma2_Ba(sm.build_pool(gated)) == pytest.approx(0.3 * 0.7 * 4.0)
    pm = sm.make_scenario([[1.0]], [[[1.0]]], [[1.0]], [[1.0]], [[5.0]], [[sm.deterministic([[1.0]])]],
                          [[sm.finite([[[1.0]], [[-1.0]]], [0.5, 0.5])]])
    assert sm.sigma2_Ba(sm.build_pool(pm)) == pytest.approx(1.0)


def test_expect_over_Bc():
    pool = sm.build_pool(sm.make_scenario([[1.0]], [[[1.0]]], [[1.0]], [[1.0]], None,
                                          [[sm.finite([[[1.0]], [[3.0]]], [0.25, 0.75])]]))
    np.testing.assert_allclose(sm.expect_over_Bc(pool, lambda b: np.eye(2)), np.eye(2))
    np.testing.assert_allclose(sm.expect_over_Bc(pool, lambda b: b), [[2.5]])


def test_sampled_second_moment_matches_gaussian_law():
    # Standard Gaussian 2x3 links, three controllers: E[Bc Bc^T] = delta * 3 * 3 * sum_i B_i B_i^T.
    sc = scenarios.example1(0.8, samples=100_000, seed=2)
    pool = sm.build_pool(sc)
    est = sm.expect_over_Bc(pool, lambda b: b @ b.T)
    exact = 0.8 * 9 * sum(b @ b.T for b in sc.B_list)
    per_atom = np.einsum("msc,mtc->mst", pool.bc, pool.bc)
    sd = np.sqrt(np.einsum("m,mst->st", pool.bc_w, (per_atom - est) ** 2) / 100_000)
    assert np.all(np.abs(est - exact) <= 3 * sd + 1e-12)


def test_scenario_round_trip(tmp_path):
    for sc in (scenarios.example2(0.7), scenarios.scalar_golden()):
        path = tmp_path / "s.json"
        sm.save_scenario(sc, path)
        back = sm.load_scenario(path)
        assert json.dumps(sm.scenario_to_dict(back)) == json.dumps(sm.scenario_to_dict(sc))


def test_schema_errors_name_the_key(tmp_path):
    good = sm.scenario_to_dict(scenarios.scalar_golden())
    bad = dict(good, A=[[1.0, 2.0], [3.0]])
    with pytest.raises(sm.ScenarioError, match="A: row 1"):
        sm.scenario_from_dict(bad)
    with pytest.raises(sm.ScenarioError, match="Q: missing"):
        sm.scenario_from_dict({k: v for k, v in good.items() if k != "Q"})
    with pytest.raises(sm.ScenarioError, match=r"controller_links\[0\]\[0\]"):
        sm.scenario_from_dict(dict(good, controller_links=[[{"kind": "poisson"}]]))
    p = tmp_path / "broken.json"
    p.write_text("{\n  \"A\": [1,\n")
    with pytest.raises(sm.ScenarioError, match="line"):
        sm.load_scenario(p)
