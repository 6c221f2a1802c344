import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecpda.annealing import ScheduleConfig, boltzmann
from ecpda.lb import (
    LeaderBasedModel,
    lb_association_update,
    lb_centroid_update,
    lb_residual,
    leader_index,
    run_ecp_lb,
)
from ecpda.ll import run_ecp_ll
from ecpda.network import NetworkInstance, generate_gaussian_instance, pairwise_sq_dists
from ecpda.oracle import lb_brute_force


def sq(y):
    y = np.asarray(y, float).reshape(len(y), -1)
    return pairwise_sq_dists(y, y)


def test_leader_examples():
    assert leader_index(sq([[1.0, 2.0]])) == 0
    d = sq([0.0, 5.0, 6.0])
    np.testing.assert_array_equal(d.sum(axis=1), [61, 26, 37])
    assert leader_index(d) == 1
    assert leader_index(sq([-1.0, 1.0])) == 0


@given(st.integers(0, 2**31), st.floats(-50, 50), st.floats(0.1, 20))
def test_leader_invariant_to_translation_and_scale(seed, shift, scale):
    y = np.random.default_rng(seed).normal(size=(5, 2))
    assert leader_index(sq(y)) == leader_index(sq(scale * y + shift))


def test_association_examples():
    p = lb_association_update(np.array([[0.0, 2.0]]), 1.0)[0]
    e = np.exp(-2.0)
    np.testing.assert_allclose(p, [1 / (1 + e), e / (1 + e)], rtol=1e-12)
    np.testing.assert_allclose(p, [0.8808, 0.1192], atol=1e-4)
    np.testing.assert_allclose(lb_association_update(np.array([[4.0, 4.0]]), 3.0), [[0.5, 0.5]])
    np.testing.assert_allclose(lb_association_update(np.array([[2.0, 1.0]]), 1e-9), [[0, 1]], atol=1e-12)


def test_update_examples():
    x = np.array([[0.0], [4.0]])
    w = np.array([0.5, 0.5])
    hard = np.eye(2)
    y = lb_centroid_update(hard, x, w, 0, 0.5)
    np.testing.assert_allclose(y, [[4 / 3], [8 / 3]], rtol=1e-12)
    # dense 2x2 system: leader (gN + a0) y0 - gN y1 = b0, follower -gN y0 + (gN + a1) y1 = b1
    dense = np.linalg.solve(np.array([[2.0, -1.0], [-1.0, 2.0]]), np.array([0.0, 4.0]))
    np.testing.assert_allclose(y[:, 0], dense, rtol=1e-12)
    np.testing.assert_array_equal(lb_centroid_update(hard, x, w, 0, 0.0), x)
    one = lb_centroid_update(np.ones((2, 1)), x, w, 0, 3.0)
    np.testing.assert_allclose(one, [[2.0]])


@settings(max_examples=100)
@given(st.integers(0, 2**31), st.integers(1, 6), st.integers(1, 3), st.floats(0, 5))
def test_update_residual(seed, m, d, gamma):
    rng = np.random.default_rng(seed)
    n = 12
    x = rng.normal(scale=3, size=(n, d))
    w = rng.dirichlet(np.ones(n))
    p = boltzmann(rng.uniform(0, 4, (n, m)), 1.0)
    lead = int(rng.integers(m))
    y = lb_centroid_update(p, x, w, lead, gamma)
    assert lb_residual(y, p, x, w, lead, gamma) < 1e-9


def test_single_node():
    inst = NetworkInstance.from_points([[1.0, 1.0]], gamma=2.0)
    p, _ = run_ecp_lb(inst, ScheduleConfig(t_max=1.0), seed=0)
    assert p.controllers == (0,) and p.leader == 0 and p.objective.total == 0


def test_two_pairs_matches_oracle(two_pairs):
    res = run_ecp_lb(two_pairs, ScheduleConfig(k_max=2), seed=0)
    oracle = lb_brute_force(two_pairs, 2)
    assert res.placement.objective.total == pytest.approx(oracle.objective, rel=1e-12)
    assert res.placement.leader in res.placement.controllers
    assert oracle.objective == pytest.approx(2 + 0.01 * 4 * 99**2)


def test_kmax_one_matches_ll():
    inst = generate_gaussian_instance(3, 25, seed=3, gamma=0.7)
    cfg = ScheduleConfig(k_max=1)
    lb = run_ecp_lb(inst, cfg, seed=4).placement
    ll = run_ecp_ll(inst, cfg, seed=4).placement
    assert lb.controllers == ll.controllers and lb.assignment == ll.assignment
    assert lb.objective.total == ll.objective.total


def test_gamma_zero_traces_identical():
    inst = generate_gaussian_instance(3, 25, seed=3, gamma=0.0)
    cfg = ScheduleConfig(k_max=3)
    assert run_ecp_lb(inst, cfg, seed=2).trace == run_ecp_ll(inst, cfg, seed=2).trace


def test_distortion_includes_min_sync():
    model = LeaderBasedModel(0.5, 2)
    x = np.array([[0.0], [4.0]])
    w = np.array([0.5, 0.5])
    y = np.array([[0.0], [4.0]])
    assert model.distortion(x, w, np.eye(2), y) == pytest.approx(0.5 * 16)


def test_run_deterministic_and_valid():
    inst = generate_gaussian_instance(3, 30, seed=8, gamma=0.05)
    a = run_ecp_lb(inst, ScheduleConfig(k_max=3), seed=1)
    b = run_ecp_lb(inst, ScheduleConfig(k_max=3), seed=1)
    assert a.placement == b.placement and a.trace == b.trace
    a.placement.validate(inst)
    assert a.placement.leader in a.placement.controllers


def test_massless_leader_update():
    x = np.array([[0.0], [4.0]])
    w = np.array([0.5, 0.5])
    p = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])  # centroid 0 serves nobody
    y = lb_centroid_update(p, x, w, 0, 0.5)
    np.testing.assert_allclose(y[:, 0], [2.0, 1.0, 3.0])
    assert lb_residual(y, p, x, w, 0, 0.5) < 1e-12


def test_unused_leader_survives_projection():
    from ecpda.annealing import assign_to_controllers, continuous_objective

    x = np.array([[0.0], [1.0], [9.0], [10.0]])
    sites = np.array([[0.5], [5.0], [9.5]])  # the middle site is nobody's nearest
    keep, labels = assign_to_controllers(LeaderBasedModel(1.0, 4), x, sites)
    np.testing.assert_array_equal(keep, [0, 1, 2])
    np.testing.assert_array_equal(labels, [0, 0, 2, 2])
    with_hub = continuous_objective(LeaderBasedModel(1.0, 4), x, sites)
    assert with_hub.sync_cost == 4 * (4.5**2 * 2)
    # without a leader to protect the idle site is dropped
    keep0, _ = assign_to_controllers(LeaderBasedModel(0.0, 4), x, sites)
    np.testing.assert_array_equal(keep0, [0, 2])


def test_soft_objective_keeps_hub_leader():
    inst = generate_gaussian_instance(3, 12, seed=3, gamma=0.1)
    res = run_ecp_lb(inst, ScheduleConfig(k_max=3), seed=3)
    assert res.soft_objective.total <= res.placement.objective.total + 1e-9
    assert res.centroids.shape[0] == 3
