import numpy as np
import pytest

from edgeflow.constraints import EdgeConstraint, agreement_error, feasible_point, stack
from edgeflow.errors import DimensionMismatch, NoConvergence, ObjectiveError, Unbounded
from edgeflow.graph import build_graph
from edgeflow.objectives import ExpSum, SquaredDistance, Zero, total_gradient
from edgeflow.reference import (
    distance_to_opt,
    kkt_residuals,
    node_multiplier,
    solve_general,
    solve_quadratic_kkt,
    solve_reference,
)

from conftest import random_consistent_scenario


def consensus_pair(n=2):
    g = build_graph(2, [(1, 2)])
    return stack(g, [EdgeConstraint(0, 1, np.eye(n), np.zeros(n))], n)


def test_kkt_hand_case():
    # agents must agree; targets (0,0) and (4,4) meet halfway
    s = consensus_pair()
    objs = [SquaredDistance(target=[0, 0]), SquaredDistance(target=[4, 4])]
    ref = solve_quadratic_kkt(s, objs)
    np.testing.assert_allclose(ref.x_star, [2, 2, 2, 2], atol=1e-12)
    assert ref.valid and ref.unique
    assert ref.objective_value == pytest.approx(16.0, abs=1e-10)


def test_kkt_scalar_pair():
    # (x1-1)^2 + (x2-3)^2 with x1 = x2: stationarity gives 2(x-1) + 2(x-3) = 0
    s = consensus_pair(n=1)
    ref = solve_quadratic_kkt(s, [SquaredDistance(target=[1.0]), SquaredDistance(target=[3.0])])
    np.testing.assert_allclose(ref.x_star, [2, 2], atol=1e-12)
    assert ref.kkt_residual <= 1e-12


def test_common_target():
    s = consensus_pair()
    objs = [SquaredDistance(target=[1, -1])] * 2
    ref = solve_quadratic_kkt(s, objs)
    np.testing.assert_allclose(ref.x_star, [1, -1, 1, -1], atol=1e-12)
    assert ref.objective_value == pytest.approx(0.0, abs=1e-20)


def test_all_zero_objectives_unbounded(edge_only_scenario):
    with pytest.raises(Unbounded):
        solve_quadratic_kkt(edge_only_scenario.system, [Zero()] * 4)


def test_kkt_rejects_nonquadratic(objectives_scenario):
    with pytest.raises(ObjectiveError):
        solve_quadratic_kkt(objectives_scenario.system, objectives_scenario.objectives)


def test_general_on_formation(objectives_scenario):
    sc = objectives_scenario
    ref = solve_general(sc.system, sc.objectives)
    assert ref.kkt_residual <= 1e-9
    assert ref.primal_residual <= 1e-9
    assert agreement_error(sc.constraints, ref.x_star) <= 1e-10
    assert ref.method == "method_of_multipliers"
    assert ref.unique


def test_general_matches_exact_kkt():
    rng = np.random.default_rng(0)
    for _ in range(20):
        sc = random_consistent_scenario(rng)
        a = solve_general(sc.system, sc.objectives)
        b = solve_quadratic_kkt(sc.system, sc.objectives)
        assert np.max(np.abs(a.x_star - b.x_star)) <= 1e-7


def test_optimal_init_converges_in_one_outer_iteration():
    rng = np.random.default_rng(1)
    sc = random_consistent_scenario(rng)
    exact = solve_quadratic_kkt(sc.system, sc.objectives)
    ref = solve_general(sc.system, sc.objectives, init=exact.x_star)
    assert ref.iterations == 1


def test_general_reports_no_convergence(objectives_scenario):
    sc = objectives_scenario
    with pytest.raises(NoConvergence) as info:
        solve_general(sc.system, sc.objectives, max_outer=1)
    assert info.value.residual > 1e-9


def test_dispatch(objectives_scenario):
    s = consensus_pair()
    assert solve_reference(s, [SquaredDistance(target=[0, 0])] * 2).method == "quadratic_kkt"
    assert solve_reference(s, [ExpSum(), SquaredDistance(target=[0, 0])]).method == "method_of_multipliers"


def test_distance_to_opt():
    s = consensus_pair()
    ref = solve_quadratic_kkt(s, [SquaredDistance(target=[0, 0]), SquaredDistance(target=[4, 4])])
    assert distance_to_opt(ref.x_star, ref) == 0.0
    assert distance_to_opt(ref.x_star + np.array([1, 0, 0, 0]), ref) == pytest.approx(0.5)
    with pytest.raises(DimensionMismatch):
        distance_to_opt(np.zeros(3), ref)


def test_multiplier_consistency(objectives_scenario):
    sc = objectives_scenario
    s = sc.system
    ref = solve_general(s, sc.objectives)
    lam = node_multiplier(s, sc.objectives, ref)
    HPH = s.H_bar.T @ s.P_bar @ s.H_bar
    assert np.linalg.norm(total_gradient(sc.objectives, ref.x_star, 2) + HPH @ lam) <= 1e-8
    stat, primal = kkt_residuals(s, sc.objectives, ref.x_star, ref.mu_star)
    assert max(stat, primal) == pytest.approx(ref.kkt_residual)


def test_optimum_beats_feasible_points(objectives_scenario):
    sc = objectives_scenario
    ref = solve_general(sc.system, sc.objectives)
    x_f = feasible_point(sc.system).x
    # feasible set is x_f + span of rigid translations (1 (x) v)
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = x_f + np.tile(rng.normal(scale=3, size=2), 4)
        assert sum(f.value(xi) for f, xi in zip(sc.objectives, x.reshape(4, 2))) >= ref.objective_value - 1e-9
