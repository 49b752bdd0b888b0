import numpy as np
import pytest

from kinetic.histories import (ClassicalHistory, EpsHistory, Graph, TimeLadder, assemble_phase,
                               bar_trajectories, bar_trajectories_folded, classical_trajectories,
                               coupling_phase, direct_phase, enumerate_graphs, eps_trajectories,
                               fold_signs, graph_count, interaction_matrix, phase_decomposition,
                               random_classical_history, random_eps_history)


def test_graph_labels_validated():
    Graph((1, 2, 1))
    with pytest.raises(ValueError, match="outside 1..1"):
        Graph((2,))
    with pytest.raises(ValueError, match="outside 1..2"):
        Graph((1, 0))


@pytest.mark.parametrize("n", [0, 1, 2, 3, 4])
def test_graph_enumeration_count(n):
    graphs = list(enumerate_graphs(n))
    assert len(graphs) == graph_count(n)
    assert len(set(graphs)) == len(graphs)


def test_time_ladder_must_decrease():
    TimeLadder(1.0, (0.7, 0.2))
    with pytest.raises(ValueError, match="strictly decreasing"):
        TimeLadder(1.0, (0.2, 0.7))
    with pytest.raises(ValueError, match="strictly decreasing"):
        TimeLadder(1.0, (1.0,))
    with pytest.raises(ValueError, match="positive"):
        TimeLadder(0.0)


def test_interaction_matrix():
    a = interaction_matrix(Graph((1, 1, 2)))
    assert a.tolist() == [[-1, 0, 0], [0, -1, 0], [1, 0, -1]]
    assert interaction_matrix(Graph((1, 2, 3))).tolist() == [[-1, 0, 0], [1, -1, 0], [0, 1, -1]]


def test_root_coupling_indicator():
    assert Graph((1, 2, 1)).root_coupled().tolist() == [1.0, 0.0, 1.0]


def test_classical_history_rejects_non_unit_direction():
    with pytest.raises(ValueError, match="unit vectors"):
        ClassicalHistory(Graph((1,)), TimeLadder(1.0, (0.5,)), (1,), [[2.0, 0.0]],
                         [0.0, 0.0], [0.0, 0.0], [[0.0, 0.0]])


def test_eps_history_rejects_gap_beyond_interval():
    with pytest.raises(ValueError, match="leaves its interval"):
        EpsHistory(Graph((1,)), TimeLadder(1.0, (0.5,)), (6.0,), (1,), (1,), [[0.0]], [[0.0]],
                   0.1, [0.0], [0.0], [[0.0]], [[0.0]])


def test_eps_history_dict_round_trip(rng):
    h = random_eps_history(rng, 2, 2, 0.05)
    back = EpsHistory.from_dict(h.to_dict())
    assert back.to_dict() == h.to_dict()


@pytest.mark.parametrize("n", [1, 2, 3])
def test_classical_sweep_conserves_momentum_and_energy(rng, n):
    h = random_classical_history(rng, n, 3)
    h = ClassicalHistory(h.graph, h.ladder, (1,) * n, h.omegas, h.x1, h.v1, h.velocities)
    end = classical_trajectories(h)
    total_v = h.v1 + h.velocities.sum(axis=0)
    total_e = np.sum(h.v1 ** 2) + np.sum(h.velocities ** 2)
    assert np.allclose(end.velocities.sum(axis=0), total_v)
    assert np.sum(end.velocities ** 2) == pytest.approx(total_e)


def test_classical_newborn_sits_on_its_partner(rng):
    h = random_classical_history(rng, 3, 2)
    end = classical_trajectories(h)
    assert np.allclose(end.position_at(0, h.ladder.t), h.x1)
    for j, (a, b) in enumerate(h.graph.pairs()):
        tj = h.ladder.times[j]
        assert np.allclose(end.position_at(b, tj), end.position_at(a, tj))


def test_loss_branch_leaves_velocities_alone(rng):
    h = random_classical_history(rng, 2, 2)
    h = ClassicalHistory(h.graph, h.ladder, (-1, -1), h.omegas, h.x1, h.v1, h.velocities)
    end = classical_trajectories(h)
    assert np.allclose(end.velocities[0], h.v1)
    assert np.allclose(end.velocities[1:], h.velocities)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_eps_sweep_conserves_momentum(rng, n):
    h = random_eps_history(rng, n, 2, 0.1)
    end = eps_trajectories(h)
    assert np.allclose(end.velocities.sum(axis=0), h.v1 + h.velocities.sum(axis=0))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_folded_and_unfolded_limits_agree(rng, n):
    h = random_eps_history(rng, n, 3, 0.1)
    a = bar_trajectories(h)
    b = bar_trajectories_folded(h)
    assert np.allclose(a.positions, b.positions)
    assert np.allclose(a.velocities, b.velocities)


def test_eps_trajectories_approach_the_limit(rng):
    h = random_eps_history(rng, 2, 2, 0.1)
    limit = bar_trajectories(h)
    gaps = []
    for eps in (1e-2, 1e-3, 1e-4):
        end = eps_trajectories(h.with_eps(eps))
        gaps.append(np.max(np.abs(end.positions - limit.positions)))
    assert gaps[2] < gaps[1] < gaps[0]
    assert gaps[2] < 1e-2


def test_zero_eps_history_is_the_limit(rng):
    h = random_eps_history(rng, 2, 2, 0.0)
    end = eps_trajectories(h)
    limit = bar_trajectories(h)
    assert np.allclose(end.positions, limit.positions)
    assert np.allclose(end.velocities, limit.velocities)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_direct_phase_splits_into_assembled_and_coupling_parts(rng, n):
    h = random_eps_history(rng, n, 2, 0.1)
    direct = direct_phase(h)
    _, gamma_tilde = assemble_phase(h)
    coupling, scale = coupling_phase(h)
    assert direct == pytest.approx(gamma_tilde + coupling, abs=1e-9 * (1.0 + abs(direct) + scale))


def test_phases_need_positive_eps(rng):
    h = random_eps_history(rng, 1, 2, 0.0)
    with pytest.raises(ValueError, match="eps > 0"):
        direct_phase(h)
    with pytest.raises(ValueError, match="eps > 0"):
        phase_decomposition(h)


def test_fold_signs_inverts_to_the_original_signs(rng):
    sigmas = np.array([1.0, -1.0, -1.0])
    sigmas_prime = np.array([-1.0, -1.0, 1.0])
    ks = rng.standard_normal((3, 2))
    sigma_bar, etas = fold_signs(sigmas, sigmas_prime, ks)
    assert np.array_equal(-sigmas * sigma_bar, sigmas_prime)
    assert np.allclose(etas, -sigmas[:, None] * ks)


def test_phase_decomposition_shapes(rng):
    h = random_eps_history(rng, 2, 3, 0.1)
    terms = phase_decomposition(h)
    assert terms.gamma1.shape == (2, 3)
    assert terms.gamma2.shape == (2, 3)
    assert np.all(np.isfinite(terms.gamma1))
