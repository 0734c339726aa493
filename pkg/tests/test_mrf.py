import numpy as np
import pytest

from streetlabel.context import AdjacencyGraph, CooccurrenceModel, conditional_from_counts
from streetlabel.mrf import (
    MRFProblem,
    argmax_initial,
    brute_force_solve,
    data_term,
    pair_weight,
    smoothness_term,
    solve,
    total_energy,
)

from conftest import random_problem, reference_energy


def tiny_problem(scores, edges, p_matrix, lam, hard=False):
    cooc = CooccurrenceModel(
        matrix=np.asarray(p_matrix, dtype=np.float64), alpha=0.0, floor=1e-6
    )
    graph = AdjacencyGraph(len(scores), np.asarray(edges, dtype=np.int64).reshape(-1, 2))
    return MRFProblem(
        scores=np.asarray(scores, dtype=np.float64),
        graph=graph,
        cooccurrence=cooc,
        lam=lam,
        hard=hard,
    )


def uniform_p(n):
    return np.full((n, n), 1.0 / n)


class TestDataTerm:
    def test_one_hot_exact_match_is_zero(self):
        problem = tiny_problem([[0.0, 1.0, 0.0]], [], uniform_p(3), 0.5)
        assert data_term(problem, 0, 1) == 0.0

    def test_hand_arithmetic(self):
        problem = tiny_problem([[0.7, 0.2, 0.1]], [], uniform_p(3), 0.5)
        assert abs(data_term(problem, 0, 0) - 0.14) < 1e-12

    def test_uniform_row_symmetric(self):
        problem = tiny_problem([[1 / 3, 1 / 3, 1 / 3]], [], uniform_p(3), 0.5)
        costs = [data_term(problem, 0, l) for l in range(3)]
        assert np.allclose(costs, 2 / 3, atol=1e-12)

    def test_minimized_at_argmax(self):
        rng = np.random.default_rng(0)
        scores = rng.dirichlet(np.ones(4), size=10)
        problem = tiny_problem(scores, [], uniform_p(4), 0.5)
        for i in range(10):
            costs = [data_term(problem, i, l) for l in range(4)]
            assert int(np.argmin(costs)) == int(np.argmax(scores[i]))


class TestPairWeight:
    def test_identical_rows_zero(self):
        problem = tiny_problem([[0.5, 0.5], [0.5, 0.5]], [[0, 1]], uniform_p(2), 0.5)
        assert pair_weight(problem, 0, 1) == 0.0

    def test_one_hot_pair(self):
        problem = tiny_problem([[1.0, 0.0], [0.0, 1.0]], [[0, 1]], uniform_p(2), 0.5)
        assert abs(pair_weight(problem, 0, 1) - 2.0) < 1e-12

    def test_hand_arithmetic(self):
        problem = tiny_problem([[0.6, 0.4], [0.4, 0.6]], [[0, 1]], uniform_p(2), 0.5)
        assert abs(pair_weight(problem, 0, 1) - 0.08) < 1e-12

    def test_non_edge_rejected(self):
        problem = tiny_problem(
            [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]], [[0, 1]], uniform_p(2), 0.5
        )
        with pytest.raises(ValueError, match="not an edge"):
            pair_weight(problem, 1, 2)

    def test_hard_mode_is_one(self):
        problem = tiny_problem(
            [[0.6, 0.4], [0.4, 0.6]], [[0, 1]], uniform_p(2), 0.5, hard=True
        )
        assert pair_weight(problem, 0, 1) == 1.0


class TestSmoothnessTerm:
    def test_equal_labels_zero(self):
        problem = tiny_problem([[0.9, 0.1], [0.2, 0.8]], [[0, 1]], uniform_p(2), 0.5)
        assert smoothness_term(problem, (0, 1), (1, 1)) == 0.0

    def test_hand_arithmetic(self):
        # w = 0.5 needs |s0 - s1|^2 = 0.5: rows (0.5, 0.5) and (1, 0);
        # P(0|1) = P(1|0) = 0.25 inside a column-stochastic matrix
        p = np.array([[0.75, 0.25], [0.25, 0.75]])
        problem = tiny_problem([[0.5, 0.5], [1.0, 0.0]], [[0, 1]], p, 1.0)
        w = pair_weight(problem, 0, 1)
        assert abs(w - 0.5) < 1e-12
        expected = -0.5 * np.log(0.25)
        assert abs(smoothness_term(problem, (0, 1), (0, 1)) - expected) < 1e-12
        assert abs(expected - 0.6931471805599453) < 1e-12

    def test_zero_weight_suppresses_smoothing(self):
        problem = tiny_problem([[0.3, 0.7], [0.3, 0.7]], [[0, 1]], uniform_p(2), 0.5)
        assert smoothness_term(problem, (0, 1), (0, 1)) == 0.0

    def test_semi_metric_properties(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            problem = random_problem(rng, 6, 4)
            for a, b in problem.graph.edges:
                for li in range(4):
                    for lj in range(4):
                        cost = smoothness_term(problem, (int(a), int(b)), (li, lj))
                        sym = smoothness_term(problem, (int(a), int(b)), (lj, li))
                        assert cost >= 0.0
                        assert abs(cost - sym) < 1e-12
                        if li == lj:
                            assert cost == 0.0
                        elif pair_weight(problem, int(a), int(b)) > 0:
                            assert cost > 0.0


class TestTotalEnergy:
    def test_lambda_zero_is_data_only(self):
        rng = np.random.default_rng(2)
        problem = random_problem(rng, 8, 3, lam=0.0)
        labels = rng.integers(0, 3, 8)
        expected = sum(data_term(problem, i, int(labels[i])) for i in range(8))
        assert abs(total_energy(problem, labels) - expected) < 1e-12

    def test_single_node_hand_value(self):
        problem = tiny_problem([[0.9, 0.1]], [], uniform_p(2), 0.5)
        assert abs(total_energy(problem, np.array([0])) - 0.02) < 1e-12

    def test_matches_independent_evaluator(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            problem = random_problem(rng, int(rng.integers(2, 10)), int(rng.integers(2, 5)))
            labels = rng.integers(0, problem.n_classes, problem.n_nodes)
            assert abs(total_energy(problem, labels) - reference_energy(problem, labels)) < 1e-9


class TestSolve:
    def test_lambda_zero_returns_argmax(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            problem = random_problem(rng, 12, 4, lam=0.0)
            result = solve(problem)
            assert np.array_equal(result.labels, argmax_initial(problem))
            assert result.moves == []

    def test_binary_matches_brute_force(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            problem = random_problem(rng, int(rng.integers(2, 13)), 2)
            got = solve(problem)
            want = brute_force_solve(problem)
            assert abs(got.energy - want.energy) < 1e-9

    def test_chain_high_lambda_goes_constant(self):
        # uniform scores, positive off-diagonal costs: any non-constant
        # labeling pays smoothness with no data advantage
        n = 5
        scores = np.full((n, 2), 0.5)
        scores[0] = [0.6, 0.4]  # break the argmax tie asymmetrically
        edges = [[i, i + 1] for i in range(n - 1)]
        problem = tiny_problem(scores, edges, np.full((2, 2), 0.5), lam=50.0, hard=True)
        result = solve(problem)
        assert len(set(result.labels.tolist())) == 1
        brute = brute_force_solve(problem)
        assert len(set(brute.labels.tolist())) == 1
        assert abs(result.energy - brute.energy) < 1e-9

    def test_moves_strictly_decrease_energy(self):
        rng = np.random.default_rng(6)
        problem = random_problem(rng, 15, 4, lam=1.0)
        result = solve(problem)
        for move in result.moves:
            assert move["energy_after"] < move["energy_before"] - 1e-12

    def test_local_optimality_no_further_swaps(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            problem = random_problem(rng, 10, 3, lam=0.8)
            result = solve(problem)
            again = solve(problem, initial=result.labels)
            assert again.moves == []
            assert abs(again.energy - result.energy) < 1e-12

    def test_energy_never_above_initial(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            problem = random_problem(rng, 12, 5)
            initial = rng.integers(0, 5, 12)
            result = solve(problem, initial=initial)
            assert result.energy <= total_energy(problem, initial) + 1e-12

    def test_expansion_reduces_energy(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            problem = random_problem(rng, 12, 4, lam=1.0)
            initial = rng.integers(0, 4, 12)
            result = solve(problem, initial=initial, method="expansion")
            assert result.energy <= total_energy(problem, initial) + 1e-12

    def test_expansion_reaches_its_own_local_optimum(self):
        rng = np.random.default_rng(10)
        for _ in range(10):
            problem = random_problem(rng, int(rng.integers(2, 10)), 3)
            got = solve(problem, method="expansion")
            again = solve(problem, initial=got.labels, method="expansion")
            assert again.moves == []
            assert brute_force_solve(problem).energy <= got.energy + 1e-12

    def test_unknown_method(self):
        problem = tiny_problem([[1.0, 0.0]], [], uniform_p(2), 0.5)
        with pytest.raises(ValueError, match="unknown method"):
            solve(problem, method="icm")


class TestBruteForce:
    def test_single_node_is_argmax(self):
        problem = tiny_problem([[0.2, 0.5, 0.3]], [], uniform_p(3), 0.7)
        result = brute_force_solve(problem)
        assert result.labels.tolist() == [1]

    def test_never_above_solver(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            problem = random_problem(rng, 8, 3)
            assert brute_force_solve(problem).energy <= solve(problem).energy + 1e-12

    def test_triangle_fixture_enumeration(self):
        scores = [[0.6, 0.4], [0.55, 0.45], [0.1, 0.9]]
        p = np.array([[0.7, 0.4], [0.3, 0.6]])
        problem = tiny_problem(scores, [[0, 1], [0, 2], [1, 2]], p, lam=0.4)
        best_energy, best_labels = np.inf, None
        for l0 in range(2):
            for l1 in range(2):
                for l2 in range(2):
                    e = reference_energy(problem, [l0, l1, l2])
                    if e < best_energy:
                        best_energy, best_labels = e, [l0, l1, l2]
        result = brute_force_solve(problem)
        assert result.labels.tolist() == best_labels
        assert abs(result.energy - best_energy) < 1e-12

    def test_too_large_rejected(self):
        rng = np.random.default_rng(12)
        problem = random_problem(rng, 30, 11)
        with pytest.raises(ValueError, match="too large"):
            brute_force_solve(problem)

    def test_tie_prefers_lexicographically_smallest(self):
        scores = [[0.5, 0.5], [0.5, 0.5]]
        problem = tiny_problem(scores, [], uniform_p(2), 0.0)
        assert brute_force_solve(problem).labels.tolist() == [0, 0]


class TestProblemValidation:
    def test_node_count_mismatch(self):
        with pytest.raises(ValueError, match="node count"):
            graph = AdjacencyGraph(3, np.empty((0, 2), dtype=np.int64))
            cooc = conditional_from_counts(np.zeros((2, 2), dtype=np.int64), 1.0, 1e-6)
            MRFProblem(scores=np.full((2, 2), 0.5), graph=graph, cooccurrence=cooc, lam=0.5)

    def test_negative_lambda(self):
        with pytest.raises(ValueError, match="lambda"):
            tiny_problem([[1.0, 0.0]], [], uniform_p(2), -0.1)

    def test_per_node_constant_shift_keeps_argmin(self):
        rng = np.random.default_rng(13)
        problem = random_problem(rng, 6, 4, lam=0.0)
        base = problem.data_costs
        shifted = base + rng.uniform(-3, 3, size=(6, 1))
        assert np.array_equal(np.argmin(base, axis=1), np.argmin(shifted, axis=1))
