import numpy as np
import pytest

from cogneq.consensus import (ConsensusParams, ExtractionInfeasible,
                              build_weights, compute_finite_time_params,
                              finite_time_average, iterate,
                              random_strongly_connected)

# own-sequence extraction often needs more rounds than the in-network bound;
# the warning is the documented behavior
pytestmark = pytest.mark.filterwarnings("ignore:node .*extraction horizon")


def complete(Q):
    return ~np.eye(Q, dtype=bool)


def star(Q):
    g = np.zeros((Q, Q), dtype=bool)
    g[0, 1:] = True      # hub listens to all leaves
    g[1:, 0] = True      # leaves listen to the hub
    return g


class TestWeights:
    def test_single_node(self):
        params = build_weights(np.zeros((1, 1), dtype=bool), F=3)
        assert params.A == np.array([[3.0]])

    def test_complete_three(self):
        params = build_weights(complete(3), F=3)
        expected = np.ones((3, 3))
        np.testing.assert_array_equal(params.A, expected)

    def test_star_leaf_rows(self):
        Q, F = 5, 5
        params = build_weights(star(Q), F=F)
        for leaf in range(1, Q):
            assert params.A[leaf, leaf] == F - 1
        assert params.A[0, 0] == F - (Q - 1)


class TestIterate:
    def test_constant_vector(self):
        params = build_weights(complete(4), F=4)
        z = np.full(4, 2.5)
        out = iterate(z, params)
        np.testing.assert_allclose(out, np.diag(params.A) * 2.5, atol=1e-14)

    def test_two_node_swap(self):
        params = build_weights(complete(2), F=2)   # a_qq = 1
        out = iterate(np.array([0.0, 2.0]), params)
        np.testing.assert_allclose(out, [2.0, 0.0], atol=1e-14)

    def test_linearity(self):
        rng = np.random.default_rng(0)
        params = build_weights(random_strongly_connected(5, rng), F=5)
        z1, z2 = rng.normal(size=5), rng.normal(size=5)
        np.testing.assert_allclose(iterate(z1 + z2, params),
                                   iterate(z1, params) + iterate(z2, params),
                                   atol=1e-14)


class TestFiniteTimeParams:
    def test_single_node(self):
        params = compute_finite_time_params(np.zeros((1, 1), dtype=bool))
        assert params.L[0] == 0
        np.testing.assert_allclose(params.m[0], [1.0])

    def test_complete_three_average(self):
        params = compute_finite_time_params(complete(3), F=3)
        res = finite_time_average(np.array([1.0, 2.0, 3.0]), params)
        assert res.value == pytest.approx(2.0, abs=1e-9)
        np.testing.assert_allclose(res.per_node, 2.0, atol=1e-9)

    def test_random_digraphs_match_direct_average(self):
        # 20 extraction-feasible strongly connected digraphs; structurally
        # defective (graph, node) pairs are skipped (they raise, by contract)
        done = 0
        seed = 0
        while done < 20:
            rng = np.random.default_rng(seed)
            seed += 1
            Q = int(rng.integers(2, 7))
            graph = random_strongly_connected(Q, rng)
            try:
                params = compute_finite_time_params(graph)
            except ExtractionInfeasible:
                continue
            done += 1
            for _ in range(10):
                z0 = rng.normal(size=Q)
                res = finite_time_average(z0, params)
                assert res.value == pytest.approx(z0.mean(), abs=1e-7)
                np.testing.assert_allclose(res.per_node, z0.mean(), atol=1e-7)

    def test_disconnected_raises_naming_node(self):
        g = np.zeros((4, 4), dtype=bool)
        g[0, 1] = g[1, 0] = True     # {0,1} component; {2,3} isolated
        g[2, 3] = g[3, 2] = True
        with pytest.raises(ExtractionInfeasible) as err:
            compute_finite_time_params(g)
        assert err.value.node is not None

    def test_identity_holds_for_all_initial_vectors(self):
        rng = np.random.default_rng(42)
        graph = random_strongly_connected(5, rng)
        params = compute_finite_time_params(graph)
        W = params.iteration_matrix
        for q in range(5):
            rows = np.stack([np.linalg.matrix_power(W.T, i)[:, q]
                             for i in range(params.L[q] + 1)])
            target = np.full(5, 1.0 / 5)
            np.testing.assert_allclose(rows.T @ params.m[q], target,
                                       atol=1e-8)


class TestFiniteTimeAverage:
    def test_all_equal(self):
        for graph in (complete(4), star(4)):
            params = compute_finite_time_params(graph)
            res = finite_time_average(np.full(graph.shape[0], 5.0), params)
            assert res.value == pytest.approx(5.0, abs=1e-9)

    def test_message_count_formula(self):
        params = compute_finite_time_params(complete(3), F=3)
        res = finite_time_average(np.array([1.0, 2.0, 3.0]), params)
        Lmax = int(params.L.max())
        assert res.iters_used == Lmax + 1
        assert res.messages_total == 3 * (Lmax + 1)

    def test_incomplete_params_rejected(self):
        params = build_weights(complete(3), F=3)
        with pytest.raises(ValueError):
            finite_time_average(np.ones(3), params)

    def test_locality(self):
        # node q's output only uses its own observed sequence: corrupting
        # another node's coefficients cannot change it
        rng = np.random.default_rng(3)
        graph = random_strongly_connected(4, rng)
        params = compute_finite_time_params(graph)
        z0 = rng.normal(size=4)
        res = finite_time_average(z0, params)
        corrupted = ConsensusParams(A=params.A, F=params.F, graph=params.graph,
                                    L=params.L.copy(),
                                    m=[m.copy() for m in params.m])
        corrupted.m[1] = corrupted.m[1] * 0.0
        res2 = finite_time_average(z0, corrupted)
        assert res2.per_node[0] == res.per_node[0]
        assert res2.per_node[2] == res.per_node[2]

    def test_early_broadcast(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            Q = int(rng.integers(3, 7))
            graph = random_strongly_connected(Q, rng)
            params = compute_finite_time_params(graph)
            z0 = rng.normal(size=Q)
            base = finite_time_average(z0, params)
            early = finite_time_average(z0, params, early_broadcast=True)
            assert early.value == base.value
            assert 0 <= base.iters_used - early.iters_used <= 1

    def test_horizon_within_degree_bound_plus_slack(self):
        for seed in range(10):
            rng = np.random.default_rng(100 + seed)
            Q = int(rng.integers(3, 7))
            graph = random_strongly_connected(Q, rng)
            params = compute_finite_time_params(graph)
            slack = max(0, int(np.max(params.L - (Q - params.deg_in))))
            res = finite_time_average(rng.normal(size=Q), params)
            assert res.iters_used <= Q - int(params.deg_in.min()) + 1 + slack
