import pytest

from oracles import (
    betweenness_oracle,
    closeness_oracle,
    pagerank_oracle,
    random_bipartite_network,
)
from kpnet.centrality import (
    CentralityMeasure,
    betweenness_centrality,
    closeness_centrality,
    compute_centrality,
    degree_centrality,
    pagerank,
    top_n_questions,
)
from kpnet.network import QaNetwork, SparsificationPolicy

COMPLETE = SparsificationPolicy(kind="complete")


def net_from_edges(q_ids, d_ids, edges):
    return QaNetwork(tuple(q_ids), tuple(d_ids), tuple(edges), COMPLETE)


class TestPagerank:
    def test_single_edge_symmetry(self):
        net = net_from_edges(["q1"], ["d1"], [("q1", "d1", 0.7)])
        scores = pagerank(net).scores
        assert scores["q1"] == pytest.approx(0.5, abs=1e-9)
        assert scores["d1"] == pytest.approx(0.5, abs=1e-9)

    def test_star_matches_dense_oracle_and_center_wins(self):
        net = net_from_edges(["q1"], ["d1", "d2", "d3"],
                             [("q1", "d1", 0.5), ("q1", "d2", 0.5), ("q1", "d3", 0.5)])
        expected = pagerank_oracle(net, damping=0.85)
        scores = pagerank(net, damping=0.85).scores
        for node in net.nodes:
            assert scores[node] == pytest.approx(expected[node], abs=1e-8)
        assert all(scores["q1"] > scores[d] for d in ("d1", "d2", "d3"))

    def test_uniform_complete_2x2(self):
        w = 0.6
        net = net_from_edges(["q1", "q2"], ["d1", "d2"],
                             [(qi, di, w) for qi in ("q1", "q2") for di in ("d1", "d2")])
        scores = pagerank(net).scores
        for node in net.nodes:
            assert scores[node] == pytest.approx(0.25, abs=1e-9)

    def test_scores_sum_to_one_and_nonnegative(self, rng):
        for _ in range(100):
            net = random_bipartite_network(rng)
            scores = pagerank(net).scores
            assert sum(scores.values()) == pytest.approx(1.0, abs=1e-6)
            assert all(s >= 0.0 for s in scores.values())

    def test_vertex_transitive_graph_is_uniform(self):
        # complete bipartite K_{3,3} with equal weights is vertex-transitive
        q_ids = [f"q{i}" for i in range(3)]
        d_ids = [f"d{i}" for i in range(3)]
        net = net_from_edges(q_ids, d_ids, [(qi, di, 0.3) for qi in q_ids for di in d_ids])
        scores = pagerank(net).scores
        for s in scores.values():
            assert s == pytest.approx(1.0 / 6.0, abs=1e-9)

    def test_nonconvergence_flagged_with_residual(self):
        net = net_from_edges(["q1"], ["d1", "d2"], [("q1", "d1", 0.9), ("q1", "d2", 0.1)])
        result = pagerank(net, tolerance=1e-15, max_iters=2)
        assert result.converged is False
        assert result.iterations == 2
        assert result.residual > 0.0
        assert set(result.scores) == set(net.nodes)

    def test_empty_network_rejected(self):
        with pytest.raises(ValueError):
            pagerank(net_from_edges([], [], []))


class TestDegree:
    def test_isolated_question_scores_zero(self):
        net = net_from_edges(["q1", "q2"], ["d1"], [("q1", "d1", 0.4)])
        assert degree_centrality(net).scores["q2"] == 0.0

    def test_strength_sums_weights(self):
        net = net_from_edges(["q1"], ["d1", "d2"], [("q1", "d1", 0.9), ("q1", "d2", 0.1)])
        assert degree_centrality(net).scores["q1"] == pytest.approx(1.0)

    def test_unweighted_variant_counts_edges(self):
        net = net_from_edges(["q1"], ["d1", "d2"], [("q1", "d1", 0.9), ("q1", "d2", 0.1)])
        assert degree_centrality(net, weighted=False).scores["q1"] == 2.0

    def test_scaling_weights_scales_scores_and_keeps_ranking(self, rng):
        for _ in range(20):
            net = random_bipartite_network(rng)
            if not net.edges:
                continue
            alpha = 0.5  # power of two keeps the arithmetic exact
            scaled = QaNetwork(net.question_nodes, net.argument_nodes,
                               tuple((u, v, w * alpha) for u, v, w in net.edges), net.policy)
            base = degree_centrality(net).scores
            after = degree_centrality(scaled).scores
            for node in net.nodes:
                assert after[node] == pytest.approx(alpha * base[node], abs=1e-15)
            rank = sorted(net.nodes, key=lambda v: (-base[v], v))
            rank_scaled = sorted(net.nodes, key=lambda v: (-after[v], v))
            assert rank == rank_scaled


class TestBetweenness:
    def test_path_center_is_only_intermediary(self):
        net = net_from_edges(["q1", "q2"], ["d1"], [("q1", "d1", 0.5), ("q2", "d1", 0.5)])
        scores = betweenness_centrality(net).scores
        assert scores["d1"] > 0.0
        assert scores["q1"] == 0.0 and scores["q2"] == 0.0
        # one pair {q1, q2}, d1 on its unique shortest path, n=3
        assert scores["d1"] == pytest.approx(1.0, abs=1e-12)

    def test_complete_2x2_matches_enumeration_oracle(self):
        net = net_from_edges(["q1", "q2"], ["d1", "d2"],
                             [(qi, di, 0.5) for qi in ("q1", "q2") for di in ("d1", "d2")])
        expected = betweenness_oracle(net)
        scores = betweenness_centrality(net).scores
        for node in net.nodes:
            assert scores[node] == pytest.approx(expected[node], abs=1e-12)
        # each node lies on one of two tied shortest paths for the opposite pair
        assert scores["q1"] == pytest.approx(0.5 / 3.0, abs=1e-12)

    def test_single_edge_all_zero(self):
        net = net_from_edges(["q1"], ["d1"], [("q1", "d1", 0.8)])
        scores = betweenness_centrality(net).scores
        assert scores == {"q1": 0.0, "d1": 0.0}


class TestCloseness:
    def test_single_full_weight_edge_equal_scores(self):
        net = net_from_edges(["q1"], ["d1"], [("q1", "d1", 1.0)])
        scores = closeness_centrality(net).scores
        assert scores["q1"] == pytest.approx(scores["d1"])
        assert scores["q1"] > 0.0

    def test_path_center_strictly_greatest(self):
        net = net_from_edges(["q1", "q2"], ["d1"], [("q1", "d1", 0.5), ("q2", "d1", 0.5)])
        scores = closeness_centrality(net).scores
        assert scores["d1"] > scores["q1"]
        assert scores["q1"] == pytest.approx(scores["q2"])

    def test_isolated_node_scores_zero(self):
        net = net_from_edges(["q1", "q2"], ["d1"], [("q1", "d1", 0.5)])
        assert closeness_centrality(net).scores["q2"] == 0.0

    def test_random_10_node_matches_dijkstra_oracle(self, rng):
        for _ in range(25):
            net = random_bipartite_network(rng, max_side=5)
            expected = closeness_oracle(net)
            scores = closeness_centrality(net).scores
            for node in net.nodes:
                assert scores[node] == pytest.approx(expected[node], abs=1e-9)


class TestOracleEquivalenceSmall:
    """Exhaustive oracle suite on random networks with <= 12 nodes."""

    def test_all_measures_match_oracles(self, rng):
        for i in range(60):
            net = random_bipartite_network(rng, equal_weights=(i % 4 == 0))
            pr = pagerank(net).scores
            pr_expected = pagerank_oracle(net)
            bt = betweenness_centrality(net).scores
            bt_expected = betweenness_oracle(net)
            cl = closeness_centrality(net).scores
            cl_expected = closeness_oracle(net)
            for node in net.nodes:
                assert pr[node] == pytest.approx(pr_expected[node], abs=1e-8)
                assert bt[node] == pytest.approx(bt_expected[node], abs=1e-9)
                assert cl[node] == pytest.approx(cl_expected[node], abs=1e-9)


class TestRankingInvariance:
    def test_pagerank_ranking_unchanged_by_weight_scaling(self, rng):
        for _ in range(20):
            net = random_bipartite_network(rng)
            if not net.edges:
                continue
            scaled = QaNetwork(net.question_nodes, net.argument_nodes,
                               tuple((u, v, w * 0.25) for u, v, w in net.edges), net.policy)
            base = pagerank(net)
            after = pagerank(scaled)
            assert top_n_questions(base, net, 12) == top_n_questions(after, scaled, 12)

    def test_adding_edge_never_decreases_endpoint_strength(self, rng):
        for _ in range(30):
            net = random_bipartite_network(rng, edge_prob=0.4)
            existing = {(u, v) for u, v, _ in net.edges}
            missing = [(qi, di) for qi in net.question_nodes for di in net.argument_nodes
                       if (qi, di) not in existing]
            if not missing:
                continue
            qi, di = missing[int(rng.integers(0, len(missing)))]
            w = float(rng.uniform(0.05, 1.0))
            grown = QaNetwork(net.question_nodes, net.argument_nodes,
                              net.edges + ((qi, di, w),), net.policy)
            before = degree_centrality(net).scores
            after = degree_centrality(grown).scores
            assert after[qi] >= before[qi]
            assert after[di] >= before[di]


class TestTopN:
    def make_scores(self, net, mapping):
        return compute_centrality(net, CentralityMeasure(kind="degree")).__class__(
            measure=CentralityMeasure(kind="degree"), scores=mapping
        )

    def test_argument_nodes_never_selected(self):
        net = net_from_edges(["q1", "q2"], ["d1"], [("q1", "d1", 0.9)])
        scores = self.make_scores(net, {"q1": 0.3, "d1": 0.9, "q2": 0.1})
        assert top_n_questions(scores, net, 1) == ["q1"]

    def test_ties_break_by_id(self):
        net = net_from_edges(["q2", "q1"], ["d1"], [])
        scores = self.make_scores(net, {"q1": 0.5, "q2": 0.5, "d1": 1.0})
        assert top_n_questions(scores, net, 2) == ["q1", "q2"]

    def test_n_larger_than_question_count(self):
        net = net_from_edges(["q1", "q2"], ["d1"], [])
        scores = self.make_scores(net, {"q1": 0.2, "q2": 0.7, "d1": 0.0})
        assert top_n_questions(scores, net, 10) == ["q2", "q1"]
