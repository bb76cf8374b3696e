import numpy as np
import pytest

from conftest import tiny_corpus
from oracles import coverage_oracle, threshold_scan_oracle
from kpnet.centrality import CentralityMeasure
from kpnet.corpus import KeyPoint, Stance
from kpnet.embeddings import EmbeddingVector, MockEmbeddingBackend, cosine, embed_texts
from kpnet.errors import DegenerateLabels, EmptyTruth
from kpnet.kpg import (
    Threshold,
    candidate_cuts,
    coverage_at_n,
    dedup_top_n,
    evaluate_kpg,
    fit_threshold,
    select_threshold,
)
from kpnet.network import build_network, SparsificationPolicy
from kpnet.qgen import GenerationStyle, MockChatBackend, generate_corpus_questions


class TestSelectThreshold:
    def test_separated_classes_midpoint_of_widest_gap(self):
        pairs = [(0.9, 1), (0.8, 1), (0.2, 0), (0.1, 0)]
        out = select_threshold(pairs)
        assert out.theta == pytest.approx(0.5)
        assert out.tpr == 1.0 and out.fpr == 0.0

    def test_interleaved_labels_matches_oracle_and_j_below_one(self):
        pairs = [(0.8, 1), (0.7, 0), (0.6, 1), (0.5, 0), (0.4, 1), (0.3, 0)]
        out = select_threshold(pairs)
        theta, tpr, fpr = threshold_scan_oracle(pairs)
        assert out.theta == theta
        assert (out.tpr - out.fpr) < 1.0

    def test_separable_case_rates(self):
        pairs = [(0.95, 1), (0.85, 1), (0.75, 1), (0.4, 0), (0.3, 0)]
        out = select_threshold(pairs)
        assert out.tpr == 1.0
        assert out.fpr == 0.0

    def test_single_class_rejected(self):
        with pytest.raises(DegenerateLabels):
            select_threshold([(0.5, 1), (0.6, 1)])

    def test_random_instances_match_exhaustive_scan(self, rng):
        for _ in range(150):
            n = int(rng.integers(2, 60))
            pairs = [(float(np.round(rng.uniform(-1, 1), 3)), int(rng.integers(0, 2)))
                     for _ in range(n)]
            labels = {y for _, y in pairs}
            if labels != {0, 1}:
                continue
            out = select_threshold(pairs)
            theta, tpr, fpr = threshold_scan_oracle(pairs)
            assert out.theta == theta
            assert out.tpr == tpr and out.fpr == fpr

    def test_closest_topleft_rule_matches_oracle(self, rng):
        for _ in range(100):
            n = int(rng.integers(4, 40))
            pairs = [(float(rng.uniform(-1, 1)), int(rng.integers(0, 2))) for _ in range(n)]
            if {y for _, y in pairs} != {0, 1}:
                continue
            out = select_threshold(pairs, rule="closest_topleft")
            theta, _, _ = threshold_scan_oracle(pairs, rule="closest_topleft")
            assert out.theta == theta

    def test_theta_stays_in_cosine_domain(self, rng):
        for _ in range(100):
            pairs = [(float(rng.uniform(-1, 1)), int(rng.integers(0, 2))) for _ in range(10)]
            if {y for _, y in pairs} != {0, 1}:
                continue
            out = select_threshold(pairs)
            assert -1.0 <= out.theta <= 1.0

    def test_candidate_cuts_cover_sentinels(self):
        cuts = candidate_cuts([0.2, 0.4])
        assert cuts[0] < 0.2  # classifies everything positive
        assert cuts[-1] >= 1.0  # classifies everything negative (clamped)
        assert cuts[1] == pytest.approx(0.3)


def unit(v):
    v = np.asarray(v, dtype=float)
    return EmbeddingVector(values=v / np.linalg.norm(v), model="m")


class TestDedup:
    def setup_method(self):
        # qA and qB nearly parallel (sim ~0.95); qC nearly orthogonal to both
        self.emb = {
            "qA": unit([1.0, 0.0, 0.0]),
            "qB": unit([0.95, float(np.sqrt(1 - 0.95**2)), 0.0]),
            "qC": unit([0.1, 0.0, 1.0]),
        }

    def test_greedy_rule_skips_near_duplicate(self):
        out = dedup_top_n(["qA", "qB", "qC"], self.emb, Threshold(0.8, 0, 0), n=2)
        assert out == ["qA", "qC"]

    def test_all_distinct_is_noop(self):
        out = dedup_top_n(["qA", "qC"], self.emb, Threshold(0.8, 0, 0), n=2)
        assert out == ["qA", "qC"]

    def test_n_one_keeps_first(self):
        out = dedup_top_n(["qB", "qA", "qC"], self.emb, Threshold(0.0, 0, 0), n=1)
        assert out == ["qB"]

    def test_output_pairwise_below_theta_and_subsequence(self, rng):
        for _ in range(50):
            ids = [f"q{i}" for i in range(int(rng.integers(2, 12)))]
            emb = {i: EmbeddingVector(values=rng.standard_normal(4), model="m") for i in ids}
            theta = float(rng.uniform(0.1, 0.9))
            out = dedup_top_n(ids, emb, theta, n=int(rng.integers(1, 8)))
            for i, a in enumerate(out):
                for b in out[i + 1:]:
                    assert cosine(emb[a], emb[b]) < theta
            positions = [ids.index(x) for x in out]
            assert positions == sorted(positions)


class TestCoverage:
    def kps(self, vectors):
        out = {}
        kps = []
        for i, v in enumerate(vectors):
            kp = KeyPoint(f"k{i}", "t0", Stance.PRO, f"key point {i}")
            kps.append(kp)
            out[kp.kp_id] = unit(v)
        return kps, out

    def test_three_of_four_covered(self):
        kps, emb = self.kps([[1, 0], [0.9, 0.1], [0.8, 0.2], [-1, 0.1]])
        emb["q0"] = unit([1.0, 0.05])
        assert coverage_at_n(kps, ["q0"], emb, Threshold(0.9, 0, 0)) == 0.75

    def test_empty_predictions_cover_nothing(self):
        kps, emb = self.kps([[1, 0]])
        assert coverage_at_n(kps, [], emb, Threshold(0.5, 0, 0)) == 0.0

    def test_empty_truth_rejected(self):
        with pytest.raises(EmptyTruth):
            coverage_at_n([], ["q0"], {"q0": unit([1, 0])}, 0.5)

    def test_matches_double_loop_oracle(self, rng):
        for _ in range(50):
            n_k, n_q = int(rng.integers(1, 8)), int(rng.integers(0, 8))
            kp_vecs = [rng.standard_normal(6) for _ in range(n_k)]
            q_vecs = [rng.standard_normal(6) for _ in range(n_q)]
            kps, emb = self.kps(kp_vecs)
            pred = []
            for i, v in enumerate(q_vecs):
                emb[f"q{i}"] = unit(v)
                pred.append(f"q{i}")
            theta = float(rng.uniform(-0.5, 0.9))
            got = coverage_at_n(kps, pred, emb, theta)
            expected = coverage_oracle([emb[k.kp_id].values for k in kps],
                                       [emb[p].values for p in pred], theta)
            assert got == expected


class TestEvaluateKpg:
    def build(self, corpus, seed=0):
        questions = generate_corpus_questions(
            corpus, GenerationStyle.CLOSED, MockChatBackend(n_questions=4, seed=seed)
        ).questions
        backend = MockEmbeddingBackend(dim=16, seed=seed)
        pairs = [(q.q_id, q.text) for q in questions]
        pairs += [(k.kp_id, k.text) for k in corpus.key_points]
        pairs += [(a.arg_id, a.text) for a in corpus.arguments]
        vectors = embed_texts([t for _, t in pairs], backend)
        emb = {i: v for (i, _), v in zip(pairs, vectors)}
        networks = {}
        for topic_id, stance in corpus.slices():
            from kpnet.corpus import slice_corpus

            part = slice_corpus(corpus, topic_id, stance)
            slice_qs = [x for x in questions
                        if x.source_arg_id in {a.arg_id for a in part.arguments}]
            networks[(topic_id, stance.value)] = build_network(
                slice_qs, part.arguments, emb, SparsificationPolicy(kind="complete")
            )
        return questions, emb, networks

    def test_monotone_deterministic_curves(self):
        corpus = tiny_corpus()
        questions, emb, networks = self.build(corpus)
        for kind in ("pagerank", "degree", "betweenness", "closeness"):
            report = evaluate_kpg(corpus, questions, networks, CentralityMeasure(kind=kind),
                                  Threshold(0.1, 0, 0), n_max=5, embeddings=emb)
            values = [report.mean_curve[n] for n in range(1, 6)]
            assert all(b >= a for a, b in zip(values, values[1:]))
            again = evaluate_kpg(corpus, questions, networks, CentralityMeasure(kind=kind),
                                 Threshold(0.1, 0, 0), n_max=5, embeddings=emb)
            assert report == again

    def test_n_max_one(self):
        corpus = tiny_corpus()
        questions, emb, networks = self.build(corpus)
        report = evaluate_kpg(corpus, questions, networks, CentralityMeasure(kind="degree"),
                              Threshold(0.1, 0, 0), n_max=1, embeddings=emb)
        assert set(report.mean_curve) == {1}

    def test_coverage_non_increasing_in_theta(self):
        corpus = tiny_corpus()
        questions, emb, networks = self.build(corpus)
        thetas = [-0.5, 0.0, 0.2, 0.5, 0.9]
        finals = []
        for theta in thetas:
            report = evaluate_kpg(corpus, questions, networks, CentralityMeasure(kind="degree"),
                                  Threshold(theta, 0, 0), n_max=4, embeddings=emb)
            finals.append(report.mean_curve[4])
        assert all(b <= a for a, b in zip(finals, finals[1:]))


class TestBundledSliceFixture:
    """Smoke the dedup + coverage machinery on realistic texts: one bundled
    opposition slice with annotated key points and per-measure question
    rankings."""

    @pytest.fixture
    def fixture_data(self):
        import json
        from conftest import FIXTURES

        return json.loads((FIXTURES / "social_media_regulation_con.json").read_text())

    def test_fixture_shape(self, fixture_data):
        assert len(fixture_data["annotated_key_points"]) == 5
        assert set(fixture_data["top_questions"]) == {
            "pagerank", "degree", "betweenness", "closeness"}
        assert all(len(v) == 5 for v in fixture_data["top_questions"].values())

    def test_coverage_machinery_on_fixture_texts(self, fixture_data):
        backend = MockEmbeddingBackend(dim=64, seed=0)
        kps = [KeyPoint(f"k{i}", "t0", Stance.CON, text)
               for i, text in enumerate(fixture_data["annotated_key_points"])]
        for measure, ranked_texts in sorted(fixture_data["top_questions"].items()):
            ids = [f"{measure}_q{i}" for i in range(len(ranked_texts))]
            texts = [k.text for k in kps] + ranked_texts
            vectors = embed_texts(texts, backend)
            emb = dict(zip([k.kp_id for k in kps] + ids, vectors))
            deduped = dedup_top_n(ids, emb, Threshold(0.5, 0, 0), n=5)
            positions = [ids.index(x) for x in deduped]
            assert positions == sorted(positions)
            for n in range(1, len(deduped) + 1):
                value = coverage_at_n(kps, deduped[:n], emb, Threshold(0.1, 0, 0))
                assert 0.0 <= value <= 1.0


class TestFitThreshold:
    def test_fit_on_corpus_annotations_excludes_undecided(self):
        corpus = tiny_corpus()
        backend = MockEmbeddingBackend(dim=16, seed=3)
        pairs = [(a.arg_id, a.text) for a in corpus.arguments]
        pairs += [(k.kp_id, k.text) for k in corpus.key_points]
        vectors = embed_texts([t for _, t in pairs], backend)
        emb = {i: v for (i, _), v in zip(pairs, vectors)}
        out = fit_threshold(corpus, emb, source=backend.identifier)
        assert out.source == backend.identifier
        assert -1.0 <= out.theta <= 1.0
