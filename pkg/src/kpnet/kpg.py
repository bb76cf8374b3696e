"""Key Point Generation evaluation: threshold fitting, prediction dedup,
and Coverage@n of human key points by centrality-ranked questions.

The matching threshold is fitted on the corpus's binary annotations:
candidate cuts sit midway between consecutive distinct similarity values
(plus sentinels below/above all of them), and the cut maximizing
TPR - FPR (Youden's J) wins, ties resolved toward the larger cut.  The
ROC point closest to (0, 1) is available as an alternative rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .centrality import CentralityMeasure, compute_centrality, top_n_questions
from .corpus import Corpus, KeyPoint, Label, slice_corpus
from .embeddings import EmbeddingVector, cosine, lookup
from .errors import DegenerateLabels, EmptyTruth
from .kpm import ConfigFingerprint
from .network import QaNetwork
from .qgen import Question


@dataclass(frozen=True)
class Threshold:
    theta: float
    tpr: float
    fpr: float
    source: str = ""

    def __post_init__(self):
        if not (-1.0 <= self.theta <= 1.0):
            raise ValueError("theta must lie in [-1, 1]")


@dataclass(frozen=True)
class KpgReport:
    measure_kind: str
    mean_curve: dict[int, float]  # n -> Coverage@n averaged over slices
    per_slice: dict[tuple[str, str], dict[int, float]]
    threshold: Threshold
    skipped_slices: tuple[tuple[str, str], ...] = ()
    config: ConfigFingerprint | None = None
    corpus_hash: str = ""


def _rates(pairs: Sequence[tuple[float, int]], cut: float) -> tuple[float, float]:
    tp = sum(1 for s, y in pairs if y == 1 and s >= cut)
    fp = sum(1 for s, y in pairs if y == 0 and s >= cut)
    pos = sum(1 for _, y in pairs if y == 1)
    neg = len(pairs) - pos
    return tp / pos, fp / neg


def candidate_cuts(similarities: Sequence[float]) -> list[float]:
    """Midpoints between consecutive distinct values plus sentinels that
    classify everything positive / everything negative.

    Sentinels are clamped to the cosine domain [-1, 1], which preserves
    their classification as long as no similarity sits exactly at 1.
    """
    values = sorted(set(similarities))
    cuts = [max(-1.0, values[0] - 1.0)]
    cuts += [(a + b) / 2.0 for a, b in zip(values, values[1:])]
    cuts.append(min(1.0, values[-1] + 1.0))
    return cuts


def select_threshold(
    labeled_pairs: Sequence[tuple[float, int]],
    source: str = "",
    rule: str = "youden",
) -> Threshold:
    """Pick the similarity cut maximizing TPR - FPR (``rule='youden'``) or
    minimizing distance to the ROC ideal (0, 1) (``rule='closest_topleft'``).

    A pair classifies as positive when similarity >= cut.  Ties between
    cuts resolve toward the larger cut.  Raises DegenerateLabels unless both
    classes are present.
    """
    labels = {y for _, y in labeled_pairs}
    if labels != {0, 1}:
        raise DegenerateLabels(f"need both labels 0 and 1, got {sorted(labels)}")
    if rule not in ("youden", "closest_topleft"):
        raise ValueError(f"unknown threshold rule {rule!r}")

    best: tuple[float, float, float, float] | None = None  # (objective, cut, tpr, fpr)
    for cut in candidate_cuts([s for s, _ in labeled_pairs]):
        tpr, fpr = _rates(labeled_pairs, cut)
        if rule == "youden":
            objective = tpr - fpr
        else:
            objective = -math.hypot(fpr, 1.0 - tpr)
        if best is None or objective > best[0] or (objective == best[0] and cut > best[1]):
            best = (objective, cut, tpr, fpr)
    assert best is not None
    return Threshold(theta=best[1], tpr=best[2], fpr=best[3], source=source)


def labeled_similarity_pairs(
    corpus: Corpus,
    embeddings: Mapping[str, EmbeddingVector],
) -> list[tuple[float, int]]:
    """(similarity, label) pairs from the corpus's annotated (argument,
    key point) pairs; undecided annotations are excluded from fitting."""
    pairs = []
    for ann in corpus.annotations:
        if ann.label is Label.UNDECIDED:
            continue
        sim = cosine(lookup(embeddings, ann.arg_id), lookup(embeddings, ann.kp_id))
        pairs.append((sim, 1 if ann.label is Label.MATCH else 0))
    return pairs


def fit_threshold(
    corpus: Corpus,
    embeddings: Mapping[str, EmbeddingVector],
    source: str = "",
    rule: str = "youden",
) -> Threshold:
    return select_threshold(labeled_similarity_pairs(corpus, embeddings), source=source, rule=rule)


def dedup_top_n(
    ranked_questions: Sequence[str],
    question_embeddings: Mapping[str, EmbeddingVector],
    theta: Threshold | float,
    n: int,
) -> list[str]:
    """Greedy scan in rank order: admit a question iff its similarity to
    every already-admitted question is < theta; stop at n admitted."""
    cut = theta.theta if isinstance(theta, Threshold) else float(theta)
    admitted: list[str] = []
    for q_id in ranked_questions:
        if len(admitted) >= n:
            break
        vec = lookup(question_embeddings, q_id)
        if all(cosine(vec, lookup(question_embeddings, a)) < cut for a in admitted):
            admitted.append(q_id)
    return admitted


def coverage_at_n(
    k_true: Sequence[KeyPoint],
    k_pred: Sequence[str],
    embeddings: Mapping[str, EmbeddingVector],
    theta: Threshold | float,
) -> float:
    """Fraction of true key points within similarity >= theta of at least
    one predicted question.  Empty predictions cover nothing."""
    if not k_true:
        raise EmptyTruth("coverage needs at least one true key point")
    cut = theta.theta if isinstance(theta, Threshold) else float(theta)
    covered = 0
    for kp in k_true:
        kp_vec = lookup(embeddings, kp.kp_id)
        if any(cosine(kp_vec, lookup(embeddings, q)) >= cut for q in k_pred):
            covered += 1
    return covered / len(k_true)


def slice_coverage_curve(
    key_points: Sequence[KeyPoint],
    network: QaNetwork,
    measure: CentralityMeasure,
    embeddings: Mapping[str, EmbeddingVector],
    theta: Threshold | float,
    n_max: int,
) -> dict[int, float]:
    """Coverage@n for n = 1..n_max on one slice.

    The greedy dedup sequence is prefix-stable in n, so it is computed once
    at n_max and prefixes serve every smaller n.
    """
    scores = compute_centrality(network, measure)
    ranked = top_n_questions(scores, network, max(1, len(network.question_nodes)))
    deduped = dedup_top_n(ranked, embeddings, theta, n_max)
    curve = {}
    for n in range(1, n_max + 1):
        curve[n] = coverage_at_n(key_points, deduped[:n], embeddings, theta)
    return curve


def evaluate_kpg(
    corpus: Corpus,
    questions: Sequence[Question],
    networks: Mapping[tuple[str, str], QaNetwork],
    measure: CentralityMeasure,
    theta: Threshold | float,
    n_max: int,
    embeddings: Mapping[str, EmbeddingVector],
    config: ConfigFingerprint | None = None,
    corpus_hash: str = "",
) -> KpgReport:
    """Per-slice coverage curves plus their unweighted mean.

    ``networks`` maps (topic_id, stance value) to the slice's QA network.
    Slices without key points are skipped and listed.
    """
    per_slice: dict[tuple[str, str], dict[int, float]] = {}
    skipped: list[tuple[str, str]] = []
    for topic_id, stance in corpus.slices():
        key = (topic_id, stance.value)
        part = slice_corpus(corpus, topic_id, stance)
        if not part.key_points or key not in networks:
            skipped.append(key)
            continue
        per_slice[key] = slice_coverage_curve(
            part.key_points, networks[key], measure, embeddings, theta, n_max
        )

    mean_curve = {}
    if per_slice:
        for n in range(1, n_max + 1):
            mean_curve[n] = float(sum(curve[n] for curve in per_slice.values()) / len(per_slice))
    return KpgReport(
        measure_kind=measure.kind,
        mean_curve=mean_curve,
        per_slice=per_slice,
        threshold=theta if isinstance(theta, Threshold)
        else Threshold(float(theta), 0.0, 0.0, source="override"),
        skipped_slices=tuple(skipped),
        config=config,
        corpus_hash=corpus_hash,
    )
