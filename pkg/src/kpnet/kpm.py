"""Key Point Matching evaluation.

An argument's score against a key point is the mean cosine similarity of
the argument's generated questions to that key point, so the whole
evaluation needs one embedding per question and per key point (linear in
corpus size) instead of one model call per (argument, key point) pair.
Ranking quality is scored with the strict average-precision protocol:
per-argument best match, score-sorted, truncated to the top half, with
unannotated pairs counted as negatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .corpus import Argument, Corpus, KeyPoint, Label, slice_corpus
from .embeddings import EmbeddingVector, cosine, lookup
from .errors import EmptyQuestionSet
from .qgen import GenerationStyle, Question


@dataclass(frozen=True)
class MatchScore:
    arg_id: str
    kp_id: str
    score: float


@dataclass(frozen=True)
class ConfigFingerprint:
    question_style: str
    generator_id: str
    embedding_id: str
    extras: tuple[tuple[str, str], ...] = ()

    def to_json(self) -> dict:
        out = {
            "question_style": self.question_style,
            "generator_id": self.generator_id,
            "embedding_id": self.embedding_id,
        }
        out.update(dict(self.extras))
        return out


@dataclass(frozen=True)
class KpmReport:
    per_slice: dict[tuple[str, str], float]  # (topic_id, stance value) -> AP
    overall_map: float
    skipped_slices: tuple[tuple[str, str], ...]  # no positive annotation, AP undefined
    slice_sizes: dict[tuple[str, str], tuple[int, int]] = field(default_factory=dict)
    fallback_args: tuple[str, ...] = ()  # arguments scored via their own text
    config: ConfigFingerprint | None = None
    corpus_hash: str = ""


def aggregate_match(
    argument: Argument,
    key_point: KeyPoint,
    questions_of_argument: Sequence[Question],
    embeddings: Mapping[str, EmbeddingVector],
) -> MatchScore:
    """Mean similarity of the argument's questions to the key point.

    With the original style each argument has one identity question, so this
    degenerates to the direct argument/key-point similarity.
    """
    if not questions_of_argument:
        raise EmptyQuestionSet(f"argument {argument.arg_id} has no questions")
    bad = [q.q_id for q in questions_of_argument if q.source_arg_id != argument.arg_id]
    if bad:
        raise ValueError(f"questions {bad} were not generated from argument {argument.arg_id}")
    kp_vec = lookup(embeddings, key_point.kp_id)
    sims = [cosine(lookup(embeddings, q.q_id), kp_vec) for q in questions_of_argument]
    return MatchScore(argument.arg_id, key_point.kp_id, float(sum(sims) / len(sims)))


def strict_average_precision(
    scored_pairs: Sequence[MatchScore],
    annotations: Mapping[tuple[str, str], Label],
    truncation_fraction: float = 0.5,
) -> float:
    """AP over argument-best pairs, truncated, with strict labels.

    Each argument keeps only its highest-scoring key point (score ties by
    kp_id ascending).  Those pairs are sorted by score descending (ties by
    arg_id then kp_id), truncated to the top ceil(fraction * count), and AP
    is the mean of precision@position over match-labeled positions, with
    both no_match and undecided counted as negatives.  Returns 0.0 when no
    positive survives.
    """
    if not (0.0 < truncation_fraction <= 1.0):
        raise ValueError("truncation_fraction must lie in (0, 1]")
    best_by_arg: dict[str, MatchScore] = {}
    for pair in scored_pairs:
        current = best_by_arg.get(pair.arg_id)
        if current is None or (-pair.score, pair.kp_id) < (-current.score, current.kp_id):
            best_by_arg[pair.arg_id] = pair
    ranked = sorted(best_by_arg.values(), key=lambda p: (-p.score, p.arg_id, p.kp_id))
    if not ranked:
        return 0.0
    retained = ranked[: math.ceil(truncation_fraction * len(ranked))]

    hits = 0
    precisions = []
    for position, pair in enumerate(retained, start=1):
        if annotations.get((pair.arg_id, pair.kp_id), Label.UNDECIDED) is Label.MATCH:
            hits += 1
            precisions.append(hits / position)
    return float(sum(precisions) / len(precisions)) if precisions else 0.0


def score_slice(
    corpus_slice: Corpus,
    questions: Sequence[Question],
    embeddings: Mapping[str, EmbeddingVector],
) -> list[MatchScore]:
    """All same-slice (argument, key point) match scores via aggregation."""
    by_arg: dict[str, list[Question]] = {}
    for q in questions:
        by_arg.setdefault(q.source_arg_id, []).append(q)
    scores = []
    for argument in corpus_slice.arguments:
        arg_questions = by_arg.get(argument.arg_id, [])
        if not arg_questions:
            raise EmptyQuestionSet(f"argument {argument.arg_id} has no questions")
        for kp in corpus_slice.key_points:
            scores.append(aggregate_match(argument, kp, arg_questions, embeddings))
    return scores


def evaluate_kpm(
    corpus: Corpus,
    questions: Sequence[Question],
    embeddings: Mapping[str, EmbeddingVector],
    truncation_fraction: float = 0.5,
    config: ConfigFingerprint | None = None,
    corpus_hash: str = "",
    fallback_to_original: bool = True,
) -> KpmReport:
    """Strict AP per (topic, stance) slice plus the unweighted mean.

    Slices without a single match-labeled annotation have undefined AP;
    they are excluded from the mean and listed in the report.  Arguments
    left without questions (e.g. skipped generations) fall back to scoring
    their own text, and are recorded in the report.
    """
    covered = {q.source_arg_id for q in questions}
    fallbacks: list[str] = []
    if fallback_to_original:
        extra = []
        for argument in corpus.arguments:
            if argument.arg_id not in covered:
                fallbacks.append(argument.arg_id)
                extra.append(Question(argument.arg_id, argument.arg_id,
                                      GenerationStyle.ORIGINAL, argument.text, "identity"))
        questions = list(questions) + extra

    label_index = {(a.arg_id, a.kp_id): a.label for a in corpus.annotations}
    per_slice: dict[tuple[str, str], float] = {}
    skipped: list[tuple[str, str]] = []
    sizes: dict[tuple[str, str], tuple[int, int]] = {}
    for topic_id, stance in corpus.slices():
        part = slice_corpus(corpus, topic_id, stance)
        key = (topic_id, stance.value)
        sizes[key] = (len(part.arguments), len(part.key_points))
        if not part.arguments or not part.key_points:
            skipped.append(key)
            continue
        if not any(a.label is Label.MATCH for a in part.annotations):
            skipped.append(key)
            continue
        slice_questions = [q for q in questions
                           if q.source_arg_id in {a.arg_id for a in part.arguments}]
        pairs = score_slice(part, slice_questions, embeddings)
        per_slice[key] = strict_average_precision(pairs, label_index, truncation_fraction)

    overall = float(sum(per_slice.values()) / len(per_slice)) if per_slice else 0.0
    return KpmReport(
        per_slice=per_slice,
        overall_map=overall,
        skipped_slices=tuple(skipped),
        slice_sizes=sizes,
        fallback_args=tuple(sorted(fallbacks)),
        config=config,
        corpus_hash=corpus_hash,
    )
