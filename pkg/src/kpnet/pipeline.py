"""Resumable pipeline stages: ingest -> qgen -> embed -> network ->
centrality -> kpm -> kpg.

Each stage writes its outputs under the run directory and is skipped with a
notice when they already exist, so staged execution and a monolithic run
produce byte-identical trees.  Questions and vectors live in on-disk caches
keyed by content, which is what makes re-runs and stage resumption free of
backend calls.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from functools import cached_property
from pathlib import Path

from . import __version__
from .config import PipelineConfig
from .corpus import Corpus, corpus_hash, load_corpus, serialize_corpus, slice_corpus, validate
from .embeddings import (
    EmbeddingStore,
    HttpEmbeddingBackend,
    MockEmbeddingBackend,
    VectorCache,
    embed_texts,
)
from .errors import ConfigError, KpnetError, MissingUpstream
from .centrality import CentralityMeasure, compute_centrality
from .kpg import KpgReport, Threshold, evaluate_kpg, fit_threshold
from .kpm import ConfigFingerprint, KpmReport, evaluate_kpm
from .network import QaNetwork, build_network, read_network, write_network
from .qgen import (
    FixtureChatBackend,
    GenerationStyle,
    HttpChatBackend,
    MockChatBackend,
    QuestionCache,
    load_template,
    read_questions_jsonl,
    write_questions_jsonl,
)
from .report import (
    RunManifest,
    centrality_csv,
    kpg_curves_csv,
    kpg_report_json,
    kpm_csv,
    kpm_report_json,
    write_manifest,
)

log = logging.getLogger(__name__)

STAGES = ("ingest", "qgen", "embed", "network", "centrality", "kpm", "kpg")

_REQUIRES = {
    "ingest": (),
    "qgen": ("ingest",),
    "embed": ("qgen",),
    "network": ("embed",),
    "centrality": ("network",),
    "kpm": ("embed",),
    "kpg": ("centrality",),
}

_MARKERS = {
    "ingest": ("corpus.jsonl",),
    "qgen": ("questions.jsonl",),
    "embed": ("embeddings.json",),
    "network": ("networks/index.json",),
    "centrality": ("centrality_scores.csv",),
    "kpm": ("kpm.json", "kpm.csv"),
    "kpg": ("kpg.json", "kpg_curves.csv", "threshold.json"),
}


def resolve_generation_backend(config: PipelineConfig):
    head, _, rest = config.generator.partition(":")
    if head == "mock":
        n = int(rest) if rest else config.max_questions
        return MockChatBackend(n_questions=n, seed=config.seed)
    if head == "fixture":
        if not rest:
            raise ConfigError("fixture generator needs a path: fixture:<file.jsonl>")
        return FixtureChatBackend(rest)
    if head == "chat":
        if not rest:
            raise ConfigError("chat generator needs a model: chat:<model>")
        kwargs = {"api_key_env": config.generator_api_key_env}
        if config.generator_endpoint:
            kwargs["endpoint"] = config.generator_endpoint
        return HttpChatBackend(rest, **kwargs)
    raise ConfigError(f"unknown generator backend {config.generator!r}")


def resolve_embedding_backend(config: PipelineConfig):
    head, _, rest = config.embedding.partition(":")
    if head == "mock":
        dim = int(rest) if rest else 64
        return MockEmbeddingBackend(dim=dim, seed=config.seed)
    if head == "http":
        if not rest:
            raise ConfigError("http embedding backend needs a model: http:<model>")
        kwargs = {"api_key_env": config.embedding_api_key_env}
        if config.embedding_endpoint:
            kwargs["endpoint"] = config.embedding_endpoint
        return HttpEmbeddingBackend(rest, **kwargs)
    raise ConfigError(f"unknown embedding backend {config.embedding!r}")


def slice_file_name(topic_id: str, stance_value: str) -> str:
    return f"{topic_id}__{stance_value}.json"


class PipelineContext:
    """Shared state for one CLI invocation: config, run directory, lazily
    constructed backends, and the on-disk caches."""

    def __init__(self, config: PipelineConfig):
        config.validate()
        self.config = config
        self.source_corpus = load_corpus(config.corpus_path, config.corpus_format)
        self.corpus_hash = corpus_hash(self.source_corpus)
        self.run_id = config.derived_run_id(self.corpus_hash)
        self.run_dir = Path(config.out_dir) / self.run_id
        cache_root = config.resolved_cache_dir()
        self.vector_cache = VectorCache(cache_root / "vectors")
        self.question_cache = QuestionCache(cache_root / "questions")

    @cached_property
    def generation_backend(self):
        return resolve_generation_backend(self.config)

    @cached_property
    def embedding_backend(self):
        return resolve_embedding_backend(self.config)

    @cached_property
    def style(self) -> GenerationStyle:
        return GenerationStyle(self.config.style)

    @cached_property
    def template(self):
        if self.style is GenerationStyle.ORIGINAL:
            return None
        return load_template(self.style, self.config.template_path)

    def created_at(self) -> str | None:
        if self.config.record_timestamps:
            return datetime.now(timezone.utc).isoformat()
        return None

    # -- run-dir artifacts --

    def corpus(self) -> Corpus:
        snapshot = self.run_dir / "corpus.jsonl"
        if snapshot.exists():
            return load_corpus(snapshot, "jsonl")
        return self.source_corpus

    def questions(self):
        return read_questions_jsonl(self.run_dir / "questions.jsonl")

    def generator_id(self) -> str:
        if self.style is GenerationStyle.ORIGINAL:
            return "identity"
        return self.generation_backend.identifier

    def fingerprint(self) -> ConfigFingerprint:
        return ConfigFingerprint(
            question_style=self.config.style,
            generator_id=self.generator_id(),
            embedding_id=self.embedding_backend.identifier,
            extras=(
                ("policy", json.dumps(self.config.policy().to_json(), sort_keys=True)),
                ("seed", str(self.config.seed)),
                ("truncation_fraction", str(self.config.truncation_fraction)),
                ("n_max", str(self.config.n_max)),
            ),
        )

    def embedding_store(self, ids_and_texts: list[tuple[str, str]]) -> EmbeddingStore:
        ids = [i for i, _ in ids_and_texts]
        texts = [t for _, t in ids_and_texts]
        vectors = embed_texts(
            texts,
            self.embedding_backend,
            cache=self.vector_cache,
            batch_size=self.config.batch_size,
            parallelism=self.config.parallelism,
        )
        store = EmbeddingStore(backend_id=self.embedding_backend.identifier)
        store.add(ids, vectors)
        return store

    def full_store(self, include_questions: bool = True) -> EmbeddingStore:
        corpus = self.corpus()
        pairs = [(a.arg_id, a.text) for a in corpus.arguments]
        pairs += [(k.kp_id, k.text) for k in corpus.key_points]
        if include_questions:
            pairs += [(q.q_id, q.text) for q in self.questions()]
        return self.embedding_store(pairs)

    def write_manifest(self) -> None:
        manifest = RunManifest(
            run_id=self.run_id,
            corpus_hash=self.corpus_hash,
            style=self.config.style,
            generator_id=self.generator_id(),
            embedding_id=self.embedding_backend.identifier,
            policy=self.config.policy().to_json(),
            measures=self.config.measures,
            component_versions={
                "kpnet": __version__,
                "template": self.template.version if self.template else "identity",
            },
            config=self.config.fingerprint_dict(),
            created_at=self.created_at(),
        )
        write_manifest(manifest, self.run_dir / "manifest.json")


def stage_complete(run_dir: Path, stage: str) -> bool:
    return all((run_dir / marker).exists() for marker in _MARKERS[stage])


def _check_upstream(run_dir: Path, stage: str) -> None:
    for needed in _REQUIRES[stage]:
        if not stage_complete(run_dir, needed):
            raise MissingUpstream(stage, needed)


def _stage_ingest(ctx: PipelineContext) -> None:
    violations = validate(ctx.source_corpus)
    if violations:
        details = "; ".join(f"{v.entity_id}: {v.rule}" for v in violations[:10])
        raise KpnetError(f"corpus has {len(violations)} invariant violations ({details})")
    (ctx.run_dir / "corpus.jsonl").write_text(serialize_corpus(ctx.source_corpus), encoding="utf-8")


def _stage_qgen(ctx: PipelineContext) -> None:
    from .qgen import generate_corpus_questions

    corpus = ctx.corpus()
    batch = generate_corpus_questions(
        corpus,
        ctx.style,
        ctx.generation_backend,
        template=ctx.template,
        cache=ctx.question_cache,
        retries=ctx.config.retries,
        backoff_seconds=ctx.config.backoff_seconds,
        parallelism=ctx.config.parallelism,
    )
    write_questions_jsonl(batch, ctx.run_dir / "questions.jsonl")
    with (ctx.run_dir / "qgen_skipped.jsonl").open("w", encoding="utf-8") as fh:
        for skip in batch.skipped:
            fh.write(json.dumps({"arg_id": skip.arg_id, "reason": skip.reason},
                                ensure_ascii=False, sort_keys=True) + "\n")


def _stage_embed(ctx: PipelineContext) -> None:
    store = ctx.full_store()
    summary = {
        "backend": ctx.embedding_backend.identifier,
        "dim": next(iter(store.vectors.values())).dim if store.vectors else 0,
        "n_texts": len(store.vectors),
    }
    (ctx.run_dir / "embeddings.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _stage_network(ctx: PipelineContext) -> None:
    corpus = ctx.corpus()
    questions = ctx.questions()
    store = ctx.full_store()
    net_dir = ctx.run_dir / "networks"
    net_dir.mkdir(exist_ok=True)
    index = []
    for topic_id, stance in corpus.slices():
        part = slice_corpus(corpus, topic_id, stance)
        arg_ids = {a.arg_id for a in part.arguments}
        slice_questions = [q for q in questions if q.source_arg_id in arg_ids]
        net = build_network(
            slice_questions,
            part.arguments,
            store,
            policy=ctx.config.policy(),
            embedding_model=ctx.embedding_backend.identifier,
            created_at=ctx.created_at(),
        )
        name = slice_file_name(topic_id, stance.value)
        write_network(net, net_dir / name)
        index.append({"topic": topic_id, "stance": stance.value, "file": name})
    (net_dir / "index.json").write_text(
        json.dumps({"slices": index}, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def read_networks(run_dir: Path) -> dict[tuple[str, str], QaNetwork]:
    index = json.loads((run_dir / "networks" / "index.json").read_text(encoding="utf-8"))
    out = {}
    for entry in index["slices"]:
        out[(entry["topic"], entry["stance"])] = read_network(run_dir / "networks" / entry["file"])
    return out


def _stage_centrality(ctx: PipelineContext) -> None:
    networks = read_networks(ctx.run_dir)
    rows = []
    for (topic, stance), net in sorted(networks.items()):
        if not net.nodes:
            log.info("slice (%s, %s) has an empty network; skipping centrality", topic, stance)
            continue
        questions = set(net.question_nodes)
        for kind in ctx.config.measures:
            scores = compute_centrality(net, CentralityMeasure(kind=kind))
            ranked = sorted(net.nodes, key=lambda v: (-scores.scores[v], v))
            for rank, node in enumerate(ranked, start=1):
                role = "question" if node in questions else "argument"
                rows.append((topic, stance, node, role, kind, scores.scores[node], rank))
    (ctx.run_dir / "centrality_scores.csv").write_text(centrality_csv(rows), encoding="utf-8")


def _stage_kpm(ctx: PipelineContext) -> None:
    corpus = ctx.corpus()
    questions = ctx.questions()
    store = ctx.full_store()
    report = evaluate_kpm(
        corpus,
        questions,
        store,
        truncation_fraction=ctx.config.truncation_fraction,
        config=ctx.fingerprint(),
        corpus_hash=ctx.corpus_hash,
    )
    (ctx.run_dir / "kpm.json").write_text(kpm_report_json(report), encoding="utf-8")
    (ctx.run_dir / "kpm.csv").write_text(kpm_csv(report), encoding="utf-8")


def _stage_kpg(ctx: PipelineContext) -> None:
    corpus = ctx.corpus()
    questions = ctx.questions()
    store = ctx.full_store()
    networks = read_networks(ctx.run_dir)

    if ctx.config.theta is not None:
        theta = Threshold(ctx.config.theta, 0.0, 0.0, source="override")
    else:
        theta = fit_threshold(corpus, store, source=ctx.embedding_backend.identifier,
                              rule=ctx.config.threshold_rule)
    (ctx.run_dir / "threshold.json").write_text(
        json.dumps({"theta": theta.theta, "tpr": theta.tpr, "fpr": theta.fpr,
                    "source": theta.source, "rule": ctx.config.threshold_rule},
                   sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )

    reports: list[KpgReport] = []
    for kind in ctx.config.measures:
        reports.append(
            evaluate_kpg(
                corpus,
                questions,
                networks,
                CentralityMeasure(kind=kind),
                theta,
                ctx.config.n_max,
                store,
                config=ctx.fingerprint(),
                corpus_hash=ctx.corpus_hash,
            )
        )
    (ctx.run_dir / "kpg.json").write_text(kpg_report_json(reports), encoding="utf-8")
    (ctx.run_dir / "kpg_curves.csv").write_text(kpg_curves_csv(reports), encoding="utf-8")


_STAGE_FUNCS = {
    "ingest": _stage_ingest,
    "qgen": _stage_qgen,
    "embed": _stage_embed,
    "network": _stage_network,
    "centrality": _stage_centrality,
    "kpm": _stage_kpm,
    "kpg": _stage_kpg,
}


@dataclass(frozen=True)
class StageOutcome:
    stage: str
    skipped: bool


def run_stage(ctx: PipelineContext, stage: str, force: bool = False) -> StageOutcome:
    """Execute one stage; no-op with a notice when already complete."""
    if stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}; choose from {STAGES}")
    ctx.run_dir.mkdir(parents=True, exist_ok=True)
    _check_upstream(ctx.run_dir, stage)
    if not force and stage_complete(ctx.run_dir, stage):
        log.info("stage %s already complete in %s (cache hit); skipping", stage, ctx.run_dir)
        ctx.write_manifest()
        return StageOutcome(stage=stage, skipped=True)
    _STAGE_FUNCS[stage](ctx)
    ctx.write_manifest()
    return StageOutcome(stage=stage, skipped=False)


def load_reports(run_dir: Path) -> tuple[KpmReport | None, list[KpgReport]]:
    """Rehydrate grid-relevant reports from a completed run directory."""
    kpm_report = None
    kpm_path = run_dir / "kpm.json"
    if kpm_path.exists():
        payload = json.loads(kpm_path.read_text(encoding="utf-8"))
        per_slice = {(row["topic"], row["stance"]): row["ap"] for row in payload["per_slice"]}
        sizes = {(row["topic"], row["stance"]): (row["n_args"], row["n_kps"])
                 for row in payload["per_slice"]}
        cfg = payload.get("config") or {}
        kpm_report = KpmReport(
            per_slice=per_slice,
            overall_map=payload["overall_map"],
            skipped_slices=tuple((r["topic"], r["stance"]) for r in payload["skipped_slices"]),
            slice_sizes=sizes,
            fallback_args=tuple(payload.get("fallback_args", [])),
            config=_fingerprint_from_json(cfg),
            corpus_hash=payload.get("corpus_hash", ""),
        )

    kpg_reports = []
    kpg_path = run_dir / "kpg.json"
    if kpg_path.exists():
        for entry in json.loads(kpg_path.read_text(encoding="utf-8")):
            thr = entry["threshold"]
            kpg_reports.append(
                KpgReport(
                    measure_kind=entry["measure"],
                    mean_curve={int(n): c for n, c in entry["mean_curve"].items()},
                    per_slice={
                        (row["topic"], row["stance"]): {int(n): c for n, c in row["curve"].items()}
                        for row in entry["per_slice"]
                    },
                    threshold=Threshold(thr["theta"], thr["tpr"], thr["fpr"], thr["source"]),
                    skipped_slices=tuple((r["topic"], r["stance"]) for r in entry["skipped_slices"]),
                    config=_fingerprint_from_json(entry.get("config") or {}),
                    corpus_hash=entry.get("corpus_hash", ""),
                )
            )
    return kpm_report, kpg_reports


def _fingerprint_from_json(payload: dict) -> ConfigFingerprint | None:
    if not payload:
        return None
    known = {"question_style", "generator_id", "embedding_id"}
    extras = tuple(sorted((k, str(v)) for k, v in payload.items() if k not in known))
    return ConfigFingerprint(
        question_style=payload.get("question_style", ""),
        generator_id=payload.get("generator_id", ""),
        embedding_id=payload.get("embedding_id", ""),
        extras=extras,
    )
