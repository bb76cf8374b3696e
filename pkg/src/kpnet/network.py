"""Weighted bipartite network between question nodes and argument nodes.

Edge weight is the cosine similarity of the endpoint embeddings, clamped to
[0, 1]; negative similarities never create an edge.  Density is controlled
by a sparsification policy (complete, weight threshold, or per-question
top-k).  Networks are built per (topic, stance) slice and immutable after
construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import Argument
from .embeddings import EmbeddingVector, cosine
from .errors import DimensionMismatch, FormatError, MissingEmbedding, UnknownNode
from .qgen import Question


@dataclass(frozen=True)
class SparsificationPolicy:
    kind: str  # complete | weight_threshold | top_k
    tau: float | None = None
    k: int | None = None

    def __post_init__(self):
        if self.kind == "complete":
            pass
        elif self.kind == "weight_threshold":
            if self.tau is None or not (0.0 <= self.tau <= 1.0):
                raise ValueError("weight_threshold policy needs tau in [0, 1]")
        elif self.kind == "top_k":
            if self.k is None or self.k < 1:
                raise ValueError("top_k policy needs a positive k")
        else:
            raise ValueError(f"unknown sparsification kind {self.kind!r}")

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.tau is not None:
            out["tau"] = self.tau
        if self.k is not None:
            out["k"] = self.k
        return out

    @classmethod
    def from_json(cls, payload: dict) -> "SparsificationPolicy":
        return cls(kind=payload["kind"], tau=payload.get("tau"), k=payload.get("k"))


DEFAULT_POLICY = SparsificationPolicy(kind="top_k", k=10)


@dataclass(frozen=True)
class QaNetwork:
    question_nodes: tuple[str, ...]
    argument_nodes: tuple[str, ...]
    edges: tuple[tuple[str, str, float], ...]  # (q_id, arg_id, weight)
    policy: SparsificationPolicy
    embedding_model: str = ""
    created_at: str | None = None

    _adjacency: dict[str, dict[str, float]] = field(
        init=False, repr=False, compare=False, default_factory=dict
    )

    def __post_init__(self):
        object.__setattr__(self, "question_nodes", tuple(sorted(self.question_nodes)))
        object.__setattr__(self, "argument_nodes", tuple(sorted(self.argument_nodes)))
        object.__setattr__(self, "edges", tuple(sorted(self.edges)))
        q_set, d_set = set(self.question_nodes), set(self.argument_nodes)
        if q_set & d_set:
            raise ValueError("a node cannot be both question and argument")
        adjacency: dict[str, dict[str, float]] = {n: {} for n in q_set | d_set}
        seen = set()
        for q, d, w in self.edges:
            if q not in q_set or d not in d_set:
                raise ValueError(f"edge ({q}, {d}) does not connect a question to an argument")
            if (q, d) in seen:
                raise ValueError(f"duplicate edge ({q}, {d})")
            seen.add((q, d))
            if not (0.0 <= w <= 1.0):
                raise ValueError(f"edge weight {w} outside [0, 1]")
            adjacency[q][d] = w
            adjacency[d][q] = w
        object.__setattr__(self, "_adjacency", adjacency)

    @property
    def nodes(self) -> tuple[str, ...]:
        return self.question_nodes + self.argument_nodes

    def neighbors(self, node_id: str) -> dict[str, float]:
        if node_id not in self._adjacency:
            raise UnknownNode(node_id)
        return self._adjacency[node_id]

    def is_question(self, node_id: str) -> bool:
        return node_id in set(self.question_nodes)


def degree_strength(net: QaNetwork, node_id: str) -> float:
    """Sum of incident edge weights; 0.0 for an isolated node."""
    return float(sum(net.neighbors(node_id).values()))


def build_network(
    questions: Sequence[Question],
    arguments: Sequence[Argument],
    embeddings: Mapping[str, EmbeddingVector],
    policy: SparsificationPolicy = DEFAULT_POLICY,
    embedding_model: str = "",
    created_at: str | None = None,
) -> QaNetwork:
    """Create edges between every question and argument with positive cosine
    similarity, then retain per policy.

    complete keeps all positive-weight pairs; weight_threshold keeps weights
    >= tau; top_k keeps each question's k strongest arguments (an argument
    may still exceed k incident edges via the union over questions).
    """
    q_ids = [q.q_id for q in questions]
    d_ids = [a.arg_id for a in arguments]
    dim = None
    for node_id in q_ids + d_ids:
        if node_id not in embeddings:
            raise MissingEmbedding(f"no embedding for node {node_id!r}", text_id=node_id)
        v = embeddings[node_id]
        if dim is None:
            dim = v.dim
        elif v.dim != dim:
            raise DimensionMismatch(f"embedding dim {v.dim} for {node_id!r}, expected {dim}")

    edges: list[tuple[str, str, float]] = []
    for q in q_ids:
        candidates: list[tuple[str, float]] = []
        for d in d_ids:
            w = min(1.0, max(0.0, cosine(embeddings[q], embeddings[d])))
            if w > 0.0:
                candidates.append((d, w))
        if policy.kind == "weight_threshold":
            kept = [(d, w) for d, w in candidates if w >= policy.tau]
        elif policy.kind == "top_k":
            candidates.sort(key=lambda c: (-c[1], c[0]))
            kept = candidates[: policy.k]
        else:
            kept = candidates
        edges.extend((q, d, w) for d, w in kept)

    if not embedding_model and (q_ids or d_ids):
        any_id = (q_ids + d_ids)[0]
        embedding_model = embeddings[any_id].model
    return QaNetwork(
        question_nodes=tuple(q_ids),
        argument_nodes=tuple(d_ids),
        edges=tuple(edges),
        policy=policy,
        embedding_model=embedding_model,
        created_at=created_at,
    )


def serialize_network(net: QaNetwork) -> str:
    payload = {
        "question_nodes": list(net.question_nodes),
        "argument_nodes": list(net.argument_nodes),
        "edges": [[q, d, w] for q, d, w in net.edges],
        "policy": net.policy.to_json(),
        "embedding_model": net.embedding_model,
        "created_at": net.created_at,
    }
    return json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n"


def deserialize_network(raw: str | bytes) -> QaNetwork:
    try:
        payload = json.loads(raw)
        return QaNetwork(
            question_nodes=tuple(payload["question_nodes"]),
            argument_nodes=tuple(payload["argument_nodes"]),
            edges=tuple((q, d, float(w)) for q, d, w in payload["edges"]),
            policy=SparsificationPolicy.from_json(payload["policy"]),
            embedding_model=payload.get("embedding_model", ""),
            created_at=payload.get("created_at"),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"not a valid serialized network: {exc}") from exc


def write_network(net: QaNetwork, path: str | Path) -> None:
    Path(path).write_text(serialize_network(net), encoding="utf-8")


def read_network(path: str | Path) -> QaNetwork:
    return deserialize_network(Path(path).read_text(encoding="utf-8"))
