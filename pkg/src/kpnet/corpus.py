"""Load, validate, and slice debate corpora (topics, stance-tagged arguments,
key points, and match annotations).

Two on-disk layouts are supported:

* ``argkp_csv`` -- a directory with three CSV files following the public
  ArgKP-2021 column layout: ``arguments.csv`` (arg_id,argument,topic,stance),
  ``key_points.csv`` (key_point_id,key_point,topic,stance) and ``labels.csv``
  (arg_id,key_point_id,label).  Stance is serialized as 1 (pro) / -1 (con);
  labels as 1 (match) / 0 (no match), with absent rows meaning undecided.
* ``jsonl`` -- a single file with one record per line carrying a ``kind``
  discriminator (topic / argument / key_point / annotation).  Used for
  fixtures and for canonical snapshots; ``serialize_corpus`` emits it.
"""

from __future__ import annotations

import csv
import hashlib
import json
import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import (
    DuplicateAnnotation,
    IntegrityError,
    MissingFile,
    ParseError,
    UnknownTopic,
)


class Stance(Enum):
    PRO = "pro"
    CON = "con"

    @classmethod
    def from_csv(cls, raw: str) -> "Stance":
        if raw == "1":
            return cls.PRO
        if raw == "-1":
            return cls.CON
        raise ValueError(f"stance must be 1 or -1, got {raw!r}")

    def to_csv(self) -> str:
        return "1" if self is Stance.PRO else "-1"


class Label(Enum):
    MATCH = "match"
    NO_MATCH = "no_match"
    UNDECIDED = "undecided"


def normalize_text(raw: str) -> str:
    """Unicode NFC plus surrounding-whitespace trim; no case folding."""
    return unicodedata.normalize("NFC", raw).strip()


@dataclass(frozen=True)
class Topic:
    topic_id: str
    text: str


@dataclass(frozen=True)
class Argument:
    arg_id: str
    topic_id: str
    stance: Stance
    text: str


@dataclass(frozen=True)
class KeyPoint:
    kp_id: str
    topic_id: str
    stance: Stance
    text: str


@dataclass(frozen=True)
class MatchAnnotation:
    arg_id: str
    kp_id: str
    label: Label


@dataclass(frozen=True)
class Violation:
    entity_id: str
    rule: str
    detail: str


@dataclass(frozen=True)
class Corpus:
    """Immutable container; safe to share read-only across workers."""

    topics: tuple[Topic, ...]
    arguments: tuple[Argument, ...]
    key_points: tuple[KeyPoint, ...]
    annotations: tuple[MatchAnnotation, ...]

    _label_index: dict[tuple[str, str], Label] = field(
        init=False, repr=False, compare=False, default_factory=dict
    )

    def __post_init__(self):
        object.__setattr__(
            self,
            "_label_index",
            {(a.arg_id, a.kp_id): a.label for a in self.annotations},
        )

    def topic_by_id(self, topic_id: str) -> Topic:
        for t in self.topics:
            if t.topic_id == topic_id:
                return t
        raise UnknownTopic(topic_id)

    def effective_label(self, arg_id: str, kp_id: str) -> Label:
        """Stored label, or UNDECIDED when the pair was never annotated."""
        return self._label_index.get((arg_id, kp_id), Label.UNDECIDED)

    def slices(self) -> list[tuple[str, Stance]]:
        """All (topic_id, stance) pairs that have at least one argument or key point."""
        seen = {(a.topic_id, a.stance) for a in self.arguments}
        seen |= {(k.topic_id, k.stance) for k in self.key_points}
        return sorted(seen, key=lambda s: (s[0], s[1].value))


def _canonical(corpus: Corpus) -> Corpus:
    """Sort every collection so serialization and hashing are stable."""
    return Corpus(
        topics=tuple(sorted(corpus.topics, key=lambda t: t.topic_id)),
        arguments=tuple(sorted(corpus.arguments, key=lambda a: a.arg_id)),
        key_points=tuple(sorted(corpus.key_points, key=lambda k: k.kp_id)),
        annotations=tuple(sorted(corpus.annotations, key=lambda x: (x.arg_id, x.kp_id))),
    )


def make_corpus(topics, arguments, key_points, annotations) -> Corpus:
    """Build a canonical Corpus, enforcing referential integrity and uniqueness."""
    corpus = _canonical(Corpus(tuple(topics), tuple(arguments), tuple(key_points), tuple(annotations)))

    topic_ids = {t.topic_id for t in corpus.topics}
    if len(topic_ids) != len(corpus.topics):
        raise IntegrityError("duplicate topic_id")
    arg_ids = {a.arg_id for a in corpus.arguments}
    if len(arg_ids) != len(corpus.arguments):
        raise IntegrityError("duplicate arg_id")
    kp_ids = {k.kp_id for k in corpus.key_points}
    if len(kp_ids) != len(corpus.key_points):
        raise IntegrityError("duplicate kp_id")

    for a in corpus.arguments:
        if a.topic_id not in topic_ids:
            raise IntegrityError(f"argument {a.arg_id} references unknown topic {a.topic_id}")
    for k in corpus.key_points:
        if k.topic_id not in topic_ids:
            raise IntegrityError(f"key point {k.kp_id} references unknown topic {k.topic_id}")

    args_by_id = {a.arg_id: a for a in corpus.arguments}
    kps_by_id = {k.kp_id: k for k in corpus.key_points}
    seen_pairs: set[tuple[str, str]] = set()
    for ann in corpus.annotations:
        pair = (ann.arg_id, ann.kp_id)
        if pair in seen_pairs:
            raise DuplicateAnnotation(f"duplicate annotation for {pair}")
        seen_pairs.add(pair)
        if ann.arg_id not in args_by_id:
            raise IntegrityError(f"annotation references unknown arg_id {ann.arg_id}")
        if ann.kp_id not in kps_by_id:
            raise IntegrityError(f"annotation references unknown key_point_id {ann.kp_id}")
        arg, kp = args_by_id[ann.arg_id], kps_by_id[ann.kp_id]
        if (arg.topic_id, arg.stance) != (kp.topic_id, kp.stance):
            raise IntegrityError(
                f"annotation ({ann.arg_id}, {ann.kp_id}) crosses topic/stance boundaries"
            )
    return corpus


def _topic_ids_for(texts: set[str]) -> dict[str, str]:
    # Stable ids independent of row order: sort distinct topic statements.
    return {text: f"t{idx:02d}" for idx, text in enumerate(sorted(texts))}


def _read_csv(path: Path, required: list[str]) -> list[dict[str, str]]:
    if not path.exists():
        raise MissingFile(str(path))
    rows = []
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or any(c not in reader.fieldnames for c in required):
            raise ParseError(f"{path.name}: expected columns {required}, got {reader.fieldnames}")
        for i, row in enumerate(reader, start=2):
            if any(row.get(c) is None for c in required):
                raise ParseError(f"{path.name}: short row", row=i)
            rows.append(row)
    return rows


def _load_argkp_csv(root: Path) -> Corpus:
    arg_rows = _read_csv(root / "arguments.csv", ["arg_id", "argument", "topic", "stance"])
    kp_rows = _read_csv(root / "key_points.csv", ["key_point_id", "key_point", "topic", "stance"])
    label_rows = _read_csv(root / "labels.csv", ["arg_id", "key_point_id", "label"])

    topic_texts = {normalize_text(r["topic"]) for r in arg_rows}
    topic_texts |= {normalize_text(r["topic"]) for r in kp_rows}
    ids = _topic_ids_for(topic_texts)
    topics = [Topic(topic_id=i, text=t) for t, i in ids.items()]

    def parse_stance(row: dict[str, str], source: str, rownum: int) -> Stance:
        try:
            return Stance.from_csv(row["stance"].strip())
        except ValueError as exc:
            raise ParseError(f"{source}: {exc}", row=rownum, column="stance") from exc

    arguments = [
        Argument(
            arg_id=normalize_text(r["arg_id"]),
            topic_id=ids[normalize_text(r["topic"])],
            stance=parse_stance(r, "arguments.csv", i),
            text=normalize_text(r["argument"]),
        )
        for i, r in enumerate(arg_rows, start=2)
    ]
    key_points = [
        KeyPoint(
            kp_id=normalize_text(r["key_point_id"]),
            topic_id=ids[normalize_text(r["topic"])],
            stance=parse_stance(r, "key_points.csv", i),
            text=normalize_text(r["key_point"]),
        )
        for i, r in enumerate(kp_rows, start=2)
    ]

    annotations = []
    for i, r in enumerate(label_rows, start=2):
        raw = r["label"].strip()
        if raw == "1":
            label = Label.MATCH
        elif raw == "0":
            label = Label.NO_MATCH
        else:
            raise ParseError(f"labels.csv: label must be 0 or 1, got {raw!r}", row=i, column="label")
        annotations.append(
            MatchAnnotation(arg_id=normalize_text(r["arg_id"]), kp_id=normalize_text(r["key_point_id"]), label=label)
        )
    return make_corpus(topics, arguments, key_points, annotations)


def _load_jsonl(path: Path) -> Corpus:
    if not path.exists():
        raise MissingFile(str(path))
    topics, arguments, key_points, annotations = [], [], [], []
    with path.open(encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path.name}: invalid JSON", row=i) from exc
            kind = rec.get("kind")
            try:
                if kind == "topic":
                    topics.append(Topic(rec["topic_id"], normalize_text(rec["text"])))
                elif kind == "argument":
                    arguments.append(
                        Argument(rec["arg_id"], rec["topic_id"], Stance(rec["stance"]), normalize_text(rec["text"]))
                    )
                elif kind == "key_point":
                    key_points.append(
                        KeyPoint(rec["kp_id"], rec["topic_id"], Stance(rec["stance"]), normalize_text(rec["text"]))
                    )
                elif kind == "annotation":
                    annotations.append(MatchAnnotation(rec["arg_id"], rec["kp_id"], Label(rec["label"])))
                else:
                    raise ParseError(f"{path.name}: unknown kind {kind!r}", row=i)
            except (KeyError, ValueError) as exc:
                raise ParseError(f"{path.name}: bad record ({exc})", row=i) from exc
    return make_corpus(topics, arguments, key_points, annotations)


def load_corpus(path: str | Path, format: str = "argkp_csv") -> Corpus:
    """Load a corpus from disk.  ``format`` is ``argkp_csv`` or ``jsonl``."""
    path = Path(path)
    if format == "argkp_csv":
        return _load_argkp_csv(path)
    if format == "jsonl":
        return _load_jsonl(path)
    raise ValueError(f"unknown corpus format {format!r}")


def serialize_corpus(corpus: Corpus) -> str:
    """Canonical JSONL text; ``load_corpus(..., 'jsonl')`` round-trips it."""
    corpus = _canonical(corpus)
    lines = []
    for t in corpus.topics:
        lines.append({"kind": "topic", "topic_id": t.topic_id, "text": t.text})
    for a in corpus.arguments:
        lines.append({"kind": "argument", "arg_id": a.arg_id, "topic_id": a.topic_id,
                      "stance": a.stance.value, "text": a.text})
    for k in corpus.key_points:
        lines.append({"kind": "key_point", "kp_id": k.kp_id, "topic_id": k.topic_id,
                      "stance": k.stance.value, "text": k.text})
    for ann in corpus.annotations:
        lines.append({"kind": "annotation", "arg_id": ann.arg_id, "kp_id": ann.kp_id,
                      "label": ann.label.value})
    return "".join(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n" for rec in lines)


def corpus_hash(corpus: Corpus) -> str:
    """Content hash of the canonical serialization; fingerprints reports."""
    return hashlib.sha256(serialize_corpus(corpus).encode("utf-8")).hexdigest()[:16]


def slice_corpus(corpus: Corpus, topic_id: str, stance: Stance) -> Corpus:
    """Restrict to one (topic, stance); empty argument/key-point sets are valid."""
    if topic_id not in {t.topic_id for t in corpus.topics}:
        raise UnknownTopic(topic_id)
    arguments = tuple(a for a in corpus.arguments if a.topic_id == topic_id and a.stance == stance)
    key_points = tuple(k for k in corpus.key_points if k.topic_id == topic_id and k.stance == stance)
    arg_ids = {a.arg_id for a in arguments}
    kp_ids = {k.kp_id for k in key_points}
    annotations = tuple(x for x in corpus.annotations if x.arg_id in arg_ids and x.kp_id in kp_ids)
    topics = tuple(t for t in corpus.topics if t.topic_id == topic_id)
    return make_corpus(topics, arguments, key_points, annotations)


def validate(corpus: Corpus) -> list[Violation]:
    """Check every type invariant; violations are data, not failures."""
    out: list[Violation] = []
    topic_ids = set()
    for t in corpus.topics:
        if t.topic_id in topic_ids:
            out.append(Violation(t.topic_id, "unique_topic_id", "duplicate topic id"))
        topic_ids.add(t.topic_id)
        if not t.text:
            out.append(Violation(t.topic_id, "nonempty_text", "topic text is empty"))

    arg_ids: set[str] = set()
    args_by_id = {}
    for a in corpus.arguments:
        if a.arg_id in arg_ids:
            out.append(Violation(a.arg_id, "unique_arg_id", "duplicate argument id"))
        arg_ids.add(a.arg_id)
        args_by_id[a.arg_id] = a
        if not a.text:
            out.append(Violation(a.arg_id, "nonempty_text", "argument text is empty"))
        if a.topic_id not in topic_ids:
            out.append(Violation(a.arg_id, "topic_resolves", f"unknown topic {a.topic_id}"))
        if not isinstance(a.stance, Stance):
            out.append(Violation(a.arg_id, "stance_enum", f"invalid stance {a.stance!r}"))

    kp_ids: set[str] = set()
    kps_by_id = {}
    for k in corpus.key_points:
        if k.kp_id in kp_ids:
            out.append(Violation(k.kp_id, "unique_kp_id", "duplicate key point id"))
        kp_ids.add(k.kp_id)
        kps_by_id[k.kp_id] = k
        if not k.text:
            out.append(Violation(k.kp_id, "nonempty_text", "key point text is empty"))
        if k.topic_id not in topic_ids:
            out.append(Violation(k.kp_id, "topic_resolves", f"unknown topic {k.topic_id}"))
        if not isinstance(k.stance, Stance):
            out.append(Violation(k.kp_id, "stance_enum", f"invalid stance {k.stance!r}"))

    seen_pairs: set[tuple[str, str]] = set()
    for ann in corpus.annotations:
        pair_id = f"({ann.arg_id}, {ann.kp_id})"
        if (ann.arg_id, ann.kp_id) in seen_pairs:
            out.append(Violation(pair_id, "unique_annotation", "duplicate annotation pair"))
        seen_pairs.add((ann.arg_id, ann.kp_id))
        if not isinstance(ann.label, Label):
            out.append(Violation(pair_id, "label_enum", f"invalid label {ann.label!r}"))
        if ann.arg_id not in arg_ids:
            out.append(Violation(pair_id, "arg_resolves", f"unknown arg_id {ann.arg_id}"))
        if ann.kp_id not in kp_ids:
            out.append(Violation(pair_id, "kp_resolves", f"unknown key_point_id {ann.kp_id}"))
        arg, kp = args_by_id.get(ann.arg_id), kps_by_id.get(ann.kp_id)
        if arg and kp and (arg.topic_id, arg.stance) != (kp.topic_id, kp.stance):
            out.append(Violation(pair_id, "same_slice", "argument and key point differ in topic/stance"))
    return out
