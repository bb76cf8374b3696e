"""Turn arguments into questions (or paraphrases) via a pluggable text backend.

Default prompt templates ship as versioned JSON data files under
``kpnet/data/templates``; experiments pin a template by style name or file
path.  Raw backend output is parsed line-wise with enumeration prefixes
stripped.  Generations are cached on disk keyed by (backend, template
version, style, argument text) so reruns make zero backend calls.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Protocol

from .corpus import Argument, Corpus, Topic
from .errors import BackendError, EmptyGeneration, InvalidTemplate

log = logging.getLogger(__name__)


class GenerationStyle(Enum):
    CLOSED = "closed"
    OPEN = "open"
    HYBRID = "hybrid"
    PARAPHRASE = "paraphrase"
    ORIGINAL = "original"


@dataclass(frozen=True)
class Question:
    q_id: str
    source_arg_id: str
    style: GenerationStyle
    text: str
    generator: str

    def __post_init__(self):
        if not self.text:
            raise ValueError("question text must be non-empty")


@dataclass(frozen=True)
class PromptTemplate:
    style: GenerationStyle
    template: str
    max_questions: int = 5
    version: str = "v1"

    def __post_init__(self):
        if self.max_questions < 1:
            raise InvalidTemplate("max_questions must be positive")
        for placeholder in ("{argument}", "{topic}"):
            n = self.template.count(placeholder)
            if n != 1:
                raise InvalidTemplate(f"template must contain {placeholder} exactly once, found {n}")


_PLACEHOLDER = re.compile(r"\{(argument|topic)\}")


def render_prompt(template: PromptTemplate, argument: Argument, topic: Topic) -> str:
    """Substitute both placeholders in a single pass.

    Replacement text is never re-scanned, so braces inside the argument
    survive literally.
    """
    values = {"argument": argument.text, "topic": topic.text}
    return _PLACEHOLDER.sub(lambda m: values[m.group(1)], template.template)


_ENUM_PREFIX = re.compile(r"^\s*(?:\d+\s*[.)]|[-*•])\s*")


def parse_generation(raw: str, max_questions: int) -> list[str]:
    """Split raw output into question texts: one per line, numbering stripped,
    blank and sub-3-character lines dropped, truncated to max_questions."""
    out = []
    for line in raw.splitlines():
        text = _ENUM_PREFIX.sub("", line).strip()
        if len(text) < 3:
            continue
        out.append(text)
        if len(out) == max_questions:
            break
    return out


class GenerationBackend(Protocol):
    identifier: str
    calls: int

    def generate(self, prompt: str) -> str: ...


class MockChatBackend:
    """Deterministic offline generator: questions synthesized from a seeded
    hash of the prompt, so identical input always yields identical output."""

    _WORDS = (
        "policy", "evidence", "fairness", "cost", "freedom", "safety", "trust",
        "impact", "choice", "risk", "benefit", "duty", "access", "privacy",
    )

    def __init__(self, n_questions: int = 5, seed: int = 0):
        self.n_questions = n_questions
        self.seed = seed
        self.identifier = f"mockgen-n{n_questions}-s{seed}"
        self.calls = 0

    def generate(self, prompt: str) -> str:
        self.calls += 1
        digest = hashlib.blake2b(prompt.encode("utf-8"), digest_size=16,
                                 key=str(self.seed).encode()).digest()
        # The case tag carries the line index, so lines never collide.
        lines = []
        for i in range(self.n_questions):
            a = digest[(2 * i) % len(digest)]
            b = digest[(2 * i + 1) % len(digest)]
            w1 = self._WORDS[a % len(self._WORDS)]
            w2 = self._WORDS[b % len(self._WORDS)]
            tag = f"{digest[:8].hex()}.{i + 1}"
            lines.append(f"{i + 1}. Does the {w1} outweigh the {w2} in case {tag}?")
        return "\n".join(lines)


class FixtureChatBackend:
    """Replays canned responses from a JSONL map of prompt -> response."""

    def __init__(self, path: str | Path, identifier: str | None = None):
        self.path = Path(path)
        self.identifier = identifier or f"fixture:{self.path.name}"
        self.calls = 0
        self._responses: dict[str, str] = {}
        with self.path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                self._responses[rec["prompt"]] = rec["response"]

    def generate(self, prompt: str) -> str:
        self.calls += 1
        if prompt not in self._responses:
            raise BackendError("prompt not present in fixture map")
        return self._responses[prompt]


class HttpChatBackend:
    """Client for a chat-completions endpoint; API key comes from the
    environment, never from config files."""

    def __init__(
        self,
        model: str,
        endpoint: str = "https://api.openai.com/v1/chat/completions",
        api_key_env: str = "OPENAI_API_KEY",
        temperature: float = 0.0,
        timeout: float = 120.0,
    ):
        self.model = model
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.temperature = temperature
        self.timeout = timeout
        self.identifier = f"chat:{model}"
        self.calls = 0

    def generate(self, prompt: str) -> str:
        import requests

        key = os.environ.get(self.api_key_env)
        if not key:
            raise BackendError(f"environment variable {self.api_key_env} is not set")
        try:
            resp = requests.post(
                self.endpoint,
                headers={"Authorization": f"Bearer {key}"},
                json={
                    "model": self.model,
                    "temperature": self.temperature,
                    "messages": [{"role": "user", "content": prompt}],
                },
                timeout=self.timeout,
            )
            resp.raise_for_status()
            content = resp.json()["choices"][0]["message"]["content"]
        except Exception as exc:
            raise BackendError(f"generation request failed: {exc}") from exc
        self.calls += 1
        return content


def load_template(style: GenerationStyle, path: str | Path | None = None) -> PromptTemplate:
    """Load the bundled template for a style, or a template JSON from ``path``."""
    if style is GenerationStyle.ORIGINAL:
        raise InvalidTemplate("the original style needs no template")
    if path is None:
        ref = resources.files("kpnet") / "data" / "templates" / f"{style.value}.json"
        payload = json.loads(ref.read_text(encoding="utf-8"))
    else:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return PromptTemplate(
        style=GenerationStyle(payload["style"]),
        template=payload["template"],
        max_questions=int(payload.get("max_questions", 5)),
        version=str(payload.get("version", "v1")),
    )


class QuestionCache:
    """JSONL-backed generation cache, safe for in-process concurrent use."""

    def __init__(self, directory: str | Path):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.path = self.dir / "questions.cache.jsonl"
        self._lock = threading.Lock()
        self._entries: dict[str, list[str]] = {}
        if self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    rec = json.loads(line)
                    self._entries[rec["key"]] = rec["texts"]

    @staticmethod
    def key_for(backend_id: str, template_version: str, style: GenerationStyle, arg_text: str) -> str:
        raw = "\x00".join([backend_id, template_version, style.value, arg_text])
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()

    def get(self, key: str) -> list[str] | None:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: str, texts: list[str]) -> None:
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = list(texts)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({"key": key, "texts": texts}, ensure_ascii=False) + "\n")


def _question_id(arg_id: str, index: int) -> str:
    return f"{arg_id}__q{index:02d}"


def generate_questions(
    argument: Argument,
    topic: Topic,
    style: GenerationStyle,
    backend: GenerationBackend,
    template: PromptTemplate,
) -> list[Question]:
    """Generate 1..max_questions questions for one argument.

    Raises BackendError on transport failure and EmptyGeneration when the
    backend output contained no parseable question.
    """
    if style is GenerationStyle.ORIGINAL:
        return [Question(_question_id(argument.arg_id, 0), argument.arg_id, style,
                         argument.text, "identity")]
    prompt = render_prompt(template, argument, topic)
    raw = backend.generate(prompt)
    texts = parse_generation(raw, template.max_questions)
    if not texts:
        raise EmptyGeneration("backend output contained no parseable question",
                              arg_id=argument.arg_id)
    return [
        Question(_question_id(argument.arg_id, i), argument.arg_id, style, text, backend.identifier)
        for i, text in enumerate(texts)
    ]


@dataclass(frozen=True)
class SkippedArgument:
    arg_id: str
    reason: str


@dataclass(frozen=True)
class GenerationBatch:
    questions: tuple[Question, ...]
    skipped: tuple[SkippedArgument, ...] = ()


def generate_corpus_questions(
    corpus: Corpus,
    style: GenerationStyle,
    backend: GenerationBackend,
    template: PromptTemplate | None = None,
    cache: QuestionCache | None = None,
    retries: int = 2,
    backoff_seconds: float = 0.5,
    parallelism: int = 1,
    on_failure: str = "skip",
) -> GenerationBatch:
    """Generate questions for every argument; order is deterministic
    (sorted by arg_id, then generation index).

    Per-argument failures are retried ``retries`` times with backoff; after
    that the argument is skipped and recorded (``on_failure='skip'``) or the
    whole batch aborts (``on_failure='raise'``).  Cache hits make no
    backend call.
    """
    if style is not GenerationStyle.ORIGINAL and template is None:
        template = load_template(style)
    topics = {t.topic_id: t for t in corpus.topics}
    arguments = sorted(corpus.arguments, key=lambda a: a.arg_id)
    template_version = template.version if template else "identity"

    def produce(argument: Argument) -> tuple[str, list[Question] | SkippedArgument]:
        key = None
        if cache is not None and style is not GenerationStyle.ORIGINAL:
            key = QuestionCache.key_for(backend.identifier, template_version, style, argument.text)
            cached = cache.get(key)
            if cached is not None:
                return argument.arg_id, [
                    Question(_question_id(argument.arg_id, i), argument.arg_id, style, text,
                             backend.identifier)
                    for i, text in enumerate(cached)
                ]
        last: Exception | None = None
        for attempt in range(retries + 1):
            try:
                questions = generate_questions(argument, topics[argument.topic_id], style, backend, template)
                if key is not None:
                    cache.put(key, [q.text for q in questions])
                return argument.arg_id, questions
            except (BackendError, EmptyGeneration) as exc:
                last = exc
                if attempt < retries and backoff_seconds > 0:
                    time.sleep(backoff_seconds * (2**attempt))
        if on_failure == "raise":
            if isinstance(last, BackendError):
                last.arg_id = argument.arg_id
            raise last  # type: ignore[misc]
        log.warning("skipping argument %s after %d attempts: %s", argument.arg_id, retries + 1, last)
        return argument.arg_id, SkippedArgument(argument.arg_id, str(last))

    if parallelism > 1 and len(arguments) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            produced = dict(pool.map(produce, arguments))
    else:
        produced = dict(produce(a) for a in arguments)

    questions: list[Question] = []
    skipped: list[SkippedArgument] = []
    for argument in arguments:
        result = produced[argument.arg_id]
        if isinstance(result, SkippedArgument):
            skipped.append(result)
        else:
            questions.extend(result)
    return GenerationBatch(questions=tuple(questions), skipped=tuple(skipped))


def write_questions_jsonl(batch: GenerationBatch, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for q in batch.questions:
            fh.write(json.dumps({
                "q_id": q.q_id, "source_arg_id": q.source_arg_id, "style": q.style.value,
                "text": q.text, "generator": q.generator,
            }, ensure_ascii=False, sort_keys=True) + "\n")


def read_questions_jsonl(path: str | Path) -> tuple[Question, ...]:
    questions = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            questions.append(Question(rec["q_id"], rec["source_arg_id"],
                                      GenerationStyle(rec["style"]), rec["text"], rec["generator"]))
    return tuple(questions)
