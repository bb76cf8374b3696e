"""Pipeline configuration: TOML file plus CLI flag overrides.

Secrets never live in config files; HTTP backends read their API key from
an environment variable named here.  Filesystem locations (corpus path,
output and cache directories) are deliberately excluded from the run
fingerprint so identical experiments hash identically wherever they run.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import ConfigError
from .network import SparsificationPolicy

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

STYLES = ("closed", "open", "hybrid", "paraphrase", "original")


@dataclass(frozen=True)
class PipelineConfig:
    corpus_path: str = ""
    corpus_format: str = "argkp_csv"

    style: str = "closed"
    generator: str = "mock"
    generator_endpoint: str = ""
    generator_api_key_env: str = "OPENAI_API_KEY"
    max_questions: int = 5
    template_path: str | None = None
    retries: int = 2
    backoff_seconds: float = 0.5

    embedding: str = "mock:64"
    embedding_endpoint: str = ""
    embedding_api_key_env: str = "OPENAI_API_KEY"
    batch_size: int = 64

    policy_kind: str = "top_k"
    policy_tau: float | None = None
    policy_k: int = 10

    measures: tuple[str, ...] = ("pagerank",)
    n_max: int = 10
    truncation_fraction: float = 0.5
    theta: float | None = None
    threshold_rule: str = "youden"

    out_dir: str = "runs"
    run_id: str = ""
    cache_dir: str = ""
    seed: int = 0
    parallelism: int = 1
    record_timestamps: bool = False

    def validate(self) -> None:
        if not self.corpus_path:
            raise ConfigError("corpus path is required")
        if self.corpus_format not in ("argkp_csv", "jsonl"):
            raise ConfigError(f"unknown corpus format {self.corpus_format!r}")
        if self.style not in STYLES:
            raise ConfigError(f"unknown question style {self.style!r}; choose from {STYLES}")
        from .centrality import MEASURE_KINDS

        for m in self.measures:
            if m not in MEASURE_KINDS:
                raise ConfigError(f"unknown centrality measure {m!r}; choose from {MEASURE_KINDS}")
        if not self.measures:
            raise ConfigError("at least one centrality measure is required")
        if self.n_max < 1:
            raise ConfigError("n_max must be >= 1")
        if not (0.0 < self.truncation_fraction <= 1.0):
            raise ConfigError("truncation_fraction must lie in (0, 1]")
        if self.theta is not None and not (-1.0 <= self.theta <= 1.0):
            raise ConfigError("theta must lie in [-1, 1]")
        if self.threshold_rule not in ("youden", "closest_topleft"):
            raise ConfigError(f"unknown threshold rule {self.threshold_rule!r}")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.max_questions < 1:
            raise ConfigError("max_questions must be >= 1")
        try:
            self.policy()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for spec, what in ((self.generator, "generator"), (self.embedding, "embedding")):
            head = spec.split(":", 1)[0]
            allowed = ("mock", "fixture", "chat") if what == "generator" else ("mock", "http")
            if head not in allowed:
                raise ConfigError(f"unknown {what} backend {spec!r}; prefixes: {allowed}")

    def policy(self) -> SparsificationPolicy:
        if self.policy_kind == "weight_threshold":
            return SparsificationPolicy(kind="weight_threshold", tau=self.policy_tau)
        if self.policy_kind == "top_k":
            return SparsificationPolicy(kind="top_k", k=self.policy_k)
        return SparsificationPolicy(kind=self.policy_kind)

    def offline(self) -> bool:
        return self.generator.split(":", 1)[0] in ("mock", "fixture") \
            and self.embedding.split(":", 1)[0] == "mock"

    def fingerprint_dict(self) -> dict:
        """Semantic configuration only; no filesystem locations."""
        return {
            "corpus_format": self.corpus_format,
            "style": self.style,
            "generator": self.generator,
            "max_questions": self.max_questions,
            "retries": self.retries,
            "embedding": self.embedding,
            "batch_size": self.batch_size,
            "policy": self.policy().to_json(),
            "measures": list(self.measures),
            "n_max": self.n_max,
            "truncation_fraction": self.truncation_fraction,
            "theta": self.theta,
            "threshold_rule": self.threshold_rule,
            "seed": self.seed,
            "parallelism": self.parallelism,
        }

    def derived_run_id(self, corpus_hash: str) -> str:
        if self.run_id:
            return self.run_id
        raw = corpus_hash + json.dumps(self.fingerprint_dict(), sort_keys=True)
        return "run-" + hashlib.sha256(raw.encode("utf-8")).hexdigest()[:12]

    def resolved_cache_dir(self) -> Path:
        return Path(self.cache_dir) if self.cache_dir else Path(self.out_dir) / "cache"


_SECTION_FIELDS = {
    "corpus": {"path": "corpus_path", "format": "corpus_format"},
    "questions": {
        "style": "style", "backend": "generator", "endpoint": "generator_endpoint",
        "api_key_env": "generator_api_key_env", "max_questions": "max_questions",
        "template": "template_path", "retries": "retries", "backoff_seconds": "backoff_seconds",
    },
    "embeddings": {
        "backend": "embedding", "endpoint": "embedding_endpoint",
        "api_key_env": "embedding_api_key_env", "batch_size": "batch_size",
    },
    "network": {"policy": "policy_kind", "tau": "policy_tau", "top_k": "policy_k"},
    "evaluation": {
        "measures": "measures", "n_max": "n_max", "truncation_fraction": "truncation_fraction",
        "theta": "theta", "threshold_rule": "threshold_rule",
    },
    "run": {
        "out_dir": "out_dir", "run_id": "run_id", "cache_dir": "cache_dir", "seed": "seed",
        "parallelism": "parallelism", "record_timestamps": "record_timestamps",
    },
}


def load_config(path: str | Path) -> PipelineConfig:
    """Parse a TOML config file; relative corpus paths resolve against the
    config file's directory."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        payload = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc

    kwargs: dict = {}
    for section, mapping in _SECTION_FIELDS.items():
        table = payload.get(section, {})
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, value in table.items():
            if key not in mapping:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            kwargs[mapping[key]] = value
    for section in payload:
        if section not in _SECTION_FIELDS:
            raise ConfigError(f"unknown config section [{section}]")
    if "measures" in kwargs:
        measures = kwargs["measures"]
        if isinstance(measures, str):
            measures = [measures]
        kwargs["measures"] = tuple(measures)

    config = PipelineConfig(**kwargs)
    if config.corpus_path and not Path(config.corpus_path).is_absolute():
        config = replace(config, corpus_path=str((path.parent / config.corpus_path)))
    return config


def apply_overrides(config: PipelineConfig, overrides: dict) -> PipelineConfig:
    """Apply CLI flag overrides (scalars only); None values are ignored."""
    updates = {k: v for k, v in overrides.items() if v is not None}
    if "measures" in updates and isinstance(updates["measures"], (list, tuple)):
        updates["measures"] = tuple(updates["measures"])
    return replace(config, **updates)
