"""Run manifests and figure-ready CSV outputs.

Everything written here is byte-deterministic for identical inputs: floats
are formatted to 6 significant digits, rows are sorted, and JSON keys are
ordered.  Plotting itself is external; these files feed it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import MixedCorpora
from .kpg import KpgReport
from .kpm import KpmReport


def fmt(value: float) -> str:
    return format(value, ".6g")


@dataclass(frozen=True)
class RunManifest:
    run_id: str
    corpus_hash: str
    style: str
    generator_id: str
    embedding_id: str
    policy: dict
    measures: tuple[str, ...]
    component_versions: dict
    config: dict
    created_at: str | None = None

    def to_json(self) -> str:
        payload = {
            "run_id": self.run_id,
            "corpus_hash": self.corpus_hash,
            "style": self.style,
            "generator_id": self.generator_id,
            "embedding_id": self.embedding_id,
            "policy": self.policy,
            "measures": list(self.measures),
            "component_versions": self.component_versions,
            "config": self.config,
            "created_at": self.created_at,
        }
        return json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n"


def write_manifest(manifest: RunManifest, path: str | Path) -> None:
    Path(path).write_text(manifest.to_json(), encoding="utf-8")


def kpm_csv(report: KpmReport) -> str:
    """Per-slice AP table: ``topic,stance,ap,n_args,n_kps``."""
    lines = ["topic,stance,ap,n_args,n_kps"]
    for (topic, stance), ap in sorted(report.per_slice.items()):
        n_args, n_kps = report.slice_sizes.get((topic, stance), (0, 0))
        lines.append(f"{topic},{stance},{fmt(ap)},{n_args},{n_kps}")
    return "\n".join(lines) + "\n"


def kpg_curves_csv(reports: Sequence[KpgReport]) -> str:
    """Mean coverage curves in long format: ``measure,style,n,coverage``."""
    lines = ["measure,style,n,coverage"]
    rows = []
    for report in reports:
        style = report.config.question_style if report.config else ""
        for n, coverage in sorted(report.mean_curve.items()):
            rows.append((report.measure_kind, style, n, coverage))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    lines += [f"{m},{s},{n},{fmt(c)}" for m, s, n, c in rows]
    return "\n".join(lines) + "\n"


def render_plot_data(report: KpmReport | KpgReport) -> str:
    """Long-format CSV for one report: coverage curve rows for KPG, one
    bar row per slice for KPM."""
    if isinstance(report, KpgReport):
        return kpg_curves_csv([report])
    return kpm_csv(report)


def _fingerprint_key(report: KpmReport | KpgReport) -> tuple[str, str, str]:
    cfg = report.config
    if cfg is None:
        return ("", "", "")
    return (cfg.question_style, cfg.generator_id, cfg.embedding_id)


def emit_grid_report(
    reports: Sequence[KpmReport | KpgReport],
    out_dir: str | Path,
) -> list[Path]:
    """One consolidated CSV per metric, one row per configuration, rows
    sorted by (style, generator, embedding).  All reports must share a
    corpus hash."""
    hashes = {r.corpus_hash for r in reports}
    if len(hashes) > 1:
        raise MixedCorpora(f"reports span corpora {sorted(hashes)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    kpm_rows = []
    for r in reports:
        if isinstance(r, KpmReport):
            style, gen, emb = _fingerprint_key(r)
            kpm_rows.append((style, gen, emb, r.overall_map))
    kpm_rows.sort()
    path = out_dir / "kpm_grid.csv"
    lines = ["style,generator,embedding,map"]
    lines += [f"{s},{g},{e},{fmt(v)}" for s, g, e, v in kpm_rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append(path)

    kpg_rows = []
    for r in reports:
        if isinstance(r, KpgReport):
            style, gen, emb = _fingerprint_key(r)
            n_max = max(r.mean_curve) if r.mean_curve else 0
            final = r.mean_curve.get(n_max, 0.0)
            kpg_rows.append((style, gen, emb, r.measure_kind, n_max, final))
    kpg_rows.sort()
    path = out_dir / "kpg_grid.csv"
    lines = ["style,generator,embedding,measure,n_max,coverage_at_n_max"]
    lines += [f"{s},{g},{e},{m},{n},{fmt(v)}" for s, g, e, m, n, v in kpg_rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append(path)
    return written


def kpm_report_json(report: KpmReport) -> str:
    payload = {
        "overall_map": report.overall_map,
        "per_slice": [
            {"topic": t, "stance": s, "ap": ap,
             "n_args": report.slice_sizes.get((t, s), (0, 0))[0],
             "n_kps": report.slice_sizes.get((t, s), (0, 0))[1]}
            for (t, s), ap in sorted(report.per_slice.items())
        ],
        "skipped_slices": [{"topic": t, "stance": s} for t, s in sorted(report.skipped_slices)],
        "fallback_args": list(report.fallback_args),
        "config": report.config.to_json() if report.config else None,
        "corpus_hash": report.corpus_hash,
    }
    return json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n"


def kpg_report_json(reports: Sequence[KpgReport]) -> str:
    payload = []
    for r in sorted(reports, key=lambda r: r.measure_kind):
        payload.append({
            "measure": r.measure_kind,
            "threshold": {"theta": r.threshold.theta, "tpr": r.threshold.tpr,
                          "fpr": r.threshold.fpr, "source": r.threshold.source},
            "mean_curve": {str(n): c for n, c in sorted(r.mean_curve.items())},
            "per_slice": [
                {"topic": t, "stance": s, "curve": {str(n): c for n, c in sorted(curve.items())}}
                for (t, s), curve in sorted(r.per_slice.items())
            ],
            "skipped_slices": [{"topic": t, "stance": s} for t, s in sorted(r.skipped_slices)],
            "config": r.config.to_json() if r.config else None,
            "corpus_hash": r.corpus_hash,
        })
    return json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n"


def centrality_csv(rows: Sequence[tuple[str, str, str, str, str, float, int]]) -> str:
    """Score export: ``topic,stance,node_id,role,measure,score,rank`` with
    rank assigned per (slice, measure) by descending score, ties by id."""
    lines = ["topic,stance,node_id,role,measure,score,rank"]
    for topic, stance, node, role, measure, score, rank in rows:
        lines.append(f"{topic},{stance},{node},{role},{measure},{fmt(score)},{rank}")
    return "\n".join(lines) + "\n"
