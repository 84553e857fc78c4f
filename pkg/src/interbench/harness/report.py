"""Report emission: CSV (fixed column order), Markdown table, JSON with config echo."""

from __future__ import annotations

import csv
import io
import json
import warnings
from pathlib import Path

from .experiment import CSV_COLUMNS, MetricsReport, ReproReport


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(reports: list[MetricsReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        d = r.to_dict()
        w.writerow([_fmt(d[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def _pct(v, signed=True) -> str:
    if v is None:
        return "n/a"
    return f"{v:+.2f}%" if signed else f"{v:.1f}%"


def to_markdown(reports: list[MetricsReport]) -> str:
    head = ("| Variant | Hyperparams | HIT@3/save | HIT@3 gain | AUC | Memory | Latency (us) | Latency | Params | Status |\n"
            "|---|---|---|---|---|---|---|---|---|---|\n")
    rows = []
    for r in reports:
        status = "diverged" if r.diverged else (f"{r.restarts} restart(s)" if r.restarts else "ok")
        rows.append(
            "| {name} | {hp} | {hit} | {gain} | {auc} | {mem} | {lat} | {latrel} | {pc} | {st} |".format(
                name=r.name,
                hp=r.hyperparams or "-",
                hit="n/a" if r.hit3_save is None else f"{r.hit3_save:.4f}",
                gain=_pct(r.hit3_rel_gain),
                auc="n/a" if r.auc is None else f"{r.auc:.4f}",
                mem=_pct(r.peak_memory_pct, signed=False),
                lat="n/a" if r.latency_median_us is None else f"{r.latency_median_us:.0f}",
                latrel=_pct(r.latency_rel),
                pc=r.param_count,
                st=status,
            )
        )
    return head + "\n".join(rows) + "\n"


def to_json(reports: list[MetricsReport], configs: list[dict] | None = None) -> str:
    items = []
    for i, r in enumerate(reports):
        item = r.to_dict()
        if configs is not None:
            item["config"] = configs[i]
        items.append(item)
    return json.dumps({"reports": items}, indent=2, sort_keys=False)


def write_reports(out: str | Path, reports: list[MetricsReport], configs: list[dict] | None = None) -> list[Path]:
    """Write ``<out>.csv``, ``<out>.md`` and ``<out>.json``."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    paths = []
    for suffix, text in ((".csv", to_csv(reports)), (".md", to_markdown(reports)), (".json", to_json(reports, configs))):
        p = out.with_suffix(suffix)
        p.write_text(text)
        paths.append(p)
    return paths


def read_json_reports(path: str | Path) -> tuple[list[MetricsReport], list[dict | None]]:
    doc = json.loads(Path(path).read_text())
    items = doc["reports"]
    return [MetricsReport.from_dict(d) for d in items], [d.get("config") for d in items]


def join_reports(paths: list[str | Path]) -> tuple[list[MetricsReport], list[dict | None]]:
    """Concatenate JSON reports; a repeated (config hash, seed) keeps its first row."""
    seen = set()
    reports, configs = [], []
    for p in paths:
        for r, c in zip(*read_json_reports(p)):
            key = (r.config_hash, r.seed)
            if key in seen:
                warnings.warn(f"duplicate report {r.name!r} (config {r.config_hash[:12]}, seed {r.seed}) dropped",
                              stacklevel=2)
                continue
            seen.add(key)
            reports.append(r)
            configs.append(c)
    return reports, configs


def repro_markdown(reps: list[ReproReport]) -> str:
    lines = ["| Config | Seeds | Mean HIT@3 | Std | Excluded | Below threshold | Flagged |", "|---|---|---|---|---|---|---|"]
    for r in reps:
        lines.append(
            f"| {r.name} | {len(r.seeds)} | {'n/a' if r.mean is None else f'{r.mean:.4f}'} | "
            f"{'n/a' if r.std_dev is None else f'{r.std_dev:.4f}'} | {len(r.excluded_seeds)} | "
            f"{r.below_threshold} | {r.flagged} |"
        )
    return "\n".join(lines) + "\n"


def write_repro(out: str | Path, reps: list[ReproReport]) -> list[Path]:
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    pj = out.with_suffix(".json")
    pj.write_text(json.dumps({"repro": [r.to_dict() for r in reps]}, indent=2))
    pm = out.with_suffix(".md")
    pm.write_text(repro_markdown(reps))
    return [pj, pm]
