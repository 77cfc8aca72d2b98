"""Table emission (csv / json / text) and csv read-back.

Numbers are written with four decimals (round-half-even on the exact
binary value, which is what ``format(x, '.4f')`` does). Wall-clock time is
only written when ``timing=True`` so that default reports are byte-stable.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, fields
from pathlib import Path

from .runner import VariantResult

COLUMNS = ("variant", "clip_t", "dino_i", "clip_d", "composite", "delta_vs_baseline",
           "firings", "seconds_per_case")

CLIP_D_NOTE = "clip_d = cos(image change, text change), a directional reconstruction"


def fmt4(x: float | None) -> str:
    return "" if x is None else f"{x:.4f}"


@dataclass(frozen=True)
class ReportRow:
    variant: str
    clip_t: str
    dino_i: str
    clip_d: str
    composite: str
    delta_vs_baseline: str
    firings: str
    seconds_per_case: str

    def as_list(self) -> list[str]:
        return [getattr(self, f.name) for f in fields(self)]


def rows_from_results(results: list[VariantResult], timing: bool = False) -> list[ReportRow]:
    incomplete = [r.name for r in results if not r.complete or r.mean is None]
    if incomplete:
        raise ValueError(f"cannot report incomplete variants: {', '.join(incomplete)}")
    base = next((r for r in results if r.name == "baseline"), None)
    rows = []
    for r in results:
        m = r.mean
        delta = ""
        if base is not None and r is not base and base.mean.composite != 0:
            # relative change; dividing by |base| keeps "positive = better" for any sign
            delta = fmt4((m.composite - base.mean.composite) / abs(base.mean.composite))
        firings = r.firings_per_case
        avg = sum(firings) / len(firings)
        firing_txt = str(int(avg)) if float(avg).is_integer() else f"{avg:.4f}"
        secs = ""
        if timing:
            secs = fmt4(sum(c.seconds for c in r.cases) / len(r.cases))
        rows.append(ReportRow(r.name, fmt4(m.clip_t), fmt4(m.dino_i), fmt4(m.clip_d),
                              fmt4(m.composite), delta, firing_txt, secs))
    return rows


def _render(rows: list[ReportRow], fmt: str, meta: dict) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        for k, v in meta.items():
            buf.write(f"# {k}: {v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in rows:
            w.writerow(row.as_list())
        return buf.getvalue()
    if fmt == "json":
        doc = {"meta": meta, "columns": list(COLUMNS), "rows": [row.as_list() for row in rows]}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if fmt == "text":
        table = [list(COLUMNS)] + [row.as_list() for row in rows]
        widths = [max(len(r[i]) for r in table) for i in range(len(COLUMNS))]
        lines = [f"# {k}: {v}" for k, v in meta.items()]
        for i, r in enumerate(table):
            lines.append("  ".join(c.ljust(w) if j == 0 else c.rjust(w)
                                   for j, (c, w) in enumerate(zip(r, widths))).rstrip())
            if i == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}; expected csv, json or text")


def emit_report(results: list[VariantResult] | list[ReportRow], fmt: str = "csv", path=None,
                meta: dict | None = None, timing: bool = False) -> str:
    """Render results as csv/json/text; write to ``path`` if given."""
    if results and isinstance(results[0], ReportRow):
        rows = list(results)
    else:
        rows = rows_from_results(results, timing)
    meta = dict(meta or {})
    meta.setdefault("clip_d", CLIP_D_NOTE)
    text = _render(rows, fmt, meta)
    if path is not None:
        Path(path).write_text(text)
    return text


def read_report(path) -> tuple[list[ReportRow], dict]:
    """Parse a csv or json report back into rows and header metadata."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        return [ReportRow(*r) for r in doc["rows"]], doc.get("meta", {})
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("# "):
            k, _, v = line[2:].partition(": ")
            meta[k] = v
        elif line.strip():
            body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    if tuple(header) != COLUMNS:
        raise ValueError(f"{path}: unexpected columns {header}")
    return [ReportRow(*r) for r in reader], meta
