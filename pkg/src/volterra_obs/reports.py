"""Writing run results to disk (stdlib only, shared by the CLI and the runner)."""

from __future__ import annotations

import json
from pathlib import Path


def dumps_report(report: dict) -> str:
    """Canonical JSON text: sorted keys, fixed indent, no NaN literals."""
    return json.dumps(report, sort_keys=True, indent=2, ensure_ascii=True, allow_nan=False) + "\n"


def write_outputs(result: dict, out_dir: str | Path) -> list[Path]:
    """Write <sub>_report.json, <sub>_<name>.csv and <sub>_metadata.json; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sub = result["report"]["subcommand"]
    p = out / f"{sub}_report.json"
    p.write_text(dumps_report(result["report"]))
    written = [p]
    for name, text in sorted(result["csv"].items()):
        q = out / f"{sub}_{name}.csv"
        q.write_text(text)
        written.append(q)
    m = out / f"{sub}_metadata.json"
    m.write_text(json.dumps(result["metadata"], sort_keys=True, indent=2) + "\n")
    written.append(m)
    return written
