"""Run outputs on disk: JSON report, CSV time series, JSONL logs, text summary.

Everything is written with sorted keys and ``repr`` floats and carries no
wall-clock data, so equal runs give equal bytes.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .runner import RunReport, RunResult

BASE_COLUMNS = ("t", "true_offset", "gnss_offset", "local_offset", "fix", "clog_factor", "attack_phase")
TAIL_COLUMNS = ("kalman_innovation", "kalman_s", "kalman_accepted", "external", "clock", "phase", "decision")
FILES = {
    "report": "report.json",
    "timeseries": "timeseries.csv",
    "verdicts": "verdicts.jsonl",
    "queries": "queries.jsonl",
    "events": "events.jsonl",
    "summary": "summary.txt",
}


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=False)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def timeseries_csv(rows: list[dict]) -> str:
    servers = sorted({k for r in rows for k in r if k.startswith("off_")})
    cols = list(BASE_COLUMNS) + servers + list(TAIL_COLUMNS)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in cols])
    return buf.getvalue()


def jsonl(records: list[dict]) -> str:
    return "".join(_dumps(r) + "\n" for r in records)


def _fmt(v, unit: str = "s") -> str:
    return "not_detected" if v is None else f"{v:g} {unit}"


def summary_text(report: RunReport) -> str:
    lines = [
        f"scenario: {report.name}",
        f"seed: {report.seed}",
        f"duration: {report.duration:g} s ({report.epochs} epochs)",
        f"attack: {report.attack_kind}" + (f" from {report.attack_start:g} s" if report.attack_start is not None else ""),
    ]
    if report.attack_start is not None:
        lines.append(f"detection_latency: {_fmt(report.detection_latency)}")
        lines.append(f"missed: {str(report.missed).lower()}")
        lines.append(f"recovery_latency: {_fmt(report.recovery_latency)}")
    lines.append(f"false_positive_count: {report.false_positive_count}")
    rate = report.kalman.get("false_reject_rate")
    if rate is not None:
        lines.append(f"kalman_false_reject_rate: {rate:.6f}")
    lines.append("first_trigger:")
    for det, first in sorted(report.first_trigger.items()):
        lines.append(f"  {det}: " + ("none" if first is None else f"t={first['t']:g} s latency={first['latency']:g} s"))
    q = report.queries
    lines.append(f"queries: ok={q.get('ok', 0)} timeout={q.get('timeout', 0)} auth_failure={q.get('auth_failure', 0)}")
    return "\n".join(lines) + "\n"


def write_run(result: RunResult, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / v for k, v in FILES.items()}
    result.report.files = {k: v for k, v in sorted(FILES.items())}
    paths["report"].write_text(_dumps(result.report.to_dict()) + "\n")
    paths["timeseries"].write_text(timeseries_csv(result.timeseries))
    paths["verdicts"].write_text(jsonl(result.verdicts))
    paths["queries"].write_text(jsonl(result.queries))
    paths["events"].write_text(jsonl(result.events))
    paths["summary"].write_text(summary_text(result.report))
    return paths


def load_report(run_dir) -> RunReport:
    return RunReport.from_dict(json.loads((Path(run_dir) / FILES["report"]).read_text()))


def load_jsonl(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line]


def emit_report(run_dir, fmt: str) -> str:
    """Render a finished run: ``text`` summary, ``csv`` time series, or
    ``jsonl`` with the report followed by the per-epoch verdicts."""
    run_dir = Path(run_dir)
    if not (run_dir / FILES["report"]).exists():
        raise FileNotFoundError(f"{run_dir} holds no {FILES['report']}")
    if fmt == "text":
        return summary_text(load_report(run_dir))
    if fmt == "csv":
        return (run_dir / FILES["timeseries"]).read_text()
    if fmt == "jsonl":
        return jsonl([load_report(run_dir).to_dict()]) + (run_dir / FILES["verdicts"]).read_text()
    raise ValueError(f"unknown format {fmt!r}")
