"""Report rendering: a table-style text layout, TSV and a JSON document.

All three formats are deterministic for a fixed report. Wall-clock times are
the only run-dependent values; ``timing=False`` renders them as ``-`` so
repeated runs produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import sys
from dataclasses import asdict, fields

from .pipeline import ConstraintResult, ToleranceReport

logger = logging.getLogger(__name__)

FORMATS = ("text-table", "tsv", "json-doc")

TSV_COLUMNS = [f.name for f in fields(ConstraintResult) if f.name != "warnings"]
_INT_COLUMNS = {"cone_order", "gram_size", "gram_size_full", "multipliers", "iterations", "backoff_rounds",
                "n_samples", "violations"}


def _fmt4(v: float | None) -> str:
    return "n/a" if v is None else f"{v:.4f}"


def _violation_cell(c: ConstraintResult) -> str:
    if c.violations is None:
        return "n/a"
    return f"{100.0 * c.violations / c.n_samples:.2f}% ({c.violations}/{c.n_samples})"


def render_text(report: ToleranceReport, timing: bool = True) -> str:
    names = [c.name for c in report.constraints]
    rows = [
        ("time (s)", [f"{c.time_s:.4f}" if timing else "-" for c in report.constraints]),
        ("safety violation", [_violation_cell(c) for c in report.constraints]),
        ("smallest f(x) (m)", [_fmt4(c.min_f) for c in report.constraints]),
        ("λ (rad)", [f"{c.lam:.4f}" for c in report.constraints]),
    ]
    label_w = max(len(r[0]) for r in rows)
    widths = [max(len(n), *(len(r[1][i]) for r in rows)) for i, n in enumerate(names)]
    lines = [f"{report.name} ({report.dof} joints, cone order {report.cone_order})"]
    lines.append("  ".join([" " * label_w, *(n.rjust(w) for n, w in zip(names, widths))]).rstrip())
    for label, cells in rows:
        lines.append("  ".join([label.ljust(label_w), *(v.rjust(w) for v, w in zip(cells, widths))]))
    lines.append("")
    lines.append(f"λ_min (rad): {report.lam_min:.4f}")
    if report.verified:
        lines.append(f"all constraints at λ_min: {report.combined_violations} violations in {report.n_samples} "
                     f"samples, smallest f(x) {report.combined_min_f:.4f} m (seed {report.seed})")
    else:
        lines.append("verification: n/a")
    for c in report.constraints:
        bits = [f"{c.name}: status {c.status}", f"certified {'yes' if c.certified else 'no'}",
                f"Gram {c.gram_size}x{c.gram_size} (from {c.gram_size_full})"]
        if c.oracle_hi is not None:
            bits.append(f"oracle [{c.oracle_lo:.4f}, {c.oracle_hi:.4f}]")
        if c.lower_bound_gap is not None:
            bits.append(f"max(g - f) {c.lower_bound_gap:.1e}")
        lines.append(", ".join(bits))
    for w in report.all_warnings():
        lines.append(f"warning: {w}")
    if timing:
        lines.append(f"total time (s): {report.total_time_s:.4f}")
    return "\n".join(lines) + "\n"


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_tsv(report: ToleranceReport, timing: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(["constraint", *TSV_COLUMNS[1:]])
    for c in report.constraints:
        row = asdict(c)
        if not timing:
            row["time_s"] = None
        w.writerow([_cell(row[k]) for k in TSV_COLUMNS])
    return buf.getvalue()


def parse_tsv(text: str) -> list[dict]:
    """Inverse of :func:`render_tsv` for the per-constraint rows."""
    reader = csv.reader(io.StringIO(text), delimiter="\t")
    header = next(reader)
    keys = ["name", *header[1:]]
    out = []
    for row in reader:
        rec = {}
        for k, v in zip(keys, row):
            if v == "":
                rec[k] = None
            elif k in ("name", "status"):
                rec[k] = v
            elif k == "certified":
                rec[k] = v == "true"
            elif k in _INT_COLUMNS:
                rec[k] = int(v)
            else:
                rec[k] = float(v)
        out.append(rec)
    return out


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def report_dict(report: ToleranceReport, timing: bool = True) -> dict:
    constraints = []
    for c in report.constraints:
        d = {k: _json_safe(v) for k, v in asdict(c).items()}
        if not timing:
            d["time_s"] = None
        constraints.append(d)
    return {
        "name": report.name,
        "dof": report.dof,
        "cone_order": report.cone_order,
        "seed": report.seed,
        "n_samples": report.n_samples,
        "lambda_min": report.lam_min,
        "constraints": constraints,
        "verification": None if not report.verified else {
            "violations": report.combined_violations,
            "min_f": report.combined_min_f,
        },
        "warnings": report.all_warnings(),
        "exit_code": report.exit_code,
        "total_time_s": report.total_time_s if timing else None,
    }


def render_json(report: ToleranceReport, timing: bool = True) -> str:
    return json.dumps(report_dict(report, timing), indent=2, ensure_ascii=False) + "\n"


def render(report: ToleranceReport, fmt: str = "text-table", timing: bool = True) -> str:
    if fmt == "text-table":
        return render_text(report, timing)
    if fmt == "tsv":
        return render_tsv(report, timing)
    if fmt == "json-doc":
        return render_json(report, timing)
    raise ValueError(f"unknown report format {fmt!r}; choose from {', '.join(FORMATS)}")


def emit_report(report: ToleranceReport, fmt: str = "text-table", path=None, timing: bool = True) -> int:
    """Write the report to ``path`` (stdout when None) and return the exit code."""
    text = render(report, fmt, timing)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        logger.info("report written to %s", path)
    return report.exit_code
