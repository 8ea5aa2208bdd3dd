"""Table rendering: CSV and JSON at full precision, markdown rounded.

Every CLI command funnels its results through a `Table`, so column order
is stable and the three formats carry identical values (markdown rounds
floats to three decimals for reading; CSV and JSON round-trip exactly).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Optional, Sequence

from .metrics import MetricsReport

FORMATS = ("csv", "json", "markdown")


@dataclass(frozen=True)
class Table:
    columns: tuple[str, ...]
    rows: tuple[dict, ...]

    def __post_init__(self):
        for row in self.rows:
            unknown = set(row) - set(self.columns)
            if unknown:
                raise ValueError(f"row carries unknown columns {sorted(unknown)}")


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _markdown_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.3f}"
    return str(value)


def render_csv(table: Table) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_csv_cell(row.get(c)) for c in table.columns])
    return out.getvalue()


def render_json(table: Table) -> str:
    doc = {
        "columns": list(table.columns),
        "rows": [{c: row.get(c) for c in table.columns} for row in table.rows],
    }
    return json.dumps(doc, indent=2)


def render_markdown(table: Table) -> str:
    lines = [
        "| " + " | ".join(table.columns) + " |",
        "|" + "|".join([" --- "] * len(table.columns)) + "|",
    ]
    for row in table.rows:
        lines.append("| " + " | ".join(_markdown_cell(row.get(c)) for c in table.columns) + " |")
    return "\n".join(lines) + "\n"


def render(table: Table, fmt: str) -> str:
    if fmt == "csv":
        return render_csv(table)
    if fmt == "json":
        return render_json(table)
    if fmt == "markdown":
        return render_markdown(table)
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def metrics_report_table(report: MetricsReport) -> Table:
    """Per-condition scores with Average and Weighted Average footer rows."""
    if not report.per_condition:
        raise ValueError("metrics report covers no conditions")
    rows = [
        {"condition": c, "score": report.per_condition[c], "n_positive": report.prevalence[c]}
        for c in report.per_condition
    ]
    rows.append({"condition": "Average", "score": report.macro_average, "n_positive": None})
    rows.append(
        {"condition": "Weighted Average", "score": report.weighted_average, "n_positive": None}
    )
    return Table(columns=("condition", "score", "n_positive"), rows=tuple(rows))


def emit_metrics_report(report: MetricsReport, fmt: str = "markdown") -> str:
    return render(metrics_report_table(report), fmt)


def multi_score_table(
    columns: Sequence[str],
    rows: Sequence[dict],
    score_columns: Sequence[str],
    weights: Optional[Sequence[float]] = None,
    label_column: str = "condition",
) -> Table:
    """Attach Average / Weighted Average footer rows over `score_columns`."""
    from .metrics import macro_average, weighted_average

    rows = list(rows)
    if not rows:
        raise ValueError("no rows to tabulate")
    footer_macro: dict = {label_column: "Average"}
    footer_weighted: dict = {label_column: "Weighted Average"}
    for col in score_columns:
        scores = [row[col] for row in rows]
        footer_macro[col] = macro_average(scores)
        if weights is not None:
            footer_weighted[col] = weighted_average(scores, weights)
    rows.append(footer_macro)
    if weights is not None:
        rows.append(footer_weighted)
    return Table(columns=tuple(columns), rows=tuple(rows))
