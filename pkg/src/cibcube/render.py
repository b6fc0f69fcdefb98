"""Grid rendering: delimited export and fixed-width text for pivot results.

Layout mirrors the numerical analysis view: hierarchy path columns on the
left, one value column per column-axis member (or per measure when no
column axis), subtotal rows labelled "Total" and the final row labelled
"Grand Total". Member ordering and column ordering are fixed, so output is
byte-identical across runs on the same snapshot.
"""

from __future__ import annotations

import csv
import io

from .cube import Header, PivotResult

SUBTOTAL_LABEL = "Total"
GRAND_TOTAL_LABEL = "Grand Total"
NO_DATA = "no data"


def _format_value(value: int | None) -> str:
    return NO_DATA if value is None else str(value)


def _row_label_cells(header: Header, width: int) -> list[str]:
    cells = list(header.path[:width])
    if header.kind == "subtotal":
        cells.append(SUBTOTAL_LABEL)
    elif header.kind == "grand_total":
        cells.append(GRAND_TOTAL_LABEL)
    cells += [""] * (width - len(cells))
    return cells[:width]


def _column_captions(result: PivotResult) -> list[str]:
    captions = []
    for col in result.cols:
        if col.kind == "member":
            caption = " / ".join(col.path) if col.path else ""
        elif col.kind == "subtotal":
            caption = " / ".join((*col.path, SUBTOTAL_LABEL))
        else:
            caption = GRAND_TOTAL_LABEL
        captions.append(caption)
    return captions


def _value_headers(result: PivotResult) -> list[str]:
    captions = _column_captions(result)
    headers = []
    for caption in captions:
        for measure in result.measures:
            if not caption:
                headers.append(measure)
            elif len(result.measures) > 1:
                headers.append(f"{caption} {measure}")
            else:
                headers.append(caption)
    return headers


def _table(result: PivotResult) -> list[list[str]]:
    """Full grid as text cells, header row first."""
    path_width = max(1, len(result.row_levels))
    label_headers = [level for _, level in result.row_levels] or ["Total"]
    header_row = label_headers + _value_headers(result)

    body: list[list[str]] = []
    for header, line in zip(result.rows, result.cells):
        labels = _row_label_cells(header, path_width)
        values = [_format_value(cell[m]) for cell in line for m in result.measures]
        body.append(labels + values)
    return [header_row] + body


def render_delimited(result: PivotResult) -> str:
    """Comma-separated export; subtotal rows carry the literal label "Total"."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in _table(result):
        writer.writerow(row)
    return buf.getvalue()


def render_text(result: PivotResult) -> str:
    """Fixed-width grid for terminals; value columns right-aligned."""
    table = _table(result)
    n_labels = max(1, len(result.row_levels))
    widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
    lines = []
    for row in table:
        cells = []
        for i, cell in enumerate(row):
            if i < n_labels:
                cells.append(cell.ljust(widths[i]))
            else:
                cells.append(cell.rjust(widths[i]))
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"
