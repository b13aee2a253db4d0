"""report_pdf.py - one-page run summary.

Rendered with reportlab in invariant mode (fixed creation date and document
id), so the bytes depend only on the rows passed in.
"""

from __future__ import annotations

import io
from typing import Sequence

from reportlab.lib import colors
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import getSampleStyleSheet
from reportlab.lib.units import mm
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from run_manifest import format_float

SUMMARY_COLUMNS = ("L", "beta", "incoherence_ratio", "qfi", "leaf_entropy", "gap", "masked")
TITLE = "leafkit run summary"


def _style_table(tbl: Table, rows: int) -> None:
    style = [
        ("FONTNAME", (0, 0), (-1, -1), "Helvetica"),
        ("FONTSIZE", (0, 0), (-1, -1), 8),
        ("GRID", (0, 0), (-1, -1), 0.2, colors.HexColor("#e5e7eb")),
        ("BACKGROUND", (0, 0), (-1, 0), colors.HexColor("#f3f4f6")),
        ("FONTNAME", (0, 0), (-1, 0), "Helvetica-Bold"),
        ("ALIGN", (0, 0), (-1, -1), "RIGHT"),
        ("TOPPADDING", (0, 0), (-1, -1), 4),
        ("BOTTOMPADDING", (0, 0), (-1, -1), 4),
    ]
    for i in range(2, rows, 2):
        style.append(("BACKGROUND", (0, i), (-1, i), colors.HexColor("#f7f7f7")))
    tbl.setStyle(TableStyle(style))


def _cell(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, (bool, int)):
        return str(value)
    return format_float(value)


def build_summary_pdf(
    rows: Sequence[dict],
    *,
    command: str,
    config_hash: str,
    tool_version: str,
) -> bytes:
    """``rows`` carry the SUMMARY_COLUMNS keys, one per (L, beta)."""
    buf = io.BytesIO()
    doc = SimpleDocTemplate(
        buf,
        pagesize=A4,
        leftMargin=18 * mm,
        rightMargin=18 * mm,
        topMargin=16 * mm,
        bottomMargin=16 * mm,
        title=TITLE,
        author="leafkit",
        invariant=1,
    )
    styles = getSampleStyleSheet()
    story = [
        Paragraph(TITLE, styles["Title"]),
        Paragraph(f"command: {command}", styles["Normal"]),
        Paragraph(f"config: {config_hash[:16]}", styles["Normal"]),
        Paragraph(f"version: {tool_version}", styles["Normal"]),
        Spacer(1, 6 * mm),
    ]
    data = [list(SUMMARY_COLUMNS)]
    for row in rows:
        data.append([_cell(row.get(col)) for col in SUMMARY_COLUMNS])
    if len(data) == 1:
        story.append(Paragraph("No leaves were built in this run.", styles["Normal"]))
    else:
        tbl = Table(data, repeatRows=1)
        _style_table(tbl, len(data))
        story.append(tbl)
    doc.build(story)
    return buf.getvalue()
