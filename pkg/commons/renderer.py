from io import BytesIO, StringIO

import pandas as pd
from reportlab.lib import colors
from reportlab.lib.pagesizes import A4, landscape
from reportlab.lib.styles import getSampleStyleSheet
from reportlab.lib.units import inch
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle
from rest_framework.renderers import BaseRenderer, JSONRenderer


class ReportJsonRenderer(JSONRenderer):
    def render(self, data, accepted_media_type=None, renderer_context=None):
        renderer_context = {"indent": 2, **(renderer_context or {})}
        return super().render(data, accepted_media_type, renderer_context) + b"\n"


class CsvRenderer(BaseRenderer):
    """Renders ``{"columns": [...], "rows": [{...}, ...]}`` as CSV with a header row."""

    media_type = "text/csv"
    format = "csv"

    def render(self, data, accepted_media_type=None, renderer_context=None):
        if not isinstance(data, dict) or "columns" not in data:
            return b""

        df = pd.DataFrame(data=data.get("rows", []), columns=data["columns"])
        buffer = StringIO()
        df.to_csv(buffer, sep=",", index=False, float_format="%.17g")
        return buffer.getvalue().encode("utf-8")


class PdfRenderer(BaseRenderer):
    """Renders the same table payload as a one-page landscape PDF."""

    media_type = "application/pdf"
    format = "pdf"

    def render(self, data, accepted_media_type=None, renderer_context=None):
        if not isinstance(data, dict) or not data.get("rows"):
            return b""

        output = BytesIO()
        document = SimpleDocTemplate(
            output,
            pagesize=landscape(A4),
            rightMargin=30,
            leftMargin=30,
            topMargin=30,
            bottomMargin=18,
            title=data.get("title", "Report"),
        )

        styles = getSampleStyleSheet()
        title_style = styles["Title"]
        normal_style = styles["BodyText"]

        columns = data["columns"]
        headers = [column.replace("_", " ") for column in columns]
        table_data = [headers]
        for row in data["rows"]:
            table_data.append(
                [Paragraph(_format_cell(row.get(column, "")), normal_style) for column in columns]
            )

        table = Table(table_data)
        table.setStyle(
            TableStyle(
                [
                    ("BACKGROUND", (0, 0), (-1, 0), colors.grey),
                    ("TEXTCOLOR", (0, 0), (-1, 0), colors.whitesmoke),
                    ("ALIGN", (0, 0), (-1, -1), "CENTER"),
                    ("FONTNAME", (0, 0), (-1, 0), "Helvetica-Bold"),
                    ("FONTSIZE", (0, 0), (-1, 0), 10),
                    ("BOTTOMPADDING", (0, 0), (-1, 0), 10),
                    ("BACKGROUND", (0, 1), (-1, -1), colors.beige),
                    ("GRID", (0, 0), (-1, -1), 1, colors.black),
                ]
            )
        )

        elements = [
            Spacer(1, 0.25 * inch),
            Paragraph(data.get("title", "Report"), title_style),
            Spacer(1, 0.15 * inch),
            table,
        ]
        document.build(elements)
        return output.getvalue()


def _format_cell(value):
    if isinstance(value, float):
        return f"{value:.3f}"
    return str(value)
