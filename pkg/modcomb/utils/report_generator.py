"""
PDF Report Generator
"""
import os
from typing import Dict

from reportlab.lib import colors
from reportlab.lib.pagesizes import letter
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import inch
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from modcomb.utils.exporters import ExperimentResults, round_floats

REPORT_FILE = 'report.pdf'
MAX_TABLE_ROWS = 40


def _cell(value) -> str:
    value = round_floats(value)
    if isinstance(value, float):
        return f"{value:.6g}"
    return '' if value is None else str(value)


def generate_report(results: ExperimentResults, output_dir: str) -> str:
    """
    Generate PDF report of an experiment's summary and tables

    Args:
        results: Experiment results as passed to emit_summary
        output_dir: Artifact directory

    Returns:
        Path to generated PDF file
    """
    os.makedirs(output_dir, exist_ok=True)
    filepath = os.path.join(output_dir, REPORT_FILE)

    # invariant: no timestamps or random document ids
    doc = SimpleDocTemplate(filepath, pagesize=letter, invariant=True,
                            title=f"modcomb {results.experiment}", author='modcomb')
    story = []
    styles = getSampleStyleSheet()

    title_style = ParagraphStyle(
        'ReportTitle',
        parent=styles['Heading1'],
        fontSize=20,
        textColor=colors.HexColor('#1a1a1a'),
        spaceAfter=24
    )
    story.append(Paragraph(f"Experiment: {results.experiment}", title_style))
    story.append(Spacer(1, 0.2*inch))

    # Summary
    story.append(Paragraph("<b>Summary</b>", styles['Heading2']))
    for key in sorted(results.summary):
        value = results.summary[key]
        if isinstance(value, (dict, list)):
            continue
        story.append(Paragraph(f"<b>{key}:</b> {_cell(value)}", styles['Normal']))
    story.append(Spacer(1, 0.3*inch))

    # Tables
    for name in sorted(results.tables):
        table = results.tables[name]
        story.append(Paragraph(f"<b>{name}</b>", styles['Heading2']))
        columns = list(table.columns)
        table_data = [columns]
        for row in table.rows[:MAX_TABLE_ROWS]:
            table_data.append([_cell(row.get(col)) for col in columns])
        if len(table.rows) > MAX_TABLE_ROWS:
            story.append(Paragraph(f"<i>first {MAX_TABLE_ROWS} of {len(table.rows)} rows</i>", styles['Normal']))

        pdf_table = Table(table_data, repeatRows=1)
        pdf_table.setStyle(TableStyle([
            ('BACKGROUND', (0, 0), (-1, 0), colors.grey),
            ('TEXTCOLOR', (0, 0), (-1, 0), colors.whitesmoke),
            ('ALIGN', (0, 0), (-1, -1), 'LEFT'),
            ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
            ('FONTSIZE', (0, 0), (-1, -1), 7),
            ('BOTTOMPADDING', (0, 0), (-1, 0), 8),
            ('BACKGROUND', (0, 1), (-1, -1), colors.beige),
            ('GRID', (0, 0), (-1, -1), 0.5, colors.black)
        ]))
        story.append(pdf_table)
        story.append(Spacer(1, 0.2*inch))

    doc.build(story)

    return filepath
