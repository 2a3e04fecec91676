"""
PDF export of a fitted model report
"""
import datetime
import logging

from fpdf import FPDF

_logger = logging.getLogger(__name__)


class ModelReportPDF(FPDF):
    """Extended FPDF class for model reports with custom headers and footers"""

    def __init__(self, title="Point Process Model Report"):
        super().__init__()
        self.title = title
        self.report_datetime = datetime.datetime.now().strftime("%Y-%m-%d %H:%M:%S")

    def header(self):
        self.set_font('Arial', 'B', 15)
        self.cell(0, 10, self.title, 0, 1, 'C')

        self.set_font('Arial', 'I', 8)
        self.cell(0, 10, f'Generated: {self.report_datetime}', 0, 1, 'R')

        self.ln(5)

    def footer(self):
        # Position at 1.5 cm from bottom
        self.set_y(-15)
        self.set_font('Arial', 'I', 8)
        self.cell(0, 10, f'Page {self.page_no()}/{{nb}}', 0, 0, 'C')


def _coefficient_table(pdf, coefficients):
    col_widths = (60, 40, 40, 40)
    row_height = 6
    pdf.set_font('Arial', 'B', 9)
    pdf.set_fill_color(200, 200, 200)
    for width, label in zip(col_widths, ("Term", "Coefficient", "Std. error", "p-value")):
        pdf.cell(width, row_height, label, 1, 0, 'C', True)
    pdf.ln(row_height)
    pdf.set_font('Arial', '', 9)
    for row in coefficients:
        pdf.cell(col_widths[0], row_height, str(row['name']), 1, 0)
        for width, key in zip(col_widths[1:], ('beta', 'se', 'p')):
            value = row.get(key)
            pdf.cell(width, row_height, "n/a" if value is None else f"{value:.5g}", 1, 0, 'C')
        pdf.ln(row_height)
        if pdf.get_y() > 250:
            pdf.add_page()


def generate_model_report(report, path, images=()):
    """
    Write a PDF summary of a model fit

    Parameters
    ----------
    report : dict
        Model report as written to model_report.json
    path : str
        Output PDF file
    images : iterable of tuple, optional
        (caption, PNG path) pairs appended after the tables

    Returns
    -------
    str
        The output path
    """
    pdf = ModelReportPDF()
    pdf.alias_nb_pages()
    pdf.add_page()

    full = report['full_model']
    pdf.set_font('Arial', 'B', 12)
    pdf.cell(0, 10, "1. Full model", 0, 1, 'L')
    pdf.set_font('Arial', '', 10)
    pdf.cell(60, 6, "Data points used:", 0, 0)
    pdf.cell(0, 6, f"{full['n_data']} ({full['n_dropped']} dropped)", 0, 1)
    pdf.cell(60, 6, "Log-likelihood:", 0, 0)
    pdf.cell(0, 6, f"{full['loglik']:.6g}", 0, 1)
    pdf.cell(60, 6, "Converged:", 0, 0)
    pdf.cell(0, 6, f"{full['converged']} after {full['iterations']} iterations", 0, 1)
    pdf.ln(3)
    _coefficient_table(pdf, full['coefficients'])
    pdf.ln(8)

    if report.get('removed'):
        pdf.set_font('Arial', 'B', 12)
        pdf.cell(0, 10, "2. Backward elimination", 0, 1, 'L')
        pdf.set_font('Arial', '', 10)
        for step in report['removed']:
            pdf.cell(0, 6, f"Removed {step['name']} (p-value {step['p_value']:.4g})", 0, 1)
        pdf.ln(3)
        _coefficient_table(pdf, report['final_model']['coefficients'])
        pdf.ln(8)

    for caption, image in images:
        if pdf.get_y() > 150:
            pdf.add_page()
        pdf.set_font('Arial', 'B', 10)
        pdf.cell(0, 7, caption, 0, 1, 'L')
        pdf.image(image, x=30, w=150)
        pdf.ln(5)

    pdf.output(path, 'F')
    _logger.info("Wrote PDF model report to %s", path)
    return path
