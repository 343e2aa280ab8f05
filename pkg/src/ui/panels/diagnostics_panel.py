"""
Diagnostics panel for logit / representation statistics
"""

from typing import Optional

from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from diagnostics import DiagnosticsReport


def _fmt(value: Optional[float]) -> Text:
    if value is None:
        return Text("-", style="dim")
    return Text(f"{value:.4f}")


class DiagnosticsPanel:
    def __init__(self):
        self.title = "Logit / Representation Statistics"

    def render(self, report: DiagnosticsReport) -> Panel:
        table = Table(show_header=False, box=None, padding=(0, 1))
        table.add_column("Statistic", style="cyan", width=24)
        table.add_column("Value", style="white")

        table.add_row("input:", f"{report.kind} ({report.appearance} appearance)")
        table.add_row("term_occ_threshold:", str(report.term_occ_threshold))
        table.add_row("logit-score-std:", _fmt(report.logit_score_std))
        table.add_row("logit-cnt:", str(report.logit_cnt))
        for key in report.doc_score_avg:
            table.add_row(f"doc-score-avg top{key}:", _fmt(report.doc_score_avg[key]))
            table.add_row(f"doc-score-std top{key}:", _fmt(report.doc_score_std.get(key)))
        table.add_row("non-neg-terms-avg:", _fmt(report.non_neg_terms_avg))
        table.add_row("non-neg-terms-std:", _fmt(report.non_neg_terms_std))
        table.add_row("L0-std:", _fmt(report.l0_std))
        table.add_row("pos-ls-len-std:", _fmt(report.pos_ls_len_std))

        return Panel(table, title=self.title, title_align="center", border_style="magenta",
                     subtitle=f"{report.std_convention} std")
