"""
Evaluation panel showing one results-table row per (qk, dk) setting
"""

from typing import Sequence

from rich.panel import Panel
from rich.table import Table

from eval_metrics import EvalReport


class EvalPanel:
    def __init__(self):
        self.title = "Retrieval Effectiveness / Efficiency"

    def render(self, reports: Sequence[EvalReport]) -> Panel:
        """Render qk, dk, L0_q, L0_d, FLOPS, MRR@10, R@10, R@100 columns"""
        table = Table(show_header=True, header_style="bold cyan", box=None, padding=(0, 1))
        for column in ("qk", "dk", "L0_q", "L0_d", "FLOPS", "MRR@10", "R@10", "R@100"):
            table.add_column(column, justify="right")

        if not reports:
            table.add_row("No data", "", "", "", "", "", "", "")
        for report in reports:
            table.add_row(
                str(report.qk),
                str(report.dk),
                f"{report.avg_l0_q:.2f}",
                f"{report.avg_l0_d:.2f}",
                f"{report.flops:.5f}",
                f"{report.mrr_at_10:.4f}",
                f"{report.r_at_10:.4f}",
                f"{report.r_at_100:.4f}",
            )

        return Panel(table, title=self.title, title_align="center", border_style="yellow")
