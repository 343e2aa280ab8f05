"""
Index panel: pruning summary and postings list length statistics
"""

from typing import Optional

from rich.panel import Panel
from rich.table import Table

from index_retrieval import PostingsStats
from pruning import PruneSummary


class IndexPanel:
    def __init__(self):
        self.title = "Pruning / Postings"

    def render(self, summary: Optional[PruneSummary] = None,
               stats: Optional[PostingsStats] = None) -> Panel:
        table = Table(show_header=False, box=None, padding=(0, 1))
        table.add_column("Label", style="cyan", width=22)
        table.add_column("Value", style="white")

        if summary is not None:
            table.add_row("k:", str(summary.k) if summary.k else "0 (unpruned)")
            table.add_row("vectors:", f"{summary.count:,}")
            before, after = summary.avg_l0_before, summary.avg_l0_after
            table.add_row("avg L0 before:", "-" if before is None else f"{before:.2f}")
            table.add_row("avg L0 after:", "-" if after is None else f"{after:.2f}")

        if stats is not None:
            table.add_row("postings lists:", f"{stats.count:,}")
            table.add_row("pos-ls-len mean:", f"{stats.mean:.3f}")
            table.add_row("pos-ls-len var:", f"{stats.variance:.3f}")
            table.add_row("pos-ls-len std:", f"{stats.std:.3f}")
        elif summary is None:
            table.add_row("No data", "")

        return Panel(table, title=self.title, title_align="center", border_style="cyan")
