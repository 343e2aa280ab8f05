"""
Gradient check panel
"""

from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from training_math import GradCheckReport


class GradCheckPanel:
    def __init__(self):
        self.title = "Gradient Check"

    def render(self, report: GradCheckReport) -> Panel:
        """Render the worst relative error of every |B| x width cell"""
        table = Table(show_header=True, header_style="bold cyan", box=None, padding=(0, 1))
        table.add_column("|B|", justify="right")
        table.add_column("width", justify="right")
        table.add_column("max rel err", justify="right")

        for row in report.rows:
            # Green when within tolerance, red otherwise
            style = "green" if row.max_relative_error <= report.tolerance else "red"
            table.add_row(str(row.batch_size), str(row.width),
                          Text(f"{row.max_relative_error:.3e}", style=style))

        status = "PASS" if report.passed else "FAIL"
        subtitle = f"{status}: {report.max_relative_error:.3e}"
        if report.passed:
            subtitle += f" <= {report.tolerance:.0e}"
        # Errors are relative down to the floor, absolute below it
        subtitle += f" (floor {report.error_floor:.0e})"
        return Panel(
            table,
            title=f"{self.title}: {report.loss} (seed {report.seed})",
            title_align="center",
            subtitle=subtitle,
            border_style="green" if report.passed else "red",
        )
