from .diagnostics_panel import DiagnosticsPanel
from .eval_panel import EvalPanel
from .gradcheck_panel import GradCheckPanel
from .index_panel import IndexPanel

__all__ = [
    "DiagnosticsPanel",
    "EvalPanel",
    "GradCheckPanel",
    "IndexPanel",
]
