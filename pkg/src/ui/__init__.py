from .panels import DiagnosticsPanel, EvalPanel, GradCheckPanel, IndexPanel

__all__ = ["DiagnosticsPanel", "EvalPanel", "GradCheckPanel", "IndexPanel"]
