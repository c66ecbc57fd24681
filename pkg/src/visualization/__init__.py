"""Visualization modules for experiment figures."""

from .charts import ChartGenerator

__all__ = ["ChartGenerator"]
