"""
Utility package: configuration, file formats, metrics, plots and reports.
"""

from .config_manager import ConfigManager, RunConfig, SweepConfig
from .metrics import MetricsLog
from .report_writer import ReportWriter

__all__ = ['ConfigManager', 'RunConfig', 'SweepConfig', 'MetricsLog', 'ReportWriter']
