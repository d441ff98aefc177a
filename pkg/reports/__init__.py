"""
实验记录层
提供报告模型与账本存取
"""

from .models import Algorithm, BaselineEntry, ExperimentReport, Phase, RunStatus
from .repository import ReportRepository

__all__ = [
    'Algorithm',
    'BaselineEntry',
    'ExperimentReport',
    'Phase',
    'RunStatus',
    'ReportRepository',
]
