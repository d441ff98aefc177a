"""
核心数值模块
网格算子、稀疏求解、下层修复问题、掩码优化（SPPD / iPiano）、GVO 与实验流水线
"""

from .exceptions import MaskforgeError, PipelineError, SingularMatrixError
from .grid_ops import Image, ModelKind, get_operators
from .pipeline import ExperimentConfig, calibrate_lambda, mse, random_mask, run_experiment

__all__ = [
    'MaskforgeError',
    'PipelineError',
    'SingularMatrixError',
    'Image',
    'ModelKind',
    'get_operators',
    'ExperimentConfig',
    'calibrate_lambda',
    'mse',
    'random_mask',
    'run_experiment',
]
