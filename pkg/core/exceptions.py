"""
异常定义
数值核心只抛出异常，打印与退出码由 CLI 负责
"""
from typing import Optional


class MaskforgeError(Exception):
    """所有 maskforge 错误的基类"""


class SingularMatrixError(MaskforgeError):
    """稀疏系统奇异（例如掩码 c 在某个连通域上全为 0）"""


class NoConvergenceError(MaskforgeError):
    """迭代求解器在预算内未收敛"""


class LineSearchStallError(MaskforgeError):
    """iPiano 回溯次数超过上限"""


class DimensionMismatchError(MaskforgeError, ValueError):
    """向量/矩阵尺寸不匹配"""


class ImageFormatError(MaskforgeError):
    """PGM 文件头损坏或数据被截断"""


class UnsupportedFormatError(ImageFormatError):
    """非灰度 PNM（P3/P6 等）"""


class PipelineError(MaskforgeError):
    """带阶段标签的流水线错误"""

    def __init__(self, phase: str, cause: Optional[BaseException] = None, message: str = ""):
        self.phase = phase
        self.cause = cause
        detail = message or (str(cause) if cause is not None else "")
        super().__init__(f"[{phase}] {detail}")


class NonMonotoneDensityWarning(UserWarning):
    """λ 标定过程中密度不随 λ 单调下降"""
