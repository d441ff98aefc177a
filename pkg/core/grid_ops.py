"""
规则像素网格上的离散微分算子
Neumann 边界：前向差分在边界处置零，因此 Δ = -∇ᵀ∇ 按构造精确成立
"""
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Tuple

import numpy as np
import scipy.sparse as sp

from .exceptions import DimensionMismatchError

# 稀疏算子统一用 CSR 存储
SparseOperator = sp.csr_matrix


class ModelKind(str, Enum):
    """下层修复模型（正则项类型）"""
    HARMONIC = 'harmonic'
    BIHARMONIC = 'biharmonic'
    TV = 'tv'

    @property
    def is_linear(self) -> bool:
        return self is not ModelKind.TV


#region 图像类型

@dataclass
class Image:
    """灰度图像，行优先展开，灰度值在 [0,1]"""
    width: int
    height: int
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64).ravel()
        if self.width < 1 or self.height < 1:
            raise DimensionMismatchError(f"非法图像尺寸: {self.width}x{self.height}")
        if self.data.size != self.width * self.height:
            raise DimensionMismatchError(
                f"数据长度 {self.data.size} 与尺寸 {self.width}x{self.height} 不符"
            )
        if self.data.size and (self.data.min() < 0.0 or self.data.max() > 1.0):
            raise ValueError("灰度值必须位于 [0,1]")

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    @property
    def size(self) -> int:
        return self.width * self.height

    def as_array(self) -> np.ndarray:
        """返回 (height, width) 的二维数组视图"""
        return self.data.reshape(self.height, self.width)

    @classmethod
    def from_array(cls, array: np.ndarray, clip: bool = False) -> 'Image':
        """从二维数组构造；clip=True 时先截断到 [0,1]（重建结果可能越界）"""
        array = np.asarray(array, dtype=np.float64)
        if array.ndim != 2:
            raise DimensionMismatchError(f"需要二维数组，实际维度 {array.ndim}")
        if clip:
            array = np.clip(array, 0.0, 1.0)
        height, width = array.shape
        return cls(width=width, height=height, data=array.ravel().copy())

#endregion


#region 算子组装

def _check_grid(width: int, height: int):
    if width < 1 or height < 1:
        raise DimensionMismatchError(f"网格尺寸必须为正: {width}x{height}")


def _forward_difference(n: int) -> sp.csr_matrix:
    """一维前向差分，最后一行为零（Neumann）"""
    if n == 1:
        return sp.csr_matrix((1, 1))
    main = -np.ones(n)
    main[-1] = 0.0
    upper = np.ones(n - 1)
    return sp.diags([main, upper], [0, 1], shape=(n, n), format='csr')


def build_gradient_parts(width: int, height: int) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """返回 (∇x, ∇y)，各为 N×N"""
    _check_grid(width, height)
    # 像素下标 i = row * width + col
    grad_x = sp.kron(sp.identity(height), _forward_difference(width), format='csr')
    grad_y = sp.kron(_forward_difference(height), sp.identity(width), format='csr')
    grad_x.eliminate_zeros()
    grad_y.eliminate_zeros()
    return grad_x, grad_y


def build_gradient(width: int, height: int) -> SparseOperator:
    """梯度算子 ∇ = (∇x; ∇y)，2N×N"""
    grad_x, grad_y = build_gradient_parts(width, height)
    grad = sp.vstack([grad_x, grad_y], format='csr')
    grad.sum_duplicates()
    return grad


def build_laplacian(width: int, height: int) -> SparseOperator:
    """Neumann 拉普拉斯 Δ = -∇ᵀ∇，内部为五点模板 (1,1,-4,1,1)"""
    grad = build_gradient(width, height)
    lap = (-(grad.T @ grad)).tocsr()
    lap.sum_duplicates()
    lap.eliminate_zeros()
    return lap


def build_biharmonic(width: int, height: int) -> SparseOperator:
    """双调和算子 Δ² = Δ·Δ，边界行自动继承 Neumann 修正"""
    lap = build_laplacian(width, height)
    bih = (lap @ lap).tocsr()
    bih.sum_duplicates()
    bih.eliminate_zeros()
    return bih


@dataclass(frozen=True)
class GridOperators:
    """同一网格上的算子集合，组装后只读，可跨线程共享"""
    width: int
    height: int
    grad_x: sp.csr_matrix
    grad_y: sp.csr_matrix
    grad: sp.csr_matrix
    laplacian: sp.csr_matrix
    biharmonic: sp.csr_matrix

    @property
    def size(self) -> int:
        return self.width * self.height

    def regularizer_matrix(self, kind: ModelKind) -> sp.csr_matrix:
        """线性模型的半正定算子 G：调和为 -Δ，双调和为 Δ²"""
        kind = ModelKind(kind)
        if kind is ModelKind.HARMONIC:
            return (-self.laplacian).tocsr()
        if kind is ModelKind.BIHARMONIC:
            return self.biharmonic
        raise ValueError("TV 模型没有线性算子 G")


@lru_cache(maxsize=16)
def get_operators(width: int, height: int) -> GridOperators:
    """按网格尺寸缓存算子"""
    grad_x, grad_y = build_gradient_parts(width, height)
    grad = sp.vstack([grad_x, grad_y], format='csr')
    lap = (-(grad.T @ grad)).tocsr()
    lap.eliminate_zeros()
    bih = (lap @ lap).tocsr()
    bih.eliminate_zeros()
    return GridOperators(
        width=width,
        height=height,
        grad_x=grad_x,
        grad_y=grad_y,
        grad=grad,
        laplacian=lap,
        biharmonic=bih,
    )


def operators_for(array: np.ndarray) -> GridOperators:
    """根据二维数组形状取算子"""
    array = np.asarray(array)
    if array.ndim != 2:
        raise DimensionMismatchError(f"需要二维数组 (height, width)，实际维度 {array.ndim}")
    height, width = array.shape
    return get_operators(width, height)

#endregion
