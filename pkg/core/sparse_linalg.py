"""
稀疏线性系统求解
默认 SuperLU 直接分解（填充缩减排序 + LU），可切换为对角缩放的 BiCGSTAB 迭代求解
"""
import logging
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .config import cfg
from .exceptions import DimensionMismatchError, NoConvergenceError, SingularMatrixError

logger = logging.getLogger(__name__)

# 相对主元阈值
PIVOT_TOLERANCE = 1e-14
# 对称性判定的相对容差
SYMMETRY_TOLERANCE = 1e-14
ITERATIVE_RTOL = 1e-12


def _safe_inverse(vec: np.ndarray) -> np.ndarray:
    """逐元素求倒数，零元素保持为 1"""
    result = np.ones_like(vec)
    nonzero = vec != 0
    result[nonzero] = 1.0 / vec[nonzero]
    return result


def is_symmetric(matrix: sp.spmatrix) -> bool:
    """判断稀疏矩阵是否对称（相对容差）"""
    scale = abs(matrix).max() if matrix.nnz else 0.0
    if scale == 0.0:
        return True
    diff = (matrix - matrix.T).tocsr()
    if diff.nnz == 0:
        return True
    return abs(diff).max() <= SYMMETRY_TOLERANCE * scale


class Factorization:
    """
    已分解的稀疏矩阵句柄

    构造后只读；同一实例的 solve 可并发调用
    """

    def __init__(self, matrix: sp.spmatrix, backend: Optional[str] = None):
        matrix = sp.csc_matrix(matrix, dtype=np.float64)
        if matrix.shape[0] != matrix.shape[1]:
            raise DimensionMismatchError(f"需要方阵，实际形状 {matrix.shape}")

        self.matrix = matrix
        self.shape = matrix.shape
        self.symmetric = is_symmetric(matrix)
        self.backend = backend or cfg.solver
        self._lu = None
        self._jacobi = None

        if self.backend == 'direct':
            self._factorize_direct()
        elif self.backend == 'iterative':
            self._prepare_iterative()
        else:
            raise ValueError(f"未知求解后端: {self.backend}")

    #region 直接分解

    def _factorize_direct(self):
        matrix = self.matrix
        permc = 'MMD_AT_PLUS_A' if self.symmetric else 'COLAMD'
        try:
            self._lu = spla.splu(matrix, permc_spec=permc)
        except RuntimeError as e:
            # SuperLU 对精确奇异矩阵抛出 "Factor is exactly singular"
            raise SingularMatrixError(f"矩阵奇异: {e}") from e

        # 检查 U 的主元相对于所在行的尺度
        row_scale = np.asarray(abs(matrix).max(axis=1).todense()).ravel()
        permuted_scale = np.empty_like(row_scale)
        permuted_scale[self._lu.perm_r] = row_scale
        pivots = np.abs(self._lu.U.diagonal())
        threshold = PIVOT_TOLERANCE * np.maximum(permuted_scale, np.finfo(float).tiny)
        bad = np.flatnonzero(pivots < threshold)
        if bad.size:
            raise SingularMatrixError(
                f"矩阵数值奇异: {bad.size} 个主元低于相对阈值 {PIVOT_TOLERANCE:g}"
            )

    #endregion

    #region 迭代求解

    def _prepare_iterative(self):
        diagonal = self.matrix.diagonal()
        if np.any(diagonal == 0):
            logger.warning("⚠️  对角线存在零元素，Jacobi 缩放退化为单位阵")
        self._jacobi = _safe_inverse(diagonal)

    def _solve_iterative(self, matrix: sp.spmatrix, rhs: np.ndarray) -> np.ndarray:
        jacobi = self._jacobi
        preconditioner = spla.LinearOperator(
            matrix.shape, matvec=lambda x: jacobi * x, dtype=np.float64
        )
        x, info = spla.bicgstab(
            matrix, rhs, rtol=ITERATIVE_RTOL, atol=0.0,
            maxiter=20 * matrix.shape[0], M=preconditioner,
        )
        if info > 0:
            raise NoConvergenceError(f"BiCGSTAB 在 {info} 次迭代后未收敛")
        if info < 0:
            raise SingularMatrixError("BiCGSTAB 发生 breakdown（矩阵可能奇异）")
        return x

    #endregion

    def _check_rhs(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=np.float64)
        if rhs.ndim != 1 or rhs.shape[0] != self.shape[0]:
            raise DimensionMismatchError(
                f"右端向量长度 {rhs.shape} 与矩阵 {self.shape} 不匹配"
            )
        return rhs

    def solve(self, rhs) -> np.ndarray:
        """求解 A x = b"""
        rhs = self._check_rhs(rhs)
        if not rhs.any():
            return np.zeros_like(rhs)
        if self._lu is not None:
            return self._lu.solve(rhs)
        return self._solve_iterative(self.matrix, rhs)

    def solve_transpose(self, rhs) -> np.ndarray:
        """求解 Aᵀ x = b"""
        rhs = self._check_rhs(rhs)
        if self.symmetric:
            return self.solve(rhs)
        if not rhs.any():
            return np.zeros_like(rhs)
        if self._lu is not None:
            return self._lu.solve(rhs, trans='T')
        return self._solve_iterative(self.matrix.T.tocsc(), rhs)


def factorize(matrix: sp.spmatrix, backend: Optional[str] = None) -> Factorization:
    """分解稀疏方阵；奇异时抛出 SingularMatrixError"""
    return Factorization(matrix, backend=backend)


def solve(factorization: Factorization, rhs) -> np.ndarray:
    return factorization.solve(rhs)


def solve_transpose(factorization: Factorization, rhs) -> np.ndarray:
    return factorization.solve_transpose(rhs)
