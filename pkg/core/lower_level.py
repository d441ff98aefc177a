"""
下层问题：给定掩码 c 与图像 g，用所选正则模型重建 u

线性模型使用半正定算子 G（调和 G=-Δ，双调和 G=Δ²），系统矩阵 A = C + (I-C)G，
求解 A u = C g。平滑 TV 模型用带 Armijo 回溯的牛顿法求解一阶最优性条件 T(u,c)=0，
无热启动时对 ε 做延拓。
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .config import cfg
from .exceptions import DimensionMismatchError, NoConvergenceError, SingularMatrixError
from .grid_ops import GridOperators, ModelKind, operators_for
from .sparse_linalg import Factorization, factorize

logger = logging.getLogger(__name__)

# TV 模式下掩码上界
C_MAX = 1.0 - 1e-6

ARMIJO_C1 = 1e-4
BACKTRACK_FACTOR = 0.5
MIN_STEP = 1e-12

# ε 延拓：无热启动时从较大的 ε 逐级减半到目标值
TV_CONTINUATION_START = 0.1
TV_CONTINUATION_FACTOR = 0.5
TV_STAGE_TOL = 1e-6


@dataclass
class MaskField:
    """连续掩码 c（二维，与图像同形状）"""
    c: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64)

    def density(self, eps_t: float = 0.01) -> float:
        """|c| 超过阈值的像素比例"""
        return float(np.mean(np.abs(self.c) > eps_t))

    def clamped(self) -> 'MaskField':
        """投影到 TV 可行集 [0, c_max]"""
        return MaskField(np.clip(self.c, 0.0, C_MAX))


def _as_mask_array(c: Union[MaskField, np.ndarray]) -> np.ndarray:
    if isinstance(c, MaskField):
        return c.c
    return np.asarray(c, dtype=np.float64)


def _check_shapes(c: np.ndarray, g: np.ndarray):
    if c.shape != g.shape:
        raise DimensionMismatchError(f"掩码形状 {c.shape} 与图像形状 {g.shape} 不一致")
    if g.ndim != 2:
        raise DimensionMismatchError(f"图像必须为二维数组，实际维度 {g.ndim}")


def fidelity_weights(c: np.ndarray) -> np.ndarray:
    """B(c) 的对角元 c/(1-c)；c >= 1 处为 +inf"""
    c = np.asarray(c, dtype=np.float64)
    weights = np.full(c.shape, np.inf)
    finite = c < 1.0
    weights[finite] = c[finite] / (1.0 - c[finite])
    return weights


#region 线性模型（调和 / 双调和）

def linear_system(c: np.ndarray, kind: ModelKind, ops: GridOperators) -> sp.csr_matrix:
    """A = diag(c) + (I - diag(c)) G"""
    c_flat = np.asarray(c, dtype=np.float64).ravel()
    G = ops.regularizer_matrix(kind)
    return (sp.diags(c_flat) + sp.diags(1.0 - c_flat) @ G).tocsr()


def factorize_linear(c: np.ndarray, kind: ModelKind, ops: Optional[GridOperators] = None) -> Factorization:
    """分解 A(c)；c 全零时直接报奇异"""
    c = np.asarray(c, dtype=np.float64)
    if not np.any(c):
        raise SingularMatrixError("掩码 c 全为 0，系统矩阵奇异")
    ops = ops or operators_for(c)
    return factorize(linear_system(c, kind, ops))


def inpaint_linear(c: Union[MaskField, np.ndarray], g: np.ndarray, kind: ModelKind) -> np.ndarray:
    """求解 A u = C g，返回与 g 同形状的重建"""
    kind = ModelKind(kind)
    if not kind.is_linear:
        raise ValueError("inpaint_linear 只支持 harmonic / biharmonic")
    c = _as_mask_array(c)
    g = np.asarray(g, dtype=np.float64)
    _check_shapes(c, g)
    factorization = factorize_linear(c, kind, operators_for(g))
    u = factorization.solve(c.ravel() * g.ravel())
    return u.reshape(g.shape)

#endregion


#region 能量与残差

def tv_density(u: np.ndarray, eps: float, ops: GridOperators) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """返回 (∇x u, ∇y u, ρ)，ρ = sqrt(ux² + uy² + ε²)"""
    u_flat = np.asarray(u, dtype=np.float64).ravel()
    ux = ops.grad_x @ u_flat
    uy = ops.grad_y @ u_flat
    rho = np.sqrt(ux ** 2 + uy ** 2 + eps ** 2)
    return ux, uy, rho


def _fidelity(u: np.ndarray, c: np.ndarray, g: np.ndarray) -> float:
    diff = (u - g).ravel()
    weights = fidelity_weights(c).ravel()
    terms = np.zeros_like(diff)
    active = diff != 0
    terms[active] = weights[active] * diff[active] ** 2
    return 0.5 * float(np.sum(terms))


def lower_energy(u: np.ndarray, c: np.ndarray, g: np.ndarray, kind: ModelKind,
                 eps: Optional[float] = None) -> float:
    """下层目标 R(u) + ½‖B(c)^{1/2}(u-g)‖²"""
    kind = ModelKind(kind)
    u = np.asarray(u, dtype=np.float64)
    c = _as_mask_array(c)
    g = np.asarray(g, dtype=np.float64)
    _check_shapes(c, g)
    ops = operators_for(g)
    u_flat = u.ravel()

    if kind is ModelKind.HARMONIC:
        regularizer = 0.5 * float(np.sum((ops.grad @ u_flat) ** 2))
    elif kind is ModelKind.BIHARMONIC:
        regularizer = 0.5 * float(np.sum((ops.laplacian @ u_flat) ** 2))
    else:
        eps = cfg.tv_eps if eps is None else eps
        _, _, rho = tv_density(u, eps, ops)
        regularizer = float(np.sum(rho))
    return regularizer + _fidelity(u, c, g)


def tv_gradient(u: np.ndarray, eps: float, ops: GridOperators) -> np.ndarray:
    """‖∇u‖_ε 对 u 的梯度 ∇ᵀ(∇u/ρ)，展平向量"""
    ux, uy, rho = tv_density(u, eps, ops)
    return ops.grad_x.T @ (ux / rho) + ops.grad_y.T @ (uy / rho)


def tv_residual(u: np.ndarray, c: np.ndarray, g: np.ndarray, eps: float) -> np.ndarray:
    """TV 下层的一阶最优性残差 T(u,c) = ∇ᵀ(∇u/ρ) + B(c)(u-g)，展平向量"""
    u = np.asarray(u, dtype=np.float64)
    c = _as_mask_array(c)
    g = np.asarray(g, dtype=np.float64)
    _check_shapes(c, g)
    ops = operators_for(g)
    weights = fidelity_weights(c).ravel()
    return tv_gradient(u, eps, ops) + weights * (u - g).ravel()


def tv_hessian(u: np.ndarray, eps: float, ops: GridOperators) -> sp.csr_matrix:
    """
    平滑 TV 的 Hessian（对称半正定）

    ∇xᵀ diag((uy²+ε²)/ρ³) ∇x + ∇yᵀ diag((ux²+ε²)/ρ³) ∇y
    - ∇xᵀ diag(ux·uy/ρ³) ∇y - ∇yᵀ diag(ux·uy/ρ³) ∇x
    """
    ux, uy, rho = tv_density(u, eps, ops)
    rho3 = rho ** 3
    dxx = (uy ** 2 + eps ** 2) / rho3
    dyy = (ux ** 2 + eps ** 2) / rho3
    dxy = ux * uy / rho3
    middle = sp.bmat([
        [sp.diags(dxx), sp.diags(-dxy)],
        [sp.diags(-dxy), sp.diags(dyy)],
    ], format='csr')
    hessian = (ops.grad.T @ middle @ ops.grad).tocsr()
    # 消除浮点误差导致的非对称
    return ((hessian + hessian.T) * 0.5).tocsr()

#endregion


#region 平滑 TV 牛顿求解

def continuation_schedule(eps: float) -> List[float]:
    """ε 延拓序列：从 TV_CONTINUATION_START 起逐级减半，最后一级为目标 ε"""
    stages = []
    stage = TV_CONTINUATION_START
    while stage > eps:
        stages.append(stage)
        stage *= TV_CONTINUATION_FACTOR
    stages.append(eps)
    return stages


def _tv_newton(u: np.ndarray, weights: np.ndarray, g_flat: np.ndarray, eps: float,
               ops: GridOperators, tol: float, max_newton: int) -> Tuple[np.ndarray, bool, float]:
    """
    单个 ε 下的阻尼牛顿迭代，返回 (u, 是否收敛, ‖T‖∞)

    ½‖T‖² 或下层能量满足 Armijo 下降条件之一即接受步长
    """
    fidelity_active = weights > 0

    def residual(v: np.ndarray) -> np.ndarray:
        return tv_gradient(v, eps, ops) + weights * (v - g_flat)

    def energy(v: np.ndarray) -> float:
        _, _, rho = tv_density(v, eps, ops)
        diff = (v - g_flat)[fidelity_active]
        return float(np.sum(rho)) + 0.5 * float(np.sum(weights[fidelity_active] * diff * diff))

    T = residual(u)
    merit = 0.5 * float(T @ T)
    current = energy(u)
    for iteration in range(max_newton + 1):
        norm = float(np.max(np.abs(T)))
        if norm <= tol:
            logger.debug(f"TV 牛顿收敛: ε={eps:g}, {iteration} 次迭代, ‖T‖∞={norm:.3e}")
            return u, True, norm
        if iteration == max_newton:
            break

        hessian = (tv_hessian(u, eps, ops) + sp.diags(weights)).tocsc()
        direction = factorize(hessian).solve(-T)
        slope = min(float(T @ direction), 0.0)

        # 牛顿方向上 ½‖T‖² 的方向导数为 -‖T‖²
        step = 1.0
        while True:
            candidate = u + step * direction
            T_new = residual(candidate)
            merit_new = 0.5 * float(T_new @ T_new)
            energy_new = energy(candidate)
            if merit_new <= (1.0 - 2.0 * ARMIJO_C1 * step) * merit:
                break
            if energy_new <= current + ARMIJO_C1 * step * slope:
                break
            step *= BACKTRACK_FACTOR
            if step < MIN_STEP:
                logger.debug(f"TV 牛顿回溯耗尽: ε={eps:g}, 第 {iteration} 次迭代, ‖T‖∞={norm:.3e}")
                return u, False, norm
        u, T, merit, current = candidate, T_new, merit_new, energy_new

    return u, False, float(np.max(np.abs(T)))


def inpaint_tv(c: Union[MaskField, np.ndarray], g: np.ndarray, eps: Optional[float] = None,
               tol: float = 1e-9, max_newton: int = 200,
               u0: Optional[np.ndarray] = None) -> np.ndarray:
    """
    牛顿法求解平滑 TV 下层问题

    无热启动时从调和插值出发，对 ε 做延拓（0.1, 0.05, … 直到目标 ε），
    中间各级只粗略求解。给定 u0 时直接在目标 ε 上迭代，失败后退回延拓。

    Args:
        c: 掩码，要求 c ∈ [0, c_max] 且至少一个分量为正
        g: 数据项目标（二维数组）
        eps: TV 平滑参数，默认取配置值
        tol: ‖T‖∞ 收敛阈值
        max_newton: 每一级的最大牛顿迭代数
        u0: 热启动初值

    Raises:
        NoConvergenceError: 目标 ε 上迭代预算或回溯步长耗尽
    """
    eps = cfg.tv_eps if eps is None else eps
    if eps <= 0:
        raise ValueError("TV 平滑参数 ε 必须为正")
    c = _as_mask_array(c)
    g = np.asarray(g, dtype=np.float64)
    _check_shapes(c, g)
    if c.min() < 0.0 or c.max() > C_MAX:
        raise ValueError(f"TV 模式要求 c ∈ [0, {C_MAX}]")
    if not np.any(c > 0):
        raise SingularMatrixError("掩码 c 全为 0，TV 下层问题无唯一解")

    ops = operators_for(g)
    weights = fidelity_weights(c).ravel()
    g_flat = g.ravel()

    if u0 is not None:
        start = np.asarray(u0, dtype=np.float64).ravel().copy()
        u, converged, norm = _tv_newton(start, weights, g_flat, eps, ops, tol, max_newton)
        if converged:
            return u.reshape(g.shape)
        logger.debug(f"TV 热启动未收敛（‖T‖∞={norm:.3e}），改用 ε 延拓")

    u = inpaint_linear(c, g, ModelKind.HARMONIC).ravel()
    stages = continuation_schedule(eps)
    for stage in stages[:-1]:
        u, _, _ = _tv_newton(u, weights, g_flat, stage, ops, max(tol, TV_STAGE_TOL), max_newton)
    u, converged, norm = _tv_newton(u, weights, g_flat, eps, ops, tol, max_newton)
    if not converged:
        raise NoConvergenceError(
            f"TV 牛顿在 ε 延拓 {len(stages)} 级后未收敛（‖T‖∞={norm:.3e}, tol={tol:g}）"
        )
    return u.reshape(g.shape)

#endregion


def solve_lower_level(c: np.ndarray, g: np.ndarray, kind: ModelKind,
                      eps: Optional[float] = None, tol: float = 1e-9,
                      u0: Optional[np.ndarray] = None) -> np.ndarray:
    """按模型类型分发下层求解"""
    kind = ModelKind(kind)
    if kind.is_linear:
        return inpaint_linear(c, g, kind)
    return inpaint_tv(c, g, eps=eps, tol=tol, u0=u0)


def reconstruct(indicator: np.ndarray, data: np.ndarray, kind: ModelKind,
                eps: Optional[float] = None, tol: float = 1e-9,
                u0: Optional[np.ndarray] = None) -> np.ndarray:
    """
    由二值掩码与存储的灰度值重建图像

    data 为与图像同形状的数组，仅掩码位置的值有意义（即 Sᵀx）。
    TV 模式下掩码位置的权重取 c_max。
    """
    indicator = np.asarray(indicator, dtype=bool)
    data = np.where(indicator, np.asarray(data, dtype=np.float64), 0.0)
    kind = ModelKind(kind)
    if kind.is_linear:
        return inpaint_linear(indicator.astype(np.float64), data, kind)
    return inpaint_tv(indicator * C_MAX, data, eps=eps, tol=tol, u0=u0)
