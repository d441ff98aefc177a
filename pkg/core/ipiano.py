"""
iPiano：惯性近端梯度法求解只依赖 c 的约化问题 min_c F(c) + G(c)

线性模型的 ∇F 解析给出（一次正向求解 + 一次转置求解），
平滑 TV 模型的 ∇F 通过隐式微分（对 Hessian D_u 的一次对称求解）得到。
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, Field
from tqdm import tqdm

from .config import cfg
from .exceptions import LineSearchStallError, SingularMatrixError
from .grid_ops import ModelKind, operators_for
from .lower_level import C_MAX, fidelity_weights, factorize_linear, inpaint_tv, tv_hessian
from .sparse_linalg import factorize
from .sppd import project_box, shrink

logger = logging.getLogger(__name__)

# l_n 的护栏（越界说明实现有误）
L_FLOOR_FACTOR = 1e-6
L_CEILING = 1e12

Objective = Callable[[np.ndarray], Tuple[float, np.ndarray]]
Prox = Callable[[np.ndarray, float], np.ndarray]


class IpianoParams(BaseModel):
    """iPiano 参数"""
    lam: float = Field(..., ge=0, description="稀疏权重 λ")
    beta: float = Field(0.75, ge=0, lt=1, description="惯性系数 β")
    l_init: float = Field(1.0, gt=0, description="初始 Lipschitz 估计 l₋₁")
    eta: float = Field(1.2, gt=1, description="回溯放大因子 η")
    relax: float = Field(1.02, ge=1, description="线搜索成功后 l_n 的缩小因子")
    max_iters: int = Field(700, ge=1)
    tol: float = Field(1e-6, ge=0, description="‖c^{n+1}-c^n‖∞ 停止阈值")
    max_backtracks: int = Field(60, ge=1)
    eps: float = Field(default_factory=lambda: cfg.tv_eps, gt=0, description="TV 平滑参数")
    lower_tol: float = Field(1e-9, gt=0, description="TV 下层牛顿求解精度")

    @classmethod
    def defaults_for(cls, kind: ModelKind, lam: float, **overrides) -> 'IpianoParams':
        """双调和模型需要更长的迭代预算"""
        values = dict(lam=lam)
        if ModelKind(kind) is ModelKind.BIHARMONIC:
            values['max_iters'] = 3500
        values.update(overrides)
        return cls(**values)

    def step_size(self, l_n: float) -> float:
        """α_n = 1.99(1-β)/l_n"""
        return 1.99 * (1.0 - self.beta) / l_n


@dataclass
class IpianoStep:
    """一次被接受的迭代"""
    iteration: int
    F: float
    energy: float
    l_n: float
    alpha: float
    backtracks: int
    ls_lhs: float
    ls_rhs: float
    step_norm: float


@dataclass
class IpianoResult:
    """iPiano 输出"""
    c: np.ndarray
    F: float
    energy: float
    trace: List[IpianoStep] = field(default_factory=list)
    converged: bool = False

    @property
    def energies(self) -> List[float]:
        return [step.energy for step in self.trace]


#region 约化目标

def reduced_objective_linear(c: np.ndarray, g: np.ndarray, kind: ModelKind) -> Tuple[float, np.ndarray]:
    """
    F(c) = ½‖A⁻¹Cg - g‖² 及其梯度

    ∇F = diag(-u + Gu + g) A⁻ᵀ(u - g)

    c ≡ 0 取 c = t·1 (t→0) 的极限：u 为常数 mean(g)，梯度记为 0
    """
    kind = ModelKind(kind)
    c = np.asarray(c, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if not np.any(c):
        residual = g.ravel() - float(np.mean(g))
        return 0.5 * float(residual @ residual), np.zeros(g.shape)
    ops = operators_for(g)
    G = ops.regularizer_matrix(kind)
    g_flat = g.ravel()

    factorization = factorize_linear(c, kind, ops)
    u = factorization.solve(c.ravel() * g_flat)
    residual = u - g_flat
    adjoint = factorization.solve_transpose(residual)
    grad = (-u + G @ u + g_flat) * adjoint
    return 0.5 * float(residual @ residual), grad.reshape(g.shape)


def reduced_objective_tv(c: np.ndarray, g: np.ndarray, eps: Optional[float] = None,
                         tol: float = 1e-9, u0: Optional[np.ndarray] = None,
                         return_solution: bool = False):
    """
    TV 模型的 F(c) = ½‖u*(c) - g‖² 及隐式微分梯度

    ∇F = -D_c D_u⁻¹ (u* - g)，D_u 为 TV Hessian + B(c)，D_c = diag((u*-g)/(1-c)²)
    """
    eps = cfg.tv_eps if eps is None else eps
    c = np.asarray(c, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    ops = operators_for(g)

    u = inpaint_tv(c, g, eps=eps, tol=tol, u0=u0).ravel()
    residual = u - g.ravel()
    D_u = tv_hessian(u, eps, ops) + sp.diags(fidelity_weights(c.ravel()))
    adjoint = factorize(D_u).solve(residual)
    D_c = residual / (1.0 - c.ravel()) ** 2
    grad = -(D_c * adjoint)

    F = 0.5 * float(residual @ residual)
    if return_solution:
        return F, grad.reshape(g.shape), u.reshape(g.shape)
    return F, grad.reshape(g.shape)

#endregion


#region 通用 iPiano

def ipiano_minimize(objective: Objective, prox: Prox, c0: np.ndarray, params: IpianoParams,
                    penalty: Optional[Callable[[np.ndarray], float]] = None,
                    show_progress: bool = False, desc: str = 'iPiano') -> IpianoResult:
    """
    通用 iPiano 迭代

    Args:
        objective: c -> (F, ∇F)；在定义域外（系统奇异）可抛出 SingularMatrixError，视为 F=+∞
        prox: (x, α) -> (I + α∂G)^{-1}(x)
        c0: 初值，c⁻¹ = c⁰
        penalty: G(c)，用于记录总能量
    """
    penalty = penalty or (lambda c: 0.0)
    c = np.asarray(c0, dtype=np.float64).copy()
    c_prev = c.copy()
    l_prev = params.l_init
    l_floor = params.l_init * L_FLOOR_FACTOR
    trace: List[IpianoStep] = []
    converged = False

    def safe_objective(x: np.ndarray) -> Tuple[float, Optional[np.ndarray]]:
        try:
            return objective(x)
        except SingularMatrixError:
            return np.inf, None

    F_n, grad_n = objective(c)
    progress = tqdm(range(params.max_iters), desc=desc, disable=not show_progress)
    for n in progress:
        # 线搜索：β=0 的试探点
        l_n = l_prev
        for backtracks in range(params.max_backtracks + 1):
            alpha = params.step_size(l_n)
            trial = prox(c - alpha * grad_n, alpha)
            step = trial - c
            F_trial, _ = safe_objective(trial)
            rhs = F_n + float(np.sum(grad_n * step)) + 0.5 * l_n * float(np.sum(step * step))
            if F_trial <= rhs:
                break
            l_n *= params.eta
            if l_n > L_CEILING:
                raise LineSearchStallError(f"l_n 超过上限 {L_CEILING:g}（第 {n} 次迭代）")
        else:
            raise LineSearchStallError(
                f"线搜索在 {params.max_backtracks} 次回溯后仍未满足（第 {n} 次迭代）"
            )

        # 惯性步
        c_next = prox(c - alpha * grad_n + params.beta * (c - c_prev), alpha)
        step_norm = float(np.max(np.abs(c_next - c))) if c.size else 0.0

        trace.append(IpianoStep(
            iteration=n, F=F_n, energy=F_n + penalty(c), l_n=l_n, alpha=alpha,
            backtracks=backtracks, ls_lhs=float(F_trial), ls_rhs=float(rhs), step_norm=step_norm,
        ))
        progress.set_postfix(energy=f"{trace[-1].energy:.4f}", l=f"{l_n:.3g}")

        c_prev, c = c, c_next
        l_prev = max(l_n / params.relax, l_floor)

        F_n, grad_n = safe_objective(c)
        if grad_n is None:
            # 惯性点落在定义域外：退回到试探点
            logger.warning(f"⚠️  惯性点系统奇异，第 {n} 次迭代退回 β=0 试探点")
            c = trial
            F_n, grad_n = objective(c)

        if step_norm <= params.tol:
            converged = True
            break
    progress.close()

    return IpianoResult(c=c, F=F_n, energy=F_n + penalty(c), trace=trace, converged=converged)

#endregion


def ipiano_run(g: np.ndarray, params: IpianoParams, kind: ModelKind,
               show_progress: Optional[bool] = None) -> IpianoResult:
    """
    在约化问题上运行 iPiano

    c⁰ = 1（TV 模式取 c_max）；线性模型的 G 为 λ‖c‖₁（软阈值），
    TV 模式的 G 含 δ_C（平移后投影到 [0, c_max]）
    """
    kind = ModelKind(kind)
    g = np.asarray(g, dtype=np.float64)
    lam = params.lam
    show_progress = cfg.show_progress if show_progress is None else show_progress

    if kind.is_linear:
        c0 = np.ones(g.shape)

        def objective(c):
            return reduced_objective_linear(c, g, kind)

        def prox(x, alpha):
            return shrink(x, alpha * lam)
    else:
        c0 = np.full(g.shape, C_MAX)
        warm = {'u': None}

        def objective(c):
            F, grad, u = reduced_objective_tv(c, g, eps=params.eps, tol=params.lower_tol,
                                              u0=warm['u'], return_solution=True)
            warm['u'] = u
            return F, grad

        def prox(x, alpha):
            return project_box(x - alpha * lam)

    logger.info(f"🔧 iPiano 启动: model={kind.value}, λ={lam:g}, β={params.beta}, 预算 {params.max_iters}")
    result = ipiano_minimize(
        objective, prox, c0, params,
        penalty=lambda c: lam * float(np.sum(np.abs(c))),
        show_progress=show_progress, desc=f"iPiano[{kind.value}]",
    )
    logger.info(f"✅ iPiano 结束: {len(result.trace)} 次迭代, 最终能量 {result.energy:.6f}")
    return result
