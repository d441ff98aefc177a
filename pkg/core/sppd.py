"""
逐次预条件原始-对偶算法（SPPD）

外层：在 (û, ĉ) 处线性化下层最优性条件 T(u,c)=0；
内层：对角预条件原始-对偶迭代求解线性化后的二次 + ℓ1 问题。
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, Field, model_validator
from tqdm import tqdm

from .config import cfg
from .exceptions import NoConvergenceError, SingularMatrixError
from .grid_ops import ModelKind, operators_for
from .lower_level import C_MAX, fidelity_weights, solve_lower_level, tv_hessian

logger = logging.getLogger(__name__)

# 能量接近 0 时相对变化改用该下限作分母
ENERGY_FLOOR = 1e-12

# 各模型的邻近项权重 (μ1, μ2)
DEFAULT_PROXIMITY = {
    ModelKind.HARMONIC: (0.05, 0.0),
    ModelKind.BIHARMONIC: (0.1, 0.2),
    ModelKind.TV: (0.05, 0.1),
}


class SppdParams(BaseModel):
    """SPPD 参数"""
    lam: float = Field(..., ge=0, description="稀疏权重 λ")
    mu1: float = Field(0.05, ge=0, description="c 的邻近项权重")
    mu2: float = Field(0.0, ge=0, description="u 的邻近项权重")
    gamma: float = Field(1e-6, gt=0, lt=2, description="预条件指数 γ")
    theta: float = Field(1.0, ge=0, le=1, description="对偶外推系数 θ")
    inner_iters: int = Field(2000, ge=1)
    outer_iters: int = Field(150, ge=1)
    inner_tol: Optional[float] = Field(None, gt=0, description="内层原始变量变化阈值（None 表示只按预算）")
    outer_rtol: float = Field(1e-7, ge=0, description="外层能量相对变化阈值")
    outer_patience: int = Field(5, ge=1)
    eps: float = Field(default_factory=lambda: cfg.tv_eps, gt=0, description="TV 平滑参数")
    lower_tol: float = Field(1e-9, gt=0)

    @classmethod
    def defaults_for(cls, kind: ModelKind, lam: float, **overrides) -> 'SppdParams':
        """按模型取默认 μ1/μ2 与迭代预算"""
        kind = ModelKind(kind)
        mu1, mu2 = DEFAULT_PROXIMITY[kind]
        values = dict(lam=lam, mu1=mu1, mu2=mu2)
        if kind is ModelKind.BIHARMONIC:
            values.update(outer_iters=300, inner_iters=4000)
        values.update(overrides)
        return cls(**values)

    @model_validator(mode='after')
    def _check_budget(self):
        if self.outer_patience > self.outer_iters:
            self.outer_patience = self.outer_iters
        return self


@dataclass
class LinearizedSystem:
    """线性化约束 D_u u + D_c c + q = 0"""
    D_u: sp.csr_matrix
    D_c: sp.dia_matrix
    q: np.ndarray

    @property
    def K(self) -> sp.csr_matrix:
        return sp.hstack([self.D_u, self.D_c], format='csr')

    def residual(self, u: np.ndarray, c: np.ndarray) -> np.ndarray:
        return self.D_u @ u + self.D_c @ c + self.q


@dataclass
class SppdResult:
    """SPPD 输出"""
    c: np.ndarray
    u: np.ndarray
    energy_trace: List[float] = field(default_factory=list)
    outer_iterations: int = 0
    converged: bool = False


#region 雅可比矩阵

def jacobians_linear(u_hat: np.ndarray, c_hat: np.ndarray, g: np.ndarray,
                     kind: ModelKind) -> Tuple[sp.csr_matrix, sp.dia_matrix]:
    """
    线性模型约束 T(u,c) = C(u-g) + (I-C)Gu 的雅可比

    D_u = diag(ĉ) + (I - diag(ĉ)) G，D_c = diag(û - g - Gû)
    """
    ops = operators_for(g)
    G = ops.regularizer_matrix(kind)
    u_flat = np.asarray(u_hat, dtype=np.float64).ravel()
    c_flat = np.asarray(c_hat, dtype=np.float64).ravel()
    g_flat = np.asarray(g, dtype=np.float64).ravel()
    D_u = (sp.diags(c_flat) + sp.diags(1.0 - c_flat) @ G).tocsr()
    D_c = sp.diags(u_flat - g_flat - G @ u_flat)
    return D_u, D_c


def jacobians_tv(u_hat: np.ndarray, c_hat: np.ndarray, g: np.ndarray,
                 eps: float) -> Tuple[sp.csr_matrix, sp.dia_matrix]:
    """
    TV 约束 T(u,c) = ∇ᵀ(∇u/ρ) + B(c)(u-g) 的雅可比

    D_u = TV Hessian + B(ĉ)，D_c = diag((û-g)/(1-ĉ)²)
    """
    ops = operators_for(g)
    u_flat = np.asarray(u_hat, dtype=np.float64).ravel()
    c_flat = np.asarray(c_hat, dtype=np.float64).ravel()
    g_flat = np.asarray(g, dtype=np.float64).ravel()
    D_u = (tv_hessian(u_flat, eps, ops) + sp.diags(fidelity_weights(c_flat))).tocsr()
    D_c = sp.diags((u_flat - g_flat) / (1.0 - c_flat) ** 2)
    return D_u, D_c


def linearize(u_hat: np.ndarray, c_hat: np.ndarray, g: np.ndarray, kind: ModelKind,
              eps: Optional[float] = None) -> LinearizedSystem:
    """在可行点 (û, ĉ) 处线性化约束"""
    kind = ModelKind(kind)
    if kind.is_linear:
        D_u, D_c = jacobians_linear(u_hat, c_hat, g, kind)
    else:
        D_u, D_c = jacobians_tv(u_hat, c_hat, g, cfg.tv_eps if eps is None else eps)
    q = -(D_u @ np.ravel(u_hat)) - D_c @ np.ravel(c_hat)
    return LinearizedSystem(D_u=D_u, D_c=D_c, q=q)

#endregion


#region 预条件与邻近算子

def preconditioners(K: sp.spmatrix, gamma: float = 1e-6) -> Tuple[np.ndarray, np.ndarray]:
    """
    对角预条件 (σ, τ)

    τ_j = 1 / Σ_i |K_ij|^{2-γ}，σ_i = 1 / Σ_j |K_ij|^γ；分母为 0 的行/列取 1
    """
    K = sp.csr_matrix(K, dtype=np.float64, copy=True)
    K.eliminate_zeros()
    magnitude = abs(K)
    col_sums = np.asarray(magnitude.power(2.0 - gamma).sum(axis=0)).ravel()
    row_sums = np.asarray(magnitude.power(gamma).sum(axis=1)).ravel()

    tau = np.ones_like(col_sums)
    nonzero = col_sums > 0
    tau[nonzero] = 1.0 / col_sums[nonzero]

    sigma = np.ones_like(row_sums)
    nonzero = row_sums > 0
    sigma[nonzero] = 1.0 / row_sums[nonzero]
    return sigma, tau


def shrink(x, alpha):
    """软阈值 shrink_α(x) = sgn(x)·max(|x|-α, 0)"""
    return np.sign(x) * np.maximum(np.abs(x) - alpha, 0.0)


def project_box(x, upper: float = C_MAX):
    """投影到 [0, upper]"""
    return np.clip(x, 0.0, upper)


def prox_u(u_tilde, tau_u, g, u_hat, mu2):
    """½‖u-g‖² + μ2/2‖u-û‖² 的预条件邻近算子"""
    return (u_tilde + tau_u * g + mu2 * tau_u * u_hat) / (1.0 + tau_u + mu2 * tau_u)


def prox_c_l1(c_tilde, tau_c, c_hat, lam, mu1):
    """λ‖c‖₁ + μ1/2‖c-ĉ‖² 的预条件邻近算子（线性模型，c 不受约束）"""
    denom = 1.0 + tau_c * mu1
    return shrink((c_tilde + tau_c * mu1 * c_hat) / denom, lam * tau_c / denom)


def prox_c_box(c_tilde, tau_c, c_hat, lam, mu1):
    """λΣc + μ1/2‖c-ĉ‖² + δ_C 的预条件邻近算子（TV 模型）"""
    return project_box((c_tilde + tau_c * mu1 * c_hat - tau_c * lam) / (1.0 + tau_c * mu1))

#endregion


#region 内层原始-对偶

def pd_inner(u_hat: np.ndarray, c_hat: np.ndarray, g: np.ndarray, lam: float,
             mu1: float, mu2: float, theta: float, iters: int, kind: ModelKind,
             eps: Optional[float] = None, gamma: float = 1e-6,
             tol: Optional[float] = None,
             system: Optional[LinearizedSystem] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    预条件原始-对偶迭代

    p^{k+1} = p^k + Σ(K x^k + q)
    p̄^{k+1} = p^{k+1} + θ(p^{k+1} - p^k)
    x^{k+1} = (I + Γ∂G)^{-1}(x^k - Γ Kᵀ p̄^{k+1})
    """
    kind = ModelKind(kind)
    shape = np.shape(g)
    u_hat = np.asarray(u_hat, dtype=np.float64).ravel()
    c_hat = np.asarray(c_hat, dtype=np.float64).ravel()
    g_flat = np.asarray(g, dtype=np.float64).ravel()
    n = g_flat.size

    if system is None:
        system = linearize(u_hat.reshape(shape), c_hat.reshape(shape), g, kind, eps=eps)
    D_u, D_c_diag, q = system.D_u, system.D_c.diagonal(), system.q
    D_u_T = D_u.T.tocsr()
    sigma, tau = preconditioners(system.K, gamma)
    tau_u, tau_c = tau[:n], tau[n:]
    prox_c = prox_c_l1 if kind.is_linear else prox_c_box

    u, c = u_hat.copy(), c_hat.copy()
    p = np.zeros(n)
    for k in range(iters):
        p_new = p + sigma * (D_u @ u + D_c_diag * c + q)
        p_bar = p_new + theta * (p_new - p)
        p = p_new

        u_next = prox_u(u - tau_u * (D_u_T @ p_bar), tau_u, g_flat, u_hat, mu2)
        c_next = prox_c(c - tau_c * (D_c_diag * p_bar), tau_c, c_hat, lam, mu1)

        if tol is not None:
            change = max(np.max(np.abs(u_next - u)), np.max(np.abs(c_next - c)))
            u, c = u_next, c_next
            if change <= tol:
                logger.debug(f"内层 PD 提前停止: {k + 1} 次迭代")
                break
        else:
            u, c = u_next, c_next

    return u.reshape(shape), c.reshape(shape)

#endregion


def upper_energy(u: np.ndarray, c: np.ndarray, g: np.ndarray, lam: float) -> float:
    """上层能量 ½‖u-g‖² + λ‖c‖₁"""
    diff = np.ravel(u) - np.ravel(g)
    return 0.5 * float(diff @ diff) + lam * float(np.sum(np.abs(c)))


def initial_mask(shape, kind: ModelKind) -> np.ndarray:
    """初始掩码：线性模型取 1，TV 取 c_max"""
    return np.full(shape, 1.0 if ModelKind(kind).is_linear else C_MAX)


def sppd_run(g: np.ndarray, params: SppdParams, kind: ModelKind,
             c0: Optional[np.ndarray] = None, show_progress: Optional[bool] = None) -> SppdResult:
    """
    SPPD 主循环

    每次外层迭代：(i) 在 ĉ 处精确求解下层恢复可行性；(ii) 构造雅可比与 K；
    (iii) 运行内层 PD；(iv) 以结果更新 ĉ。能量记录在可行点上。
    """
    kind = ModelKind(kind)
    g = np.asarray(g, dtype=np.float64)
    c_hat = initial_mask(g.shape, kind) if c0 is None else np.asarray(c0, dtype=np.float64).copy()
    show_progress = cfg.show_progress if show_progress is None else show_progress

    trace: List[float] = []
    stable_steps = 0
    converged = False
    stalled = False
    u_hat = None
    c_prev = None
    outer = 0

    logger.info(f"🔧 SPPD 启动: model={kind.value}, λ={params.lam:g}, "
                f"μ1={params.mu1}, μ2={params.mu2}, 外层 {params.outer_iters} × 内层 {params.inner_iters}")

    progress = tqdm(range(params.outer_iters), desc=f"SPPD[{kind.value}]", disable=not show_progress)
    for outer in progress:
        if not np.any(c_hat):
            # c ≡ 0 是 λ→∞ 的极限：不保留任何像素，重建退化为常数均值
            logger.warning("⚠️  掩码塌缩为 0，SPPD 提前结束")
            u_hat = np.full(g.shape, float(np.mean(g)))
            trace.append(upper_energy(u_hat, c_hat, g, params.lam))
            converged = True
            break

        # 可行性恢复；失败时退回上一个可行的 ĉ
        try:
            u_hat = solve_lower_level(c_hat, g, kind, eps=params.eps, tol=params.lower_tol, u0=u_hat)
        except (SingularMatrixError, NoConvergenceError) as e:
            if c_prev is None:
                raise
            logger.warning(f"⚠️  第 {outer + 1} 次外层迭代下层求解失败（{e}），退回上一个 ĉ")
            c_hat = c_prev
            stalled = True
            break
        energy = upper_energy(u_hat, c_hat, g, params.lam)
        trace.append(energy)
        progress.set_postfix(energy=f"{energy:.4f}")

        if len(trace) > 1:
            previous = trace[-2]
            relative = abs(previous - energy) / max(abs(previous), ENERGY_FLOOR)
            stable_steps = stable_steps + 1 if relative < params.outer_rtol else 0
            if stable_steps >= params.outer_patience:
                converged = True
                break

        c_prev = c_hat
        system = linearize(u_hat, c_hat, g, kind, eps=params.eps)
        _, c_hat = pd_inner(
            u_hat, c_hat, g, params.lam, params.mu1, params.mu2, params.theta,
            params.inner_iters, kind, eps=params.eps, gamma=params.gamma,
            tol=params.inner_tol, system=system,
        )
    progress.close()

    if not converged and not stalled:
        u_hat = solve_lower_level(c_hat, g, kind, eps=params.eps, tol=params.lower_tol, u0=u_hat)
        trace.append(upper_energy(u_hat, c_hat, g, params.lam))

    logger.info(f"✅ SPPD 结束: {outer + 1} 次外层迭代, 最终能量 {trace[-1]:.6f}")
    return SppdResult(c=c_hat, u=u_hat, energy_trace=trace,
                      outer_iterations=outer + 1, converged=converged)
