"""
实验记录模型定义（使用 dataclass）
"""
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional


class Algorithm(str, Enum):
    """掩码优化算法"""
    IPIANO = 'ipiano'
    SPPD = 'sppd'


class RunStatus(str, Enum):
    """运行状态"""
    COMPLETED = 'completed'
    FAILED = 'failed'


class Phase(str, Enum):
    """流水线阶段（错误信息与计时共用）"""
    LOAD = 'load'
    CALIBRATE = 'calibrate'
    OPTIMIZE = 'optimize'
    BINARIZE = 'binarize'
    GVO = 'gvo'
    RECONSTRUCT = 'reconstruct'
    WRITE = 'write'


@dataclass
class ExperimentReport:
    """一次实验的结果（MSE 为 [0,255] 尺度）"""
    # 必填字段
    run_id: str
    input_path: str
    model: str
    algorithm: str

    # 掩码与误差
    lam: Optional[float] = None
    target_density: Optional[float] = None
    continuous_density: Optional[float] = None
    binary_density: Optional[float] = None
    mask_count: int = 0
    negative_survivors: int = 0
    mse_before_gvo: Optional[float] = None
    mse_after_gvo: Optional[float] = None
    gvo_enabled: bool = True
    final_energy: Optional[float] = None
    energy_trace: List[float] = field(default_factory=list)
    calibration_probes: List[Dict[str, float]] = field(default_factory=list)
    seed: Optional[int] = None
    status: RunStatus = RunStatus.COMPLETED
    error_message: Optional[str] = None

    # 计时（秒），不参与确定性比较
    timings: Dict[str, float] = field(default_factory=dict)
    created_at: Optional[datetime] = None

    @property
    def mse(self) -> Optional[float]:
        """最终 MSE（启用 GVO 时为 GVO 之后）"""
        return self.mse_after_gvo if self.mse_after_gvo is not None else self.mse_before_gvo

    def to_dict(self, include_timings: bool = True) -> Dict[str, Any]:
        """转换为字典"""
        data = {
            'run_id': self.run_id,
            'input_path': self.input_path,
            'model': self.model,
            'algorithm': self.algorithm,
            'lam': self.lam,
            'target_density': self.target_density,
            'continuous_density': self.continuous_density,
            'binary_density': self.binary_density,
            'mask_count': self.mask_count,
            'negative_survivors': self.negative_survivors,
            'mse_before_gvo': self.mse_before_gvo,
            'mse_after_gvo': self.mse_after_gvo,
            'gvo_enabled': self.gvo_enabled,
            'final_energy': self.final_energy,
            'energy_trace': self.energy_trace,
            'calibration_probes': self.calibration_probes,
            'seed': self.seed,
            'status': self.status.value if isinstance(self.status, RunStatus) else self.status,
            'error_message': self.error_message,
        }
        if include_timings:
            data['timings'] = self.timings
            data['created_at'] = self.created_at.isoformat() if self.created_at else None
        return data

    def ledger_row(self) -> Dict[str, Any]:
        """账本 CSV 的一行"""
        return {
            'run_id': self.run_id,
            'created_at': self.created_at.isoformat() if self.created_at else '',
            'input_path': self.input_path,
            'model': self.model,
            'algorithm': self.algorithm,
            'lam': self.lam,
            'binary_density': self.binary_density,
            'mse_before_gvo': self.mse_before_gvo,
            'mse_after_gvo': self.mse_after_gvo,
            'final_energy': self.final_energy,
            'status': self.status.value if isinstance(self.status, RunStatus) else self.status,
            'total_seconds': round(sum(self.timings.values()), 3),
        }


LEDGER_FIELDS = [
    'run_id', 'created_at', 'input_path', 'model', 'algorithm', 'lam',
    'binary_density', 'mse_before_gvo', 'mse_after_gvo', 'final_energy',
    'status', 'total_seconds',
]


@dataclass
class BaselineEntry:
    """随机掩码基线的一条结果"""
    model: str
    seed: int
    density: float
    mse: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            'model': self.model,
            'seed': self.seed,
            'density': self.density,
            'mse': self.mse,
        }
