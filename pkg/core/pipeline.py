"""
端到端实验流水线

读取 PGM → （标定 λ 或固定 λ）→ 掩码优化 → 二值化 → GVO → 重建 → 报告与产物
"""
import hashlib
import logging
import math
import time
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from reports.models import Algorithm, BaselineEntry, ExperimentReport, Phase, RunStatus
from reports.repository import ReportRepository

from .config import cfg
from .exceptions import DimensionMismatchError, NonMonotoneDensityWarning, PipelineError
from .grid_ops import Image, ModelKind
from .gvo import BinaryMask, binarize, gray_value_optimization
from .image_io import image_to_mask, load_pgm, mask_to_image, save_pgm
from .ipiano import IpianoParams, ipiano_run
from .lower_level import reconstruct
from .sppd import SppdParams, initial_mask, sppd_run, upper_energy

logger = logging.getLogger(__name__)

DEFAULT_EPS_T = 0.01
DEFAULT_TOL_DENSITY = 0.0025
DEFAULT_MAX_PROBES = 12
LAMBDA_START = 1e-3
LAMBDA_FACTOR = 10.0
# 二值密度与连续密度之差超过该值时告警
DENSITY_GAP_WARN = 0.005

ImageLike = Union[Image, np.ndarray]


def default_algorithm(kind: ModelKind) -> Algorithm:
    """线性模型默认 iPiano，平滑 TV 默认 SPPD"""
    return Algorithm.IPIANO if ModelKind(kind).is_linear else Algorithm.SPPD


class ExperimentConfig(BaseModel):
    """一次实验的配置（λ 与目标密度二选一）"""
    input_path: Path
    model: ModelKind = ModelKind.HARMONIC
    algorithm: Optional[Algorithm] = None
    lam: Optional[float] = Field(None, ge=0, description="固定 λ")
    target_density: Optional[float] = Field(None, gt=0, le=1, description="目标二值密度")
    eps: float = Field(default_factory=lambda: cfg.tv_eps, gt=0, description="TV 平滑参数 ε")
    eps_t: float = Field(DEFAULT_EPS_T, ge=0, description="二值化阈值 ε_T")
    gvo: bool = True
    seed: Optional[int] = None
    max_iters: Optional[int] = Field(None, ge=1, description="iPiano 迭代数 / SPPD 外层迭代数")
    inner_iters: Optional[int] = Field(None, ge=1, description="SPPD 内层迭代数")
    tol_density: float = Field(DEFAULT_TOL_DENSITY, gt=0)
    max_probes: int = Field(DEFAULT_MAX_PROBES, ge=1)
    output_dir: Path = Field(default_factory=lambda: cfg.output_dir)
    run_id: Optional[str] = None

    @model_validator(mode='after')
    def _check_lambda_or_density(self):
        if (self.lam is None) == (self.target_density is None):
            raise ValueError("lam 与 target_density 必须且只能给出一个")
        if self.algorithm is None:
            self.algorithm = default_algorithm(self.model)
        return self

    def resolved_run_id(self) -> str:
        """未指定 run_id 时由配置内容派生（同配置同目录）"""
        if self.run_id:
            return self.run_id
        payload = self.model_dump_json(exclude={'run_id', 'output_dir'})
        digest = hashlib.sha1(payload.encode('utf-8')).hexdigest()[:8]
        return f"{self.input_path.stem}-{self.model.value}-{self.algorithm.value}-{digest}"


@dataclass
class MaskOutcome:
    """一次掩码优化（或一次标定探测）的结果"""
    lam: float
    c: np.ndarray
    energy_trace: List[float] = field(default_factory=list)
    final_energy: Optional[float] = None
    iterations: int = 0
    density: float = 0.0
    probes: List[Dict[str, float]] = field(default_factory=list)


#region 度量与随机掩码

def _as_array(image: ImageLike) -> np.ndarray:
    return image.as_array() if isinstance(image, Image) else np.asarray(image, dtype=np.float64)


def mse(u: ImageLike, g: ImageLike) -> float:
    """[0,255] 尺度下的均方误差：255²·mean((u-g)²)"""
    u, g = _as_array(u), _as_array(g)
    if u.size != g.size:
        raise DimensionMismatchError(f"尺寸不匹配: {u.size} vs {g.size}")
    diff = u.ravel() - g.ravel()
    return float(255.0 ** 2 * np.mean(diff * diff))


def random_mask(shape: Union[int, Tuple[int, ...]], density: float,
                seed: Optional[int] = None) -> BinaryMask:
    """恰好 round(density·N) 个像素，无放回均匀抽样，由 seed 复现"""
    if not 0 < density <= 1:
        raise ValueError(f"密度必须在 (0, 1] 内: {density}")
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    n = int(np.prod(shape))
    count = int(round(density * n))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(n, size=count, replace=False)
    indicator = np.zeros(n, dtype=bool)
    indicator[chosen] = True
    return BinaryMask(indicator.reshape(shape))

#endregion


#region 掩码优化与 λ 标定

def optimize_mask(g: np.ndarray, kind: ModelKind, algorithm: Algorithm, lam: float,
                  eps: Optional[float] = None, eps_t: float = DEFAULT_EPS_T,
                  max_iters: Optional[int] = None, inner_iters: Optional[int] = None,
                  show_progress: Optional[bool] = None) -> MaskOutcome:
    """以固定 λ 运行指定算法；λ = 0 时直接返回 c ≡ 1（TV 取 c_max）"""
    kind, algorithm = ModelKind(kind), Algorithm(algorithm)
    g = np.asarray(g, dtype=np.float64)
    eps = cfg.tv_eps if eps is None else eps

    if lam == 0:
        c = initial_mask(g.shape, kind)
        energy = upper_energy(g, c, g, 0.0)
        return MaskOutcome(lam=0.0, c=c, energy_trace=[energy], final_energy=energy,
                           density=binarize(c, eps_t).density)

    if algorithm is Algorithm.IPIANO:
        overrides = {'eps': eps}
        if max_iters is not None:
            overrides['max_iters'] = max_iters
        result = ipiano_run(g, IpianoParams.defaults_for(kind, lam, **overrides), kind,
                            show_progress=show_progress)
        outcome = MaskOutcome(lam=lam, c=result.c, energy_trace=result.energies + [result.energy],
                              final_energy=result.energy, iterations=len(result.trace))
    else:
        overrides = {'eps': eps}
        if max_iters is not None:
            overrides['outer_iters'] = max_iters
        if inner_iters is not None:
            overrides['inner_iters'] = inner_iters
        result = sppd_run(g, SppdParams.defaults_for(kind, lam, **overrides), kind,
                          show_progress=show_progress)
        outcome = MaskOutcome(lam=lam, c=result.c, energy_trace=list(result.energy_trace),
                              final_energy=result.energy_trace[-1] if result.energy_trace else None,
                              iterations=result.outer_iterations)

    outcome.density = binarize(outcome.c, eps_t).density
    return outcome


def _check_monotone(probes: Sequence[Dict[str, float]], tol: float) -> bool:
    """按 λ 排序后密度应不增（允许 tol 的抖动）"""
    ordered = sorted(probes, key=lambda p: p['lam'])
    return all(b['density'] <= a['density'] + tol for a, b in zip(ordered, ordered[1:]))


def calibrate_lambda(g: np.ndarray, target_density: float, kind: ModelKind,
                     algo: Optional[Algorithm] = None,
                     tol_density: float = DEFAULT_TOL_DENSITY,
                     max_probes: int = DEFAULT_MAX_PROBES,
                     eps: Optional[float] = None, eps_t: float = DEFAULT_EPS_T,
                     max_iters: Optional[int] = None,
                     inner_iters: Optional[int] = None) -> Tuple[float, MaskOutcome]:
    """
    在 log λ 上二分，使二值密度接近目标

    先从 λ=1e-3 起按 10 倍放大/缩小找到包围区间，再取几何中点二分；
    满足 |density - target| ≤ tol_density 或用完 max_probes 次探测即停止，
    返回最接近目标的一次探测。

    Returns:
        (λ, 该 λ 下的 MaskOutcome，probes 字段记录全部探测)
    """
    kind = ModelKind(kind)
    algo = default_algorithm(kind) if algo is None else Algorithm(algo)
    if not 0 < target_density <= 1:
        raise ValueError(f"目标密度必须在 (0, 1] 内: {target_density}")

    if target_density >= 1:
        outcome = optimize_mask(g, kind, algo, 0.0, eps=eps, eps_t=eps_t)
        outcome.probes = [{'lam': 0.0, 'density': outcome.density}]
        return 0.0, outcome

    probes: List[Dict[str, float]] = []
    outcomes: List[MaskOutcome] = []

    def probe(lam: float) -> MaskOutcome:
        outcome = optimize_mask(g, kind, algo, lam, eps=eps, eps_t=eps_t,
                                max_iters=max_iters, inner_iters=inner_iters, show_progress=False)
        probes.append({'lam': lam, 'density': outcome.density})
        outcomes.append(outcome)
        logger.info(f"🔍 标定探测 #{len(probes)}: λ={lam:.4g} → 密度 {outcome.density:.4%}")
        return outcome

    def done(outcome: MaskOutcome) -> bool:
        return abs(outcome.density - target_density) <= tol_density

    # 包围：lo 处密度偏高，hi 处密度偏低
    lam = LAMBDA_START
    current = probe(lam)
    lo = hi = None
    if current.density > target_density:
        lo = lam
    else:
        hi = lam
    while not done(current) and (lo is None or hi is None) and len(probes) < max_probes:
        lam = lam * LAMBDA_FACTOR if hi is None else lam / LAMBDA_FACTOR
        current = probe(lam)
        if current.density > target_density:
            lo = lam
        else:
            hi = lam
    bracketed = lo is not None and hi is not None

    # 二分
    while bracketed and not done(current) and len(probes) < max_probes:
        lam = math.sqrt(lo * hi)
        current = probe(lam)
        if current.density > target_density:
            lo = lam
        else:
            hi = lam

    if not done(current) and not bracketed:
        warnings.warn(f"λ 标定未能包围目标密度 {target_density:.4f}，返回最接近的探测",
                      NonMonotoneDensityWarning, stacklevel=2)
    elif not _check_monotone(probes, tol_density):
        warnings.warn("λ 标定中密度随 λ 非单调变化", NonMonotoneDensityWarning, stacklevel=2)

    best = min(outcomes, key=lambda o: abs(o.density - target_density))
    best.probes = probes
    logger.info(f"✅ 标定完成: λ={best.lam:.4g}, 密度 {best.density:.4%}（{len(probes)} 次探测）")
    return best.lam, best

#endregion


#region 实验执行

def _check_density_gap(continuous: float, binary: float) -> bool:
    """二值化前后密度相差超过 0.5 个百分点时告警，返回是否在范围内"""
    gap = abs(continuous - binary)
    if gap > DENSITY_GAP_WARN:
        logger.warning(f"⚠️  二值密度 {binary:.4%} 与连续密度 {continuous:.4%} 相差 {gap:.4%}")
        return False
    return True


@contextmanager
def _phase(name: Phase, timings: Dict[str, float]) -> Iterator[None]:
    """计时并把异常包装成带阶段标签的 PipelineError"""
    start = time.perf_counter()
    try:
        yield
    except PipelineError:
        raise
    except Exception as e:
        raise PipelineError(name.value, cause=e) from e
    finally:
        timings[name.value] = round(time.perf_counter() - start, 6)


def _continuous_mask_image(c: np.ndarray) -> Image:
    """|c| 归一化到 [0,1]，与二值掩码一致：权重越大越黑"""
    magnitude = np.abs(c)
    peak = float(magnitude.max(initial=0.0))
    scaled = magnitude / peak if peak > 0 else magnitude
    return Image.from_array(1.0 - scaled, clip=True)


def _reconstruct_binary(mask: BinaryMask, g: np.ndarray, kind: ModelKind, eps: float,
                        use_gvo: bool) -> Tuple[np.ndarray, float, Optional[float]]:
    """返回 (重建, GVO 前 MSE, GVO 后 MSE)；全选掩码时直接返回原图"""
    if mask.count == mask.indicator.size:
        return g.copy(), 0.0, (0.0 if use_gvo else None)
    if use_gvo:
        result = gray_value_optimization(mask, g, kind, eps=eps)
        before = reconstruct(mask.indicator, g, kind, eps=eps)
        return result.u, mse(np.clip(before, 0.0, 1.0), g), mse(np.clip(result.u, 0.0, 1.0), g)
    u = reconstruct(mask.indicator, g, kind, eps=eps)
    return u, mse(np.clip(u, 0.0, 1.0), g), None


def _write_artifacts(repository: ReportRepository, report: ExperimentReport,
                     mask: BinaryMask, u: np.ndarray, c: Optional[np.ndarray] = None) -> Path:
    run_dir = repository.run_dir(report.run_id)
    save_pgm(mask_to_image(mask.indicator), run_dir / 'mask.pgm')
    if c is not None:
        save_pgm(_continuous_mask_image(c), run_dir / 'mask_continuous.pgm')
    save_pgm(Image.from_array(u, clip=True), run_dir / 'reconstruction.pgm')
    if report.energy_trace:
        repository.save_energy_trace(report.energy_trace, run_dir)
    repository.save_report(report, run_dir)
    repository.append_ledger(report)
    return run_dir


def _record_failure(repository: ReportRepository, report: ExperimentReport, error: PipelineError):
    report.status = RunStatus.FAILED
    report.error_message = str(error)
    try:
        repository.append_ledger(report)
    except OSError as e:
        logger.warning(f"⚠️  失败记录写入账本失败: {e}")


def run_experiment(config: ExperimentConfig,
                   repository: Optional[ReportRepository] = None) -> ExperimentReport:
    """
    完整流水线，产物写入 output_dir/<run_id>/：
    mask.pgm、mask_continuous.pgm、reconstruction.pgm、energy_trace.csv、report.json，
    并向 output_dir/ledger.csv 追加一行

    Raises:
        PipelineError: 任一阶段失败，消息形如 "[phase] detail"
    """
    repository = repository or ReportRepository(config.output_dir)
    kind = config.model
    timings: Dict[str, float] = {}
    report = ExperimentReport(
        run_id=config.resolved_run_id(),
        input_path=str(config.input_path),
        model=kind.value,
        algorithm=config.algorithm.value,
        lam=config.lam,
        target_density=config.target_density,
        gvo_enabled=config.gvo,
        seed=config.seed,
        timings=timings,
        created_at=datetime.now(),
    )
    logger.info(f"🚀 开始实验 {report.run_id}")

    try:
        with _phase(Phase.LOAD, timings):
            g = load_pgm(config.input_path).as_array()

        if config.target_density is not None:
            with _phase(Phase.CALIBRATE, timings):
                lam, outcome = calibrate_lambda(
                    g, config.target_density, kind, config.algorithm,
                    tol_density=config.tol_density, max_probes=config.max_probes,
                    eps=config.eps, eps_t=config.eps_t,
                    max_iters=config.max_iters, inner_iters=config.inner_iters,
                )
            report.calibration_probes = outcome.probes
        else:
            with _phase(Phase.OPTIMIZE, timings):
                lam = config.lam
                outcome = optimize_mask(g, kind, config.algorithm, lam, eps=config.eps,
                                        eps_t=config.eps_t, max_iters=config.max_iters,
                                        inner_iters=config.inner_iters)

        report.lam = lam
        report.energy_trace = [float(e) for e in outcome.energy_trace]
        report.final_energy = outcome.final_energy
        report.continuous_density = float(np.mean(np.abs(outcome.c) > 0))

        with _phase(Phase.BINARIZE, timings):
            mask = binarize(outcome.c, config.eps_t)
            if mask.count == 0:
                raise PipelineError(Phase.BINARIZE.value,
                                    message=f"ε_T={config.eps_t} 下二值掩码为空，请减小 λ")
        report.binary_density = mask.density
        report.mask_count = mask.count
        report.negative_survivors = int(np.count_nonzero(mask.indicator & (outcome.c < 0)))
        _check_density_gap(report.continuous_density, report.binary_density)

        with _phase(Phase.GVO if config.gvo else Phase.RECONSTRUCT, timings):
            u, report.mse_before_gvo, report.mse_after_gvo = _reconstruct_binary(
                mask, g, kind, config.eps, config.gvo)

        with _phase(Phase.WRITE, timings):
            _write_artifacts(repository, report, mask, u, outcome.c)
    except PipelineError as e:
        logger.error(f"❌ 实验 {report.run_id} 失败: {e}")
        _record_failure(repository, report, e)
        raise

    logger.info(f"✅ 实验完成 {report.run_id}: 密度 {report.binary_density:.4%}, MSE {report.mse:.3f}")
    return report


def reconstruct_from_mask_file(input_path: Union[str, Path], mask_path: Union[str, Path],
                               kind: ModelKind, output_dir: Optional[Union[str, Path]] = None,
                               use_gvo: bool = True, eps: Optional[float] = None,
                               run_id: Optional[str] = None) -> ExperimentReport:
    """用给定的黑白掩码图（黑色为选中）重建，可选 GVO"""
    kind = ModelKind(kind)
    eps = cfg.tv_eps if eps is None else eps
    input_path, mask_path = Path(input_path), Path(mask_path)
    repository = ReportRepository(output_dir or cfg.output_dir)
    timings: Dict[str, float] = {}
    report = ExperimentReport(
        run_id=run_id or f"{input_path.stem}-{kind.value}-mask-{mask_path.stem}",
        input_path=str(input_path),
        model=kind.value,
        algorithm='mask-file',
        gvo_enabled=use_gvo,
        timings=timings,
        created_at=datetime.now(),
    )

    try:
        with _phase(Phase.LOAD, timings):
            g = load_pgm(input_path).as_array()
            mask = BinaryMask(image_to_mask(load_pgm(mask_path)))
            if mask.shape != g.shape:
                raise DimensionMismatchError(f"掩码尺寸 {mask.shape} 与图像 {g.shape} 不一致")
            if mask.count == 0:
                raise PipelineError(Phase.LOAD.value, message="掩码中没有选中像素")
        report.binary_density = mask.density
        report.mask_count = mask.count

        with _phase(Phase.GVO if use_gvo else Phase.RECONSTRUCT, timings):
            u, report.mse_before_gvo, report.mse_after_gvo = _reconstruct_binary(
                mask, g, kind, eps, use_gvo)

        with _phase(Phase.WRITE, timings):
            _write_artifacts(repository, report, mask, u)
    except PipelineError as e:
        logger.error(f"❌ 重建失败: {e}")
        _record_failure(repository, report, e)
        raise

    logger.info(f"✅ 重建完成: 密度 {mask.density:.4%}, MSE {report.mse:.3f}")
    return report

#endregion


#region 随机掩码基线

def run_baseline(image: Union[ImageLike, str, Path],
                 models: Iterable[ModelKind] = tuple(ModelKind),
                 density: float = 0.10, seeds: Sequence[int] = (0, 1, 2),
                 eps: Optional[float] = None) -> Tuple[List[BaselineEntry], Dict[str, float]]:
    """
    随机掩码基线：每个种子抽一个随机掩码，用原图灰度值重建（不做 GVO）

    Returns:
        (逐条结果, 各模型的平均 MSE)
    """
    if isinstance(image, (str, Path)):
        image = load_pgm(image)
    g = _as_array(image)
    eps = cfg.tv_eps if eps is None else eps
    models = [ModelKind(m) for m in models]

    entries: List[BaselineEntry] = []
    for seed in seeds:
        mask = random_mask(g.shape, density, seed)
        for kind in models:
            u = reconstruct(mask.indicator, g, kind, eps=eps)
            entry = BaselineEntry(model=kind.value, seed=int(seed), density=mask.density,
                                  mse=mse(np.clip(u, 0.0, 1.0), g))
            entries.append(entry)
            logger.info(f"🎲 基线 seed={seed} {kind.value}: MSE {entry.mse:.3f}")

    averages = {
        kind.value: float(np.mean([e.mse for e in entries if e.model == kind.value]))
        for kind in models
    }
    return entries, averages

#endregion
