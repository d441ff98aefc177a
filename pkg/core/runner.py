"""
批量实验：线程池并行执行互不相关的实验

每个实验内部串行；账本追加由 ReportRepository 的锁串行化
"""
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import List, Optional, Sequence

from tqdm import tqdm

from reports.models import ExperimentReport
from reports.repository import ReportRepository

from .config import cfg
from .exceptions import MaskforgeError
from .pipeline import ExperimentConfig, run_experiment

logger = logging.getLogger(__name__)


@dataclass
class BatchResult:
    """一个批量任务的结果（report 与 error 二者有其一）"""
    config: ExperimentConfig
    report: Optional[ExperimentReport] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.report is not None


def _run_one(config: ExperimentConfig) -> ExperimentReport:
    return run_experiment(config, ReportRepository(config.output_dir))


def run_batch(configs: Sequence[ExperimentConfig], workers: Optional[int] = None) -> List[BatchResult]:
    """
    并行运行多组实验，结果按输入顺序返回

    Args:
        configs: 实验配置列表
        workers: 线程数（None 时取 MASKFORGE_WORKERS）
    """
    workers = workers or cfg.workers
    results: List[Optional[BatchResult]] = [None] * len(configs)
    logger.info(f"🔧 批量实验: {len(configs)} 个任务, {workers} 个线程")

    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(_run_one, config): i for i, config in enumerate(configs)}
        with tqdm(total=len(configs), desc="🧪 批量实验", unit="个", ncols=80,
                  disable=not cfg.show_progress) as pbar:
            for future in as_completed(futures):
                idx = futures[future]
                try:
                    results[idx] = BatchResult(config=configs[idx], report=future.result())
                except MaskforgeError as e:
                    logger.error(f"⚠️  任务失败 {configs[idx].input_path}: {e}")
                    results[idx] = BatchResult(config=configs[idx], error=str(e))
                pbar.update(1)

    failed = sum(1 for r in results if not r.ok)
    if failed:
        logger.warning(f"⚠️  {failed}/{len(configs)} 个任务失败")
    return results
