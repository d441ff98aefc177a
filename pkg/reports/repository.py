"""
实验产物的存取层（Repository Pattern）
每次运行一个 JSON 报告，外加一个追加写的 CSV 账本
"""
import csv
import json
import logging
import threading
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from .models import LEDGER_FIELDS, ExperimentReport

logger = logging.getLogger(__name__)

LEDGER_NAME = 'ledger.csv'
REPORT_NAME = 'report.json'
TRACE_NAME = 'energy_trace.csv'

# 同一进程内所有仓库实例共享的账本锁
_ledger_lock = threading.Lock()


class ReportRepository:
    """实验报告存取"""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)

    @property
    def ledger_path(self) -> Path:
        return self.root / LEDGER_NAME

    def run_dir(self, run_id: str) -> Path:
        path = self.root / run_id
        path.mkdir(parents=True, exist_ok=True)
        return path

    def save_report(self, report: ExperimentReport, run_dir: Optional[Path] = None) -> Path:
        """写出 report.json"""
        run_dir = run_dir or self.run_dir(report.run_id)
        path = run_dir / REPORT_NAME
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(report.to_dict(), f, ensure_ascii=False, indent=2)
        logger.info(f"📝 报告已写入: {path}")
        return path

    def save_energy_trace(self, trace: Sequence[float], run_dir: Path) -> Path:
        """能量轨迹单独写成 CSV"""
        path = run_dir / TRACE_NAME
        with open(path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f)
            writer.writerow(['iteration', 'energy'])
            for i, value in enumerate(trace):
                writer.writerow([i, repr(float(value))])
        return path

    def append_ledger(self, report: ExperimentReport) -> Path:
        """追加一行账本（加锁串行化）"""
        with _ledger_lock:
            self.root.mkdir(parents=True, exist_ok=True)
            is_new = not self.ledger_path.exists()
            with open(self.ledger_path, 'a', newline='', encoding='utf-8') as f:
                writer = csv.DictWriter(f, fieldnames=LEDGER_FIELDS)
                if is_new:
                    writer.writeheader()
                writer.writerow(report.ledger_row())
        return self.ledger_path

    def list_runs(self, limit: Optional[int] = None) -> List[Dict[str, Any]]:
        """读取账本（最新在前）"""
        if not self.ledger_path.exists():
            return []
        with open(self.ledger_path, newline='', encoding='utf-8') as f:
            rows = list(csv.DictReader(f))
        rows.reverse()
        return rows[:limit] if limit else rows

    def load_report(self, run_id: str) -> Optional[Dict[str, Any]]:
        """按 run_id 读取 report.json"""
        path = self.root / run_id / REPORT_NAME
        if not path.exists():
            return None
        with open(path, encoding='utf-8') as f:
            return json.load(f)
