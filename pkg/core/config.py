"""
全局配置
读取顺序：项目根目录 .env -> ~/.maskforge/.env -> 进程环境变量
"""
import logging
import os
from multiprocessing import cpu_count
from pathlib import Path
from typing import Literal, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator

PROJECT_ROOT = Path(__file__).parent.parent
USER_ENV_PATH = Path.home() / '.maskforge' / '.env'

logger = logging.getLogger(__name__)


class Settings(BaseModel):
    """运行时配置（环境变量覆盖默认值）"""
    output_dir: Path = Field(default=Path('output'), description="实验产物输出目录")
    log_level: str = Field(default='INFO', description="日志级别")
    solver: Literal['direct', 'iterative'] = Field(default='direct', description="稀疏线性求解后端")
    workers: int = Field(default=1, ge=1, description="批量实验并行数")
    tv_eps: float = Field(default=0.01, gt=0, description="平滑 TV 的 ε")
    show_progress: bool = Field(default=True, description="是否显示 tqdm 进度条")
    env_file: Optional[Path] = None

    @field_validator('log_level')
    @classmethod
    def _upper_level(cls, value: str) -> str:
        value = value.upper()
        if value not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            raise ValueError(f"未知日志级别: {value}")
        return value

    def print_summary(self):
        """打印当前配置"""
        print("━━ 当前配置 ━━")
        print(f"配置文件: {self.env_file or '未找到（使用默认值）'}")
        print(f"输出目录: {self.output_dir}")
        print(f"日志级别: {self.log_level}")
        print(f"线性求解: {self.solver}")
        print(f"并行数:   {self.workers}")
        print(f"TV ε:     {self.tv_eps}")
        print(f"进度条:   {'✅' if self.show_progress else '❌'}")


def _parse_workers(raw: Optional[str]) -> int:
    """解析 MASKFORGE_WORKERS（整数或 auto）"""
    if raw and raw.lower() != 'auto':
        try:
            return max(1, int(raw))
        except ValueError:
            logger.warning(f"⚠️  MASKFORGE_WORKERS 无法解析: {raw!r}，使用默认值")
    return max(1, cpu_count() // 2)


def load_settings() -> Settings:
    """从 .env 与环境变量构造 Settings"""
    env_file = None
    for candidate in (PROJECT_ROOT / '.env', USER_ENV_PATH):
        if candidate.exists():
            load_dotenv(candidate, override=False)
            env_file = env_file or candidate

    return Settings(
        output_dir=Path(os.getenv('MASKFORGE_OUTPUT_DIR', 'output')),
        log_level=os.getenv('MASKFORGE_LOG_LEVEL', 'INFO'),
        solver=os.getenv('MASKFORGE_SOLVER', 'direct'),
        workers=_parse_workers(os.getenv('MASKFORGE_WORKERS')),
        tv_eps=float(os.getenv('MASKFORGE_TV_EPS', '0.01')),
        show_progress=os.getenv('MASKFORGE_PROGRESS', '1') not in ('0', 'false', 'False'),
        env_file=env_file,
    )


cfg = load_settings()
