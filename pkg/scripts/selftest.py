#!/usr/bin/env python3
"""
全功能自检脚本
检查依赖、核心模块与数值正确性
"""

import shutil
import sys
import tempfile
from pathlib import Path

# 添加项目根目录到路径
PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))


def print_header(title: str):
    """打印标题"""
    print(f"\n{'─' * 40}")
    print(f"  {title}")
    print(f"{'─' * 40}")


def check_dependencies():
    """1. 依赖库检查"""
    print_header("🔧 1. 依赖库检查")

    errors = []
    required = [
        ('numpy', '数组计算'),
        ('scipy', '稀疏矩阵 / L-BFGS'),
        ('pydantic', '参数校验'),
        ('dotenv', '环境变量'),
        ('tqdm', '进度条'),
        ('tabulate', '表格输出'),
    ]
    for dep, desc in required:
        try:
            __import__(dep)
            print(f"   ✅ {dep} ({desc})")
        except ImportError:
            print(f"   ❌ {dep} ({desc}) 未安装")
            errors.append(dep)
    return errors


def check_module_imports():
    """2. 核心模块导入测试"""
    print_header("📦 2. 核心模块导入测试")

    modules = [
        ('core.grid_ops', ['get_operators', 'build_biharmonic']),
        ('core.sparse_linalg', ['factorize', 'Factorization']),
        ('core.lower_level', ['inpaint_linear', 'inpaint_tv']),
        ('core.sppd', ['sppd_run']),
        ('core.ipiano', ['ipiano_run']),
        ('core.gvo', ['binarize', 'gray_value_optimization']),
        ('core.pipeline', ['run_experiment', 'calibrate_lambda']),
        ('reports.repository', ['ReportRepository']),
    ]
    errors = []
    for mod_name, items in modules:
        try:
            mod = __import__(mod_name, fromlist=items)
            for item in items:
                getattr(mod, item)
            print(f"   ✅ {mod_name}")
        except Exception as e:
            print(f"   ❌ {mod_name}: {e}")
            errors.append(mod_name)
    return errors


def check_numerics():
    """3. 数值冒烟测试"""
    print_header("🧮 3. 数值冒烟测试")

    import numpy as np

    from core.grid_ops import ModelKind, get_operators
    from core.lower_level import inpaint_linear

    errors = []
    ops = get_operators(6, 5)
    identity_gap = abs(ops.laplacian + ops.grad.T @ ops.grad).max()
    if identity_gap < 1e-14:
        print("   ✅ Δ = -∇ᵀ∇")
    else:
        print(f"   ❌ Δ 与 -∇ᵀ∇ 相差 {identity_gap:.2e}")
        errors.append('operators')

    rng = np.random.default_rng(0)
    g = rng.random((5, 6))
    u = inpaint_linear(np.ones((5, 6)), g, ModelKind.BIHARMONIC)
    if np.allclose(u, g, atol=1e-12):
        print("   ✅ 全掩码重建等于原图")
    else:
        print("   ❌ 全掩码重建不等于原图")
        errors.append('inpainting')
    return errors


def check_pipeline():
    """4. 小规模端到端实验"""
    print_header("🚀 4. 小规模端到端实验")

    import numpy as np

    from core.grid_ops import Image
    from core.image_io import save_pgm
    from core.pipeline import ExperimentConfig, run_experiment

    errors = []
    tmp = Path(tempfile.mkdtemp(prefix='maskforge-selftest-'))
    try:
        y, x = np.mgrid[0:16, 0:16] / 15.0
        save_pgm(Image.from_array(0.5 + 0.4 * np.sin(3 * x) * np.cos(2 * y)), tmp / 'input.pgm')
        config = ExperimentConfig(input_path=tmp / 'input.pgm', lam=0.002,
                                  max_iters=40, output_dir=tmp / 'out')
        report = run_experiment(config)
        print(f"   ✅ 密度 {report.binary_density:.2%}, MSE {report.mse:.3f}")
    except Exception as e:
        print(f"   ❌ 端到端实验失败: {e}")
        errors.append('pipeline')
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    return errors


def check_disk_space():
    """5. 输出目录检查"""
    print_header("💾 5. 输出目录检查")

    from core.config import cfg

    total, used, free = shutil.disk_usage('.')
    free_gb = free / (1024 ** 3)
    if free_gb < 1:
        print(f"   ⚠️  磁盘空间不足: {free_gb:.1f} GB 可用")
    else:
        print(f"   ✅ 磁盘空间充足: {free_gb:.1f} GB 可用")

    if cfg.output_dir.exists():
        total_size = sum(f.stat().st_size for f in cfg.output_dir.rglob('*') if f.is_file())
        print(f"   📁 {cfg.output_dir}/ 目录: {total_size / (1024**2):.1f} MB")
    return []


def main(full: bool = False) -> int:
    """主函数，返回退出码"""
    print("━" * 50)
    print("🔬 maskforge 自检")
    print("━" * 50)

    all_errors = check_dependencies()
    if all_errors:
        print("\n❌ 缺少依赖，请先运行: pip install -e .")
        return 1

    all_errors.extend(check_module_imports())
    all_errors.extend(check_numerics())
    if full:
        all_errors.extend(check_pipeline())
    all_errors.extend(check_disk_space())

    print("\n" + "━" * 50)
    if all_errors:
        print(f"⚠️  发现 {len(all_errors)} 个问题:")
        for err in all_errors:
            print(f"   • {err}")
        print("━" * 50)
        return 1

    print("✅ 所有检查通过！")
    if not full:
        print("💡 运行 maskforge selftest --full 可额外执行端到端实验")
    print("━" * 50)
    return 0


if __name__ == '__main__':
    sys.exit(main(full='--full' in sys.argv))
