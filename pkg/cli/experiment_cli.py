"""
实验命令：optimize / inpaint / baseline
"""
import json
from pathlib import Path

from core.config import cfg
from core.exceptions import MaskforgeError
from core.grid_ops import ModelKind
from core.pipeline import ExperimentConfig, reconstruct_from_mask_file, run_baseline, run_experiment
from core.runner import run_batch
from reports.models import Algorithm

from .ledger_cli import print_baseline, print_formatted_table


def _print_report(report, out_dir: Path):
    print("\n━━ 实验结果 ━━")
    print(f"运行 ID:   {report.run_id}")
    print(f"模型/算法: {report.model} / {report.algorithm}")
    if report.lam is not None:
        print(f"λ:         {report.lam:.6g}")
    print(f"二值密度:  {report.binary_density:.4%}（{report.mask_count} 像素）")
    print(f"MSE:       {report.mse_before_gvo:.3f}")
    if report.mse_after_gvo is not None:
        print(f"MSE(GVO):  {report.mse_after_gvo:.3f}")
    print(f"产物目录:  {out_dir / report.run_id}")


def _config_for(args, input_path: str) -> ExperimentConfig:
    return ExperimentConfig(
        input_path=Path(input_path),
        model=ModelKind(args.model),
        algorithm=Algorithm(args.algo) if args.algo else None,
        lam=args.lam,
        target_density=args.density,
        eps=args.eps if args.eps is not None else cfg.tv_eps,
        eps_t=args.eps_t,
        gvo=not args.no_gvo,
        seed=args.seed,
        max_iters=args.max_iters,
        inner_iters=args.inner_iters,
        output_dir=Path(args.out),
    )


def optimize_command(args):
    """maskforge optimize（多个 --input 时并行批量运行）"""
    configs = [_config_for(args, path) for path in args.input]
    if len(configs) == 1:
        config = configs[0]
        print(f"🚀 优化掩码: {config.input_path} ({config.model.value}, {config.algorithm.value})")
        report = run_experiment(config)
        _print_report(report, config.output_dir)
        return

    print(f"🚀 批量优化 {len(configs)} 张图像 ({configs[0].model.value}, {configs[0].algorithm.value})")
    results = run_batch(configs, workers=args.workers)
    table = [
        [
            r.config.input_path.name,
            r.report.run_id if r.ok else '-',
            f"{r.report.binary_density:.2%}" if r.ok else '-',
            f"{r.report.mse:.3f}" if r.ok else '-',
            '✅' if r.ok else f"❌ {r.error}",
        ]
        for r in results
    ]
    print()
    print_formatted_table(table, ['图像', '运行 ID', '密度', 'MSE', '状态'])

    failed = [r for r in results if not r.ok]
    if failed:
        raise MaskforgeError(f"{len(failed)}/{len(results)} 个任务失败")


def inpaint_command(args):
    """maskforge inpaint"""
    out_dir = Path(args.out)
    report = reconstruct_from_mask_file(
        args.input, args.mask, ModelKind(args.model), output_dir=out_dir,
        use_gvo=not args.no_gvo, eps=args.eps,
    )
    _print_report(report, out_dir)


def baseline_command(args):
    """maskforge baseline"""
    models = [ModelKind(m) for m in args.models]
    print(f"🎲 随机掩码基线: 密度 {args.density:.2%}, 种子 {args.seed}")
    entries, averages = run_baseline(args.input, models=models, density=args.density,
                                     seeds=args.seed, eps=args.eps)
    print_baseline(averages, entries)

    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / 'baseline.json'
        with open(path, 'w', encoding='utf-8') as f:
            json.dump({'entries': [e.to_dict() for e in entries], 'averages': averages},
                      f, ensure_ascii=False, indent=2)
        print(f"\n📝 已写入 {path}")
