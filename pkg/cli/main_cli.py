#!/usr/bin/env python3
"""
maskforge 统一命令行入口
稀疏修复掩码优化、按掩码重建、随机掩码基线与实验账本
"""
import argparse
import logging
import sys
from pathlib import Path

# 添加项目根目录到路径
PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

MODELS = ['harmonic', 'biharmonic', 'tv']


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='maskforge',
        description='maskforge - 基于扩散修复的稀疏掩码优化',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
🎭 maskforge - 功能概览
━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

🧮 掩码优化：
  maskforge optimize --input trui.pgm --model harmonic --density 0.05 --out runs
  maskforge optimize --input trui.pgm --model tv --algo sppd --lambda 0.003 --out runs
  maskforge optimize --input a.pgm b.pgm c.pgm --lambda 0.003 --workers 3 --out runs

🖌️  按掩码重建：
  maskforge inpaint --input trui.pgm --mask runs/xxx/mask.pgm --model biharmonic --out runs

🎲 随机掩码基线：
  maskforge baseline --input trui.pgm --density 0.10 --seed 0 1 2

🔧 其他：
  maskforge list                              # 实验账本
  maskforge config                            # 当前配置
  maskforge selftest                          # 系统自检

💡 详细帮助：maskforge <command> --help
"""
    )
    parser.add_argument('--version', action='version', version='maskforge 0.1.0')

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--debug', action='store_true', help='输出调试日志与完整堆栈')

    subparsers = parser.add_subparsers(dest='command', help='可用命令')

    # ============================================================
    # 掩码优化
    # ============================================================
    optimize_parser = subparsers.add_parser('optimize', parents=[common], help='优化修复掩码')
    optimize_parser.add_argument('--input', required=True, nargs='+', help='输入 PGM 图像（多张时并行批量运行）')
    optimize_parser.add_argument('--model', choices=MODELS, default='harmonic', help='修复模型')
    optimize_parser.add_argument('--algo', choices=['ipiano', 'sppd'],
                                 help='优化算法（默认：线性模型 ipiano，TV 为 sppd）')
    target = optimize_parser.add_mutually_exclusive_group(required=True)
    target.add_argument('--lambda', dest='lam', type=float, help='固定稀疏权重 λ')
    target.add_argument('--density', type=float, help='目标二值密度（自动标定 λ）')
    optimize_parser.add_argument('--eps', type=float, help='平滑 TV 的 ε')
    optimize_parser.add_argument('--eps-t', dest='eps_t', type=float, default=0.01, help='二值化阈值 ε_T')
    optimize_parser.add_argument('--no-gvo', action='store_true', help='跳过灰度值优化')
    optimize_parser.add_argument('--seed', type=int, help='随机种子（记录在报告中）')
    optimize_parser.add_argument('--max-iters', dest='max_iters', type=int,
                                 help='iPiano 迭代数 / SPPD 外层迭代数')
    optimize_parser.add_argument('--inner-iters', dest='inner_iters', type=int, help='SPPD 内层迭代数')
    optimize_parser.add_argument('--out', required=True, help='输出目录')
    optimize_parser.add_argument('--workers', type=int, help='批量运行的线程数（默认 MASKFORGE_WORKERS）')

    # ============================================================
    # 按给定掩码重建
    # ============================================================
    inpaint_parser = subparsers.add_parser('inpaint', parents=[common], help='用给定二值掩码重建')
    inpaint_parser.add_argument('--input', required=True, help='输入 PGM 图像')
    inpaint_parser.add_argument('--mask', required=True, help='掩码 PGM（黑色为选中像素）')
    inpaint_parser.add_argument('--model', choices=MODELS, default='harmonic', help='修复模型')
    inpaint_parser.add_argument('--eps', type=float, help='平滑 TV 的 ε')
    inpaint_parser.add_argument('--no-gvo', action='store_true', help='跳过灰度值优化')
    inpaint_parser.add_argument('--out', required=True, help='输出目录')

    # ============================================================
    # 随机掩码基线
    # ============================================================
    baseline_parser = subparsers.add_parser('baseline', parents=[common], help='随机掩码基线对比')
    baseline_parser.add_argument('--input', required=True, help='输入 PGM 图像')
    baseline_parser.add_argument('--density', type=float, default=0.10, help='随机掩码密度')
    baseline_parser.add_argument('--seed', type=int, nargs='+', default=[0, 1, 2], help='随机种子')
    baseline_parser.add_argument('--models', nargs='+', choices=MODELS, default=MODELS, help='参与对比的模型')
    baseline_parser.add_argument('--eps', type=float, help='平滑 TV 的 ε')
    baseline_parser.add_argument('--out', help='结果 JSON 输出目录')

    # ============================================================
    # 账本与维护
    # ============================================================
    list_parser = subparsers.add_parser('list', parents=[common], help='列出实验账本')
    list_parser.add_argument('--out', help='输出目录（默认 MASKFORGE_OUTPUT_DIR）')
    list_parser.add_argument('--limit', type=int, default=20, help='最多显示条数')

    subparsers.add_parser('config', parents=[common], help='显示当前配置')

    selftest_parser = subparsers.add_parser('selftest', parents=[common], help='系统自检')
    selftest_parser.add_argument('--full', action='store_true', help='额外运行小规模优化')

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return 0

    from core.config import cfg
    logging.basicConfig(
        level=logging.DEBUG if args.debug else cfg.log_level,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )

    try:
        if args.command == 'optimize':
            from cli.experiment_cli import optimize_command
            optimize_command(args)

        elif args.command == 'inpaint':
            from cli.experiment_cli import inpaint_command
            inpaint_command(args)

        elif args.command == 'baseline':
            from cli.experiment_cli import baseline_command
            baseline_command(args)

        elif args.command == 'list':
            from cli.ledger_cli import list_command
            list_command(args)

        elif args.command == 'config':
            cfg.print_summary()

        elif args.command == 'selftest':
            from scripts.selftest import main as selftest_main
            return selftest_main(full=args.full)

    except KeyboardInterrupt:
        print("\n\n⚠️  操作已取消")
        return 130
    except Exception as e:
        print(f"\n❌ 错误: {e}", file=sys.stderr)
        if args.debug:
            import traceback
            traceback.print_exc()
        return 1

    return 0


if __name__ == '__main__':
    sys.exit(main())
