"""
账本查看：以表格列出历史实验
"""
from tabulate import tabulate

from core.config import cfg
from reports.repository import ReportRepository


def print_formatted_table(table_data: list, headers: list):
    """打印去除网格横线的表格"""
    text = tabulate(table_data, headers=headers, tablefmt='grid')
    lines = ['' if line.startswith('+') else line for line in text.split('\n')]
    print('\n'.join(lines))


def _fmt(value, pattern: str = '{:.3f}') -> str:
    if value in (None, ''):
        return '-'
    try:
        return pattern.format(float(value))
    except ValueError:
        return str(value)


def list_command(args):
    """maskforge list"""
    repository = ReportRepository(args.out or cfg.output_dir)
    rows = repository.list_runs(limit=args.limit)
    if not rows:
        print(f"📭 账本为空: {repository.ledger_path}")
        return

    table = [
        [
            row['run_id'],
            row['model'],
            row['algorithm'],
            _fmt(row['lam'], '{:.4g}'),
            _fmt(row['binary_density'], '{:.2%}'),
            _fmt(row['mse_before_gvo']),
            _fmt(row['mse_after_gvo']),
            '✅' if row['status'] == 'completed' else '❌',
        ]
        for row in rows
    ]
    print(f"\n📒 实验账本: {repository.ledger_path}（{len(rows)} 条）\n")
    print_formatted_table(table, ['运行 ID', '模型', '算法', 'λ', '密度', 'MSE', 'MSE(GVO)', '状态'])


def print_baseline(averages: dict, entries: list):
    """打印随机掩码基线结果"""
    table = [[e.model, e.seed, f"{e.density:.2%}", f"{e.mse:.3f}"] for e in entries]
    print_formatted_table(table, ['模型', '种子', '密度', 'MSE'])
    print("\n📊 平均 MSE:")
    print_formatted_table([[model, f"{value:.3f}"] for model, value in averages.items()],
                          ['模型', '平均 MSE'])
