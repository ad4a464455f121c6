import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Optional

import yaml

from src.exceptions import ConfigError, PanelSchemaError, RtmDidError

SUBCOMMANDS = ('simulate', 'analyze', 'sensitivity', 'validate')
DEFAULT_CONFIG = 'config/config.yaml'

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FAILURE = 2
EXIT_USAGE = 64

logger = logging.getLogger('rtmdid')


def load_config(config_path: str) -> Dict[str, Any]:
    # 默认配置文件不存在时使用内置默认值
    if config_path == DEFAULT_CONFIG and not os.path.exists(config_path):
        return {}
    try:
        with open(config_path, 'r', encoding='utf-8') as file:
            config = yaml.safe_load(file) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config '{config_path}': {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config '{config_path}' is not valid YAML: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError(f"config '{config_path}' must be a mapping")
    return config


def build_parser() -> argparse.ArgumentParser:
    from src.experiments import MonteCarloExperiment

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--log-level', type=str, choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        help='日志级别, 覆盖配置文件中的logging.level')
    common.add_argument('--jobs', type=int, help='并行任务数')

    parser = argparse.ArgumentParser(prog='rtmdid', description='rtmdid - 匹配DID的回归均值偏差校正')
    subparsers = parser.add_subparsers(dest='command')

    simulate = subparsers.add_parser('simulate', parents=[common], help='运行命名的蒙特卡洛实验')
    simulate.add_argument('experiment', choices=MonteCarloExperiment.names(), help='实验名称')
    simulate.add_argument('--config', type=str, default=DEFAULT_CONFIG, help='全局配置文件路径')
    simulate.add_argument('--reps', type=int, help='每个情景的重复次数')
    simulate.add_argument('--seed', type=int, help='随机种子, 覆盖RTMDID_SEED与配置文件')
    simulate.add_argument('--methods', type=str, help='逗号分隔的方法列表, 例如 unmatched,sc,sc_adj')
    simulate.add_argument('--out', type=str, help='报告CSV路径')

    for name, help_text in (('analyze', '观测数据分析, 写出完整报告目录'),
                            ('sensitivity', '只运行Delta敏感性分析')):
        sub = subparsers.add_parser(name, parents=[common], help=help_text)
        sub.add_argument('--data', type=str, required=True, help='面板CSV路径')
        sub.add_argument('--config', type=str, required=True, help='分析配置路径')
        sub.add_argument('--out', type=str, help='输出路径')
        sub.add_argument('--wide', action='store_true', help='输入为宽表 (每个时点一列)')

    validate = subparsers.add_parser('validate', parents=[common], help='校验面板CSV')
    validate.add_argument('data', type=str, help='面板CSV路径')
    validate.add_argument('--config', type=str, help='可选的分析配置, 给定时同时检查处理单元与处理时点')
    validate.add_argument('--wide', action='store_true', help='输入为宽表 (每个时点一列)')
    return parser


def configure_logging(level: Optional[str], config: Dict[str, Any]) -> None:
    level = level or (config.get('logging', {}) or {}).get('level', 'INFO')
    logging.basicConfig(level=getattr(logging, str(level).upper(), logging.INFO),
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')


def dispatch(args: argparse.Namespace) -> int:
    if args.command == 'simulate':
        from run_simulation import run_simulation
        config = load_config(args.config)
        configure_logging(args.log_level, config)
        methods = [m.strip() for m in args.methods.split(',') if m.strip()] if args.methods else None
        run_simulation(config, args.experiment, n_reps=args.reps, seed=args.seed, n_jobs=args.jobs,
                       out_path=args.out, methods=methods)
    elif args.command == 'analyze':
        from run_analysis import run_analysis
        configure_logging(args.log_level, load_config(args.config))
        run_analysis(args.data, args.config, out_dir=args.out or 'results/analysis', wide=args.wide,
                     n_jobs=args.jobs)
    elif args.command == 'sensitivity':
        from run_analysis import run_sensitivity
        configure_logging(args.log_level, load_config(args.config))
        run_sensitivity(args.data, args.config, out_path=args.out or 'results/sensitivity.csv', wide=args.wide,
                        n_jobs=args.jobs)
    else:
        from src.utils.panel_io import validate_csv
        configure_logging(args.log_level, load_config(args.config) if args.config else {})
        table = validate_csv(args.data, args.config, wide=args.wide)
        n_units, n_times = table.shape
        print(f"{args.data}: OK ({n_units} units x {n_times} times, covariates: {sorted(table.covariates) or 'none'})")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """
    命令行入口

    参数:
        argv: 命令行参数, 默认取sys.argv[1:]

    返回:
        退出码: 0成功, 1配置或数据校验错误, 2运行失败, 64用法错误
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv or argv[0] in ('-h', '--help'):
        parser.print_help(sys.stderr if not argv else sys.stdout)
        return EXIT_USAGE if not argv else EXIT_OK
    if argv[0] not in SUBCOMMANDS:
        print(f"rtmdid: unknown subcommand '{argv[0]}'", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE

    try:
        return dispatch(args)
    except PanelSchemaError as exc:
        print(f"数据校验失败: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConfigError as exc:
        print(f"配置错误: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except RtmDidError as exc:
        logger.error("run failed: %s", exc)
        print(f"运行失败: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as exc:
        logger.exception("unexpected failure")
        print(f"运行失败: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == '__main__':
    sys.exit(main())
