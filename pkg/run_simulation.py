import logging
import os
from typing import Any, Dict, Optional, Sequence

import pandas as pd

from main import load_config
from src.exceptions import ConfigError
from src.experiments import ExperimentReport, MonteCarloExperiment

logger = logging.getLogger(__name__)

SEED_ENV = 'RTMDID_SEED'


def resolve_seed(cli_seed: Optional[int], config: Dict[str, Any]) -> int:
    """
    随机种子的优先级: 命令行 > 环境变量RTMDID_SEED > 配置文件 > 默认值42

    参数:
        cli_seed: 命令行给定的种子
        config: 全局配置字典

    返回:
        种子
    """
    if cli_seed is not None:
        return int(cli_seed)
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got '{env}'") from None
    return int((config.get('simulation', {}) or {}).get('seed', 42))


def run_simulation(config: Dict[str, Any], experiment_name: str, n_reps: Optional[int] = None,
                   seed: Optional[int] = None, n_jobs: Optional[int] = None, out_path: Optional[str] = None,
                   methods: Optional[Sequence[str]] = None) -> ExperimentReport:
    """
    运行一个命名的蒙特卡洛实验并保存报告

    参数:
        config: 全局配置字典
        experiment_name: table1-mu, table1-rho, power, table2 或 bias
        n_reps: 覆盖重复次数
        seed: 命令行种子 (最高优先级)
        n_jobs: 并行任务数
        out_path: 报告CSV路径, 默认 results/<实验名>.csv
        methods: 覆盖方法列表

    返回:
        ExperimentReport
    """
    print(f"\n{'='*60}")
    print(f"开始蒙特卡洛实验: {experiment_name}")
    print(f"{'='*60}")

    experiment = MonteCarloExperiment(config)
    seed = resolve_seed(seed, config)
    report = experiment.run(experiment_name, n_reps=n_reps, seed=seed, n_jobs=n_jobs, methods=methods)
    path = experiment.save_report(report, out_path)

    frame = report.to_frame()
    axis = experiment.definition(experiment_name)['axis']
    columns = list(dict.fromkeys([axis, 'rho', 'method', 'rejection_rate', 'mc_se', 'mean_theta']))
    print(f"\n实验结果摘要 (种子 {seed}, 每个情景 {frame['n_reps'].iloc[0]} 次重复):")
    with pd.option_context('display.max_rows', None, 'display.width', 120):
        print(frame[columns].to_string(index=False))
    print(f"\n报告已保存到: {path}")
    return report


if __name__ == '__main__':
    import argparse

    parser = argparse.ArgumentParser(description='rtmdid 蒙特卡洛实验')
    parser.add_argument('experiment', choices=MonteCarloExperiment.names(), help='实验名称')
    parser.add_argument('--config', type=str, default='config/config.yaml', help='配置文件路径')
    parser.add_argument('--reps', type=int, help='每个情景的重复次数')
    parser.add_argument('--seed', type=int, help='随机种子')
    parser.add_argument('--jobs', type=int, help='并行任务数')
    parser.add_argument('--out', type=str, help='报告CSV路径')
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    run_simulation(load_config(args.config), args.experiment, n_reps=args.reps, seed=args.seed,
                   n_jobs=args.jobs, out_path=args.out)
