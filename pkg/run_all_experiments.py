import copy
import logging
import os

import pandas as pd

from main import load_config
from run_simulation import run_simulation
from src.experiments import MonteCarloExperiment


def main(config_path: str = 'config/config.yaml', results_dir: str = 'results'):
    # 1. 加载基础配置
    base_config = load_config(config_path)

    # 2. 依次运行全部命名实验, 每个实验写出各自的CSV
    summaries = []
    for name in MonteCarloExperiment.names():
        print(f"\n{'*'*80}")
        print(f"正在运行实验: {name}")
        print(f"{'*'*80}")

        current_config = copy.deepcopy(base_config)
        out_path = os.path.join(results_dir, f"{name}.csv")
        try:
            report = run_simulation(current_config, name, out_path=out_path)
            frame = report.to_frame()
            summaries.append({
                '实验': name,
                '情景数': len(frame) // max(1, frame['method'].nunique()),
                '方法': ', '.join(frame['method'].unique()),
                '报告': out_path,
            })
        except Exception as e:
            print(f"实验失败 ({name}): {e}")
            summaries.append({'实验': name, '情景数': 'Error', '方法': 'Error', '报告': 'Error'})

    # 3. 汇总
    summary_df = pd.DataFrame(summaries)
    print("\n" + "="*80)
    print("全部实验结果")
    print("="*80)
    print(summary_df.to_string())
    return summary_df


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    main()
