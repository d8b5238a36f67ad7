#!/usr/bin/env python3
"""
fusion-lab 统一命令行工具
数据准备、实验网格、结果汇总、PDC 扫描和簇中心分析
"""

import argparse
import asyncio
import json
import logging
import sys
from typing import List, Optional

from fusion_lab.analysis.profiles import format_profiles
from fusion_lab.config import load_experiment_config
from fusion_lab.evaluation.pdc import DEFAULT_THRESHOLDS, UserDistance
from fusion_lab.harness.experiment import cmd_analyze, cmd_pdc, cmd_prepare, cmd_run
from fusion_lab.harness.reports import cmd_report, format_table
from fusion_lab.models.model_manager import ModelManager

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class FusionLabCLI:
    """统一的实验命令行界面"""

    def __init__(self):
        self.parser = self._create_parser()

    def _create_parser(self) -> argparse.ArgumentParser:
        """创建命令行参数解析器"""
        parser = argparse.ArgumentParser(
            prog="fusion-lab",
            description="用户嵌入融合实验室命令行工具",
            formatter_class=argparse.RawDescriptionHelpFormatter,
            epilog="""
使用示例:
  %(prog)s prepare --ml100k data/ml-100k --ml20m data/ml-20m --out cache
  %(prog)s run --config configs/table1.json --workers 4
  %(prog)s run --kinds tensor --z 4 --folds 1 --output results/quick
  %(prog)s report results
  %(prog)s analyze results/runs/tensor_4_fold1/model.txt --clusters 20 --sample 3
  %(prog)s pdc results/runs/add_32_fold1/embeddings.csv data/ml-100k/u1.test
            """,
        )
        parser.add_argument("--debug", action="store_true", help="启用调试日志")
        subparsers = parser.add_subparsers(dest="command", help="可用命令")
        self._add_prepare_parser(subparsers)
        self._add_run_parser(subparsers)
        self._add_analyze_parser(subparsers)
        self._add_report_parser(subparsers)
        self._add_pdc_parser(subparsers)
        return parser

    def _add_prepare_parser(self, subparsers):
        p = subparsers.add_parser("prepare", help="链接数据集并写出五折缓存")
        p.add_argument("--config", help="实验配置文件 (JSON)")
        p.add_argument("--ml100k", help="ML-100k 目录（默认取 FUSION_LAB_ML100K）")
        p.add_argument("--ml20m", help="ML-20M 目录（默认取 FUSION_LAB_ML20M）")
        p.add_argument("--out", help="缓存输出目录（默认取 FUSION_LAB_CACHE）")

    def _add_run_parser(self, subparsers):
        p = subparsers.add_parser("run", help="运行实验网格")
        p.add_argument("--config", help="实验配置文件 (JSON)")
        p.add_argument("--cache", help="数据集缓存目录")
        p.add_argument("--output", help="结果输出目录")
        p.add_argument("--kinds", nargs="+", choices=ModelManager.available_kinds(), help="模型架构")
        p.add_argument("--z", nargs="+", type=int, help="嵌入维度")
        p.add_argument("--folds", nargs="+", type=int, help="评估折编号")
        p.add_argument("--thresholds", nargs="+", type=int, help="PDC 阈值")
        p.add_argument("--seed", type=int, help="模型初始化种子")
        p.add_argument("--workers", type=int, help="并行进程数")
        p.add_argument("--clamp", action="store_true", default=None, help="评估时把预测截断到 [1, 5]")

    def _add_analyze_parser(self, subparsers):
        p = subparsers.add_parser("analyze", help="张量融合模型的簇中心画像")
        p.add_argument("model_path", help="model.txt 路径")
        p.add_argument("--clusters", type=int, default=20, help="k-means 簇数 (默认: 20)")
        p.add_argument("--sample", type=int, default=3, help="随机抽取的簇数 (默认: 3)")
        p.add_argument("--seed", type=int, default=0, help="随机种子 (默认: 0)")
        p.add_argument("--config", help="实验配置文件 (JSON)")
        p.add_argument("--cache", help="数据集缓存目录")
        p.add_argument("--output", help="画像输出目录")
        p.add_argument("--ml20m", help="ML-20M 目录；给出时对全部带基因组特征的电影排名")
        p.add_argument("--ml100k-only", action="store_true", help="只对 ML-100k 中已链接的电影排名")

    def _add_report_parser(self, subparsers):
        p = subparsers.add_parser("report", help="汇总结果表和 PDC 扫描表")
        p.add_argument("results_dir", help="run 的输出目录")

    def _add_pdc_parser(self, subparsers):
        p = subparsers.add_parser("pdc", help="对嵌入 CSV 做 PDC 阈值扫描")
        p.add_argument("embeddings", help="嵌入 CSV (user_id,dim_0..)")
        p.add_argument("ratings", help="评分文件 (u.data 格式)")
        p.add_argument("--thresholds", nargs="+", type=int, default=list(DEFAULT_THRESHOLDS), help="PDC 阈值")
        p.add_argument("--d-u", choices=[d.value for d in UserDistance],
                       default=UserDistance.MEAN_SQUARED_DIFFERENCE.value, help="用户距离")
        p.add_argument("--output", help="扫描结果 CSV 路径")

    async def run(self, args: Optional[List[str]] = None) -> int:
        """运行CLI工具，返回退出码"""
        parsed_args = self.parser.parse_args(args)
        logging.basicConfig(level=logging.DEBUG if parsed_args.debug else logging.INFO, format=LOG_FORMAT)

        if not parsed_args.command:
            self.parser.print_help()
            return 0

        try:
            if parsed_args.command == "prepare":
                self._run_prepare(parsed_args)
            elif parsed_args.command == "run":
                await self._run_grid(parsed_args)
            elif parsed_args.command == "analyze":
                self._run_analyze(parsed_args)
            elif parsed_args.command == "report":
                print(format_table(cmd_report(parsed_args.results_dir)), end="")
            elif parsed_args.command == "pdc":
                self._run_pdc(parsed_args)
        except Exception as e:
            logger.error(f"{parsed_args.command} 失败: {e}", exc_info=parsed_args.debug)
            record = {
                "status": "error",
                "command": parsed_args.command,
                "error_type": type(e).__name__,
                "message": str(e),
            }
            print(json.dumps(record, ensure_ascii=False), file=sys.stderr)
            return 1
        return 0

    def _run_prepare(self, args):
        config = load_experiment_config(args.config, {
            "ml100k_dir": args.ml100k, "ml20m_dir": args.ml20m, "cache_dir": args.out,
        })
        config.require_paths("ml100k_dir", "ml20m_dir")
        summary = cmd_prepare(config.ml100k_dir, config.ml20m_dir, config.cache_dir)
        print(json.dumps(summary, ensure_ascii=False, indent=2))

    async def _run_grid(self, args):
        config = load_experiment_config(args.config, {
            "cache_dir": args.cache, "output_dir": args.output, "kinds": args.kinds, "z_values": args.z,
            "folds": args.folds, "pdc_thresholds": args.thresholds, "seed": args.seed,
            "workers": args.workers, "clamp_predictions": args.clamp,
        })
        table = await cmd_run(config)
        print(format_table(table), end="")

    def _run_analyze(self, args):
        config = load_experiment_config(args.config, {"cache_dir": args.cache, "output_dir": args.output})
        output_dir = args.output or f"{config.output_dir}/analysis"
        profiles = cmd_analyze(args.model_path, args.clusters, args.sample, args.seed, config.cache_dir,
                               output_dir, ml20m_dir=args.ml20m, ml100k_only=args.ml100k_only)
        print(format_profiles(profiles), end="")

    def _run_pdc(self, args):
        results = cmd_pdc(args.embeddings, args.ratings, args.thresholds, UserDistance(args.d_u), args.output)
        for t, result in results.items():
            score = "n/a" if result.score is None else f"{result.score:.4f}"
            print(f"t={t}\tPDC={score}\tpairs={result.pair_count}")


def main():
    """主函数"""
    cli = FusionLabCLI()
    sys.exit(asyncio.run(cli.run()))


if __name__ == "__main__":
    main()
