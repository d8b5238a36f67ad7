"""
汇总各次运行的报告：结果表（均值 ± 标准差）和 PDC 阈值扫描表
"""

import logging
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
import pandas as pd

from fusion_lab.errors import UsageError
from fusion_lab.evaluation.report import EvalReport
from fusion_lab.models.base import ModelKind

logger = logging.getLogger(__name__)

RESULTS_CSV = "results_table.csv"
RESULTS_TEXT = "results_table.txt"
SWEEP_CSV = "pdc_sweep.csv"
BEST_MARK = "*"
UNAVAILABLE = "n/a"


def collect_reports(results_dir: Union[str, Path]) -> List[EvalReport]:
    """读取 runs/*/report.json"""
    runs = Path(results_dir) / "runs"
    return [EvalReport.load(path) for path in sorted(runs.glob("*/report.json"))]


def _row_order(report: EvalReport):
    return list(ModelKind).index(ModelKind(report.kind)), report.z, report.fold_id


def _std(values: Sequence[float]) -> float:
    # 样本标准差；只有一折时无定义
    return float(np.std(values, ddof=1)) if len(values) > 1 else float("nan")


def _thresholds(reports: Sequence[EvalReport]) -> List[int]:
    return sorted({int(t) for r in reports for t in r.pdc})


def aggregate(reports: Sequence[EvalReport]) -> pd.DataFrame:
    """每个 (模型, z) 一行，按折求均值和标准差"""
    if not reports:
        raise UsageError("没有可汇总的运行结果")
    thresholds = _thresholds(reports)
    groups: Dict[tuple, List[EvalReport]] = {}
    for report in sorted(reports, key=_row_order):
        groups.setdefault((report.kind, report.z), []).append(report)

    rows = []
    for (kind, z), members in groups.items():
        done = [r for r in members if r.ok]
        row = {
            "kind": kind,
            "z": z,
            "params": members[0].param_count,
            "n_folds": len(done),
            "n_failed": len(members) - len(done),
        }
        for metric in ("mae", "rmse"):
            values = [getattr(r, metric) for r in done]
            row[f"{metric}_mean"] = float(np.mean(values)) if values else float("nan")
            row[f"{metric}_std"] = _std(values)
        for t in thresholds:
            values = [r.pdc.get(t) for r in done if r.pdc.get(t) is not None]
            row[f"pdc{t}_mean"] = float(np.mean(values)) if values else float("nan")
            row[f"pdc{t}_std"] = _std(values)
        rows.append(row)
    return pd.DataFrame(rows)


def sweep_frame(reports: Sequence[EvalReport]) -> pd.DataFrame:
    """PDC 扫描：每个 (模型, z, 阈值) 一行"""
    records = []
    table = aggregate(reports)
    thresholds = _thresholds(reports)
    for _, row in table.iterrows():
        for t in thresholds:
            members = [r for r in reports if r.ok and r.kind == row["kind"] and r.z == row["z"]]
            counts = [r.pair_counts[t] for r in members if t in r.pair_counts]
            records.append({
                "kind": row["kind"],
                "z": int(row["z"]),
                "threshold": t,
                "score": row[f"pdc{t}_mean"],
                "pair_count": float(np.mean(counts)) if counts else float("nan"),
                "stddev": row[f"pdc{t}_std"],
            })
    return pd.DataFrame(records, columns=["kind", "z", "threshold", "score", "pair_count", "stddev"])


def _cell(mean: float, std: float, best: bool) -> str:
    if np.isnan(mean):
        return UNAVAILABLE
    spread = UNAVAILABLE if np.isnan(std) else f"{std:.4f}"
    return f"{mean:.4f} ± {spread}" + (BEST_MARK if best else "")


def format_table(table: pd.DataFrame) -> str:
    """对齐的文本结果表；每列最优值（MAE/RMSE 最小，PDC 最大）标记 *"""
    metrics = ["mae", "rmse"] + [c[:-len("_mean")] for c in table.columns if c.startswith("pdc") and c.endswith("_mean")]
    best = {}
    for metric in metrics:
        values = table[f"{metric}_mean"]
        if values.notna().any():
            best[metric] = values.min() if metric in ("mae", "rmse") else values.max()
    rendered = pd.DataFrame({
        "kind": table["kind"],
        "z": table["z"].map(lambda z: "-" if z == 0 else str(z)),
        "params": table["params"],
        "folds": table["n_folds"],
    })
    for metric in metrics:
        label = metric.upper() if metric in ("mae", "rmse") else f"PDC(t={metric[3:]})"
        rendered[label] = [
            _cell(m, s, metric in best and m == best[metric])
            for m, s in zip(table[f"{metric}_mean"], table[f"{metric}_std"])
        ]
    return rendered.to_string(index=False) + "\n"


def write_results(results_dir: Union[str, Path], reports: Sequence[EvalReport]) -> pd.DataFrame:
    results_dir = Path(results_dir)
    table = aggregate(reports)
    table.to_csv(results_dir / RESULTS_CSV, index=False, float_format="%.17g", lineterminator="\n")
    (results_dir / RESULTS_TEXT).write_text(format_table(table), encoding="utf-8")
    sweep_frame(reports).to_csv(results_dir / SWEEP_CSV, index=False, float_format="%.17g", lineterminator="\n")
    notes = sorted({r.params_note for r in reports if r.params_note})
    for note in notes:
        logger.info(f"参数数量说明: {note}")
    return table


def cmd_report(results_dir: Union[str, Path]) -> pd.DataFrame:
    """从 runs/ 下的报告重新生成结果表和 PDC 扫描表"""
    results_dir = Path(results_dir)
    reports = collect_reports(results_dir)
    if not reports:
        raise UsageError(f"{results_dir} 下没有已完成的运行（runs/*/report.json）")
    table = write_results(results_dir, reports)
    logger.info(f"汇总 {len(reports)} 次运行，共 {len(table)} 行")
    return table
