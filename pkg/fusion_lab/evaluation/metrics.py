"""
评分预测指标
"""

from typing import Sequence, Tuple

import numpy as np

from fusion_lab.errors import ShapeMismatchError, UsageError


def _residuals(pred: Sequence[float], target: Sequence[float]) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if pred.shape != target.shape:
        raise ShapeMismatchError(pred.shape, target.shape, op="metrics")
    if pred.size == 0:
        raise UsageError("预测值和目标值不能为空")
    return pred - target


def mae(pred: Sequence[float], target: Sequence[float]) -> float:
    """平均绝对误差"""
    return float(np.mean(np.abs(_residuals(pred, target))))


def rmse(pred: Sequence[float], target: Sequence[float]) -> float:
    """均方根误差"""
    return float(np.sqrt(np.mean(_residuals(pred, target) ** 2)))


def prediction_metrics(pred: Sequence[float], target: Sequence[float], clamp: bool = False,
                       lo: float = 1.0, hi: float = 5.0) -> Tuple[float, float]:
    """返回 (MAE, RMSE)；clamp=True 时先把预测截断到 [lo, hi]"""
    pred = np.asarray(pred, dtype=np.float64)
    if clamp:
        pred = np.clip(pred, lo, hi)
    return mae(pred, target), rmse(pred, target)
