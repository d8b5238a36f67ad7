import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import pandas as pd

from fusion_lab.data.folds import Fold
from fusion_lab.data.genome import FeatureCatalog
from fusion_lab.errors import TrainingDivergedError, UsageError
from fusion_lab.evaluation.metrics import prediction_metrics
from fusion_lab.models.base import ModelKind
from fusion_lab.models.model_manager import init_model
from fusion_lab.numerics import SeededRng
from fusion_lab.training.hyperparams import HyperParams
from fusion_lab.training.trainer import predict_arrays, train

logger = logging.getLogger(__name__)


@dataclass
class GridPoint:
    index: int
    hyperparams: HyperParams
    mae: Optional[float] = None
    rmse: Optional[float] = None
    diverged: bool = False
    error: str = ""

    def sort_key(self):
        # RMSE 相同时学习率小者优先，其次轮数少者
        return (self.rmse, self.hyperparams.learning_rate, self.hyperparams.epochs, self.index)


@dataclass
class GridSearchResult:
    kind: ModelKind
    z: int
    best: HyperParams
    best_index: int = 0
    points: List[GridPoint] = field(default_factory=list)
    tuning_split: str = ""

    def to_frame(self) -> pd.DataFrame:
        records = []
        for p in self.points:
            record = {"index": p.index, "kind": self.kind.value, "z": self.z}
            record.update(p.hyperparams.model_dump(mode="json"))
            record.update({"mae": p.mae, "rmse": p.rmse, "diverged": p.diverged, "error": p.error,
                           "selected": p.index == self.best_index})
            records.append(record)
        return pd.DataFrame(records)

    def save_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
        return path


def grid_search(kind: Union[ModelKind, str], z: int, grid: Sequence[HyperParams], tune_split: Fold,
                features: FeatureCatalog, init_seed: int = 0, clamp: bool = False,
                results_path: Optional[Union[str, Path]] = None) -> GridSearchResult:
    """在调参划分上逐个训练网格点，返回验证集 RMSE 最小的超参数"""
    kind = ModelKind(kind)
    if not grid:
        raise UsageError("超参数网格不能为空")
    train_arrays = tune_split.train_arrays()
    valid_arrays = tune_split.test_arrays()

    points = []
    for index, hp in enumerate(grid):
        point = GridPoint(index, hp)
        model = init_model(kind, z, SeededRng(init_seed), hp.activation,
                           n_features=features.n_tags, n_users=tune_split.n_users)
        try:
            train(model, train_arrays, features, hp)
            pred = predict_arrays(model, valid_arrays, features)
            point.mae, point.rmse = prediction_metrics(pred, valid_arrays.ratings, clamp=clamp)
        except TrainingDivergedError as e:
            point.diverged = True
            point.error = str(e)
            logger.warning(f"网格点 {index} 发散: {hp.describe()}")
        else:
            logger.info(f"网格点 {index}: rmse={point.rmse:.4f} ({hp.describe()})")
        points.append(point)

    finished = [p for p in points if not p.diverged]
    if not finished:
        raise TrainingDivergedError(0, min(hp.learning_rate for hp in grid), "所有网格点均发散")
    best = min(finished, key=GridPoint.sort_key)
    result = GridSearchResult(kind, z, best.hyperparams, best.index, points, tune_split.notes.get("tuning_split", ""))
    if results_path is not None:
        result.save_csv(results_path)
    return result
