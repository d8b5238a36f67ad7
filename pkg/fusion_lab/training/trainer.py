"""
小批量梯度下降训练

给定模型初始化种子和 hp.seed，训练过程完全确定：第 epoch 轮的打乱顺序只取决于 (hp.seed, epoch)。
"""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from fusion_lab.data.folds import RatingArrays, to_arrays
from fusion_lab.data.genome import FeatureCatalog
from fusion_lab.data.movielens import RatingRecord
from fusion_lab.errors import NonFiniteError, ShapeMismatchError, TrainingDivergedError, UsageError
from fusion_lab.models.base import Model, ModelKind
from fusion_lab.models.baselines import UserBiasModel
from fusion_lab.models.model_manager import mse_loss_and_gradients
from fusion_lab.numerics import SeededRng
from fusion_lab.training.hyperparams import HyperParams
from fusion_lab.training.optimizers import make_optimizer

logger = logging.getLogger(__name__)

PREDICT_CHUNK = 4096


@dataclass
class TrainTrace:
    """训练过程记录：每轮损失（含L2项）、每轮耗时、总耗时、最终参数哈希"""
    losses: List[float] = field(default_factory=list)
    seconds: List[float] = field(default_factory=list)
    wall_time: float = 0.0
    model_hash: str = ""
    hyperparams: str = ""

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "epoch": np.arange(1, len(self.losses) + 1),
            "loss": self.losses,
            "seconds": self.seconds,
        })

    def save_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        with path.open("w", encoding="utf-8", newline="\n") as f:
            f.write(f"# {self.hyperparams}\n")
            self.to_frame().to_csv(f, index=False, float_format="%.17g", lineterminator="\n")
        return path


def l2_strengths(model: Model, hp: HyperParams) -> Dict[str, float]:
    """每个参数的L2系数；FM 总是正则化，其余模型需要 regularize_neural"""
    if model.kind is not ModelKind.FACTORIZATION_MACHINE and not hp.regularize_neural:
        return {}
    strengths = {name: hp.l2_weights for name in model.weight_params}
    strengths.update({name: hp.l2_embeddings for name in model.embedding_params})
    return {name: lam for name, lam in strengths.items() if lam > 0.0}


def apply_l2(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], strengths: Mapping[str, float]) -> float:
    """把 λ‖θ‖² 的梯度 2λθ 加到 grads 中，返回惩罚项的值"""
    penalty = 0.0
    for name, lam in strengths.items():
        value = params[name]
        penalty += lam * float(np.sum(value ** 2))
        grads[name] = grads[name] + 2.0 * lam * value
    return penalty


def _check_features(model: Model, features: FeatureCatalog):
    if features.n_tags != model.n_features:
        raise ShapeMismatchError((features.n_tags,), (model.n_features,), op="特征维度")


def _as_arrays(train_set: Union[RatingArrays, Sequence[RatingRecord]],
               user_index: Optional[Mapping[int, int]]) -> RatingArrays:
    if isinstance(train_set, RatingArrays):
        return train_set
    if user_index is None:
        raise UsageError("评分记录列表需要同时提供 user_index")
    return to_arrays(list(train_set), user_index)


def predict_arrays(model: Model, ratings: RatingArrays, features: FeatureCatalog) -> np.ndarray:
    """对一组 (用户, 物品) 分块预测评分"""
    _check_features(model, features)
    rows = features.row_indices(ratings.items)
    chunks = []
    for start in range(0, len(ratings), PREDICT_CHUNK):
        end = start + PREDICT_CHUNK
        chunks.append(model.predict(features.matrix[rows[start:end]], ratings.users[start:end]))
    return np.concatenate(chunks) if chunks else np.zeros(0)


def train(model: Model, train_set: Union[RatingArrays, Sequence[RatingRecord]], features: FeatureCatalog,
          hp: HyperParams, user_index: Optional[Mapping[int, int]] = None) -> Tuple[Model, TrainTrace]:
    """在训练集上按 hp 训练模型（原地更新），返回模型和训练记录"""
    arrays = _as_arrays(train_set, user_index)
    if len(arrays) == 0:
        raise UsageError("训练集不能为空")
    _check_features(model, features)
    rows = features.row_indices(arrays.items)
    n = len(arrays)

    trace = TrainTrace(hyperparams=hp.describe())
    started = time.perf_counter()

    if isinstance(model, UserBiasModel):
        model.fit_statistics(arrays.users, arrays.ratings)

    if not model.learnable:
        # 只有统计量，没有可学习参数：每轮损失相同
        pred = predict_arrays(model, arrays, features)
        loss = float(np.mean((pred - arrays.ratings) ** 2))
        trace.losses = [loss] * hp.epochs
        trace.seconds = [0.0] * hp.epochs
    else:
        optimizer = make_optimizer(hp)
        strengths = l2_strengths(model, hp)
        if strengths:
            logger.debug(f"L2 正则: {strengths}")
        seed_rng = SeededRng(hp.seed)
        for epoch in range(hp.epochs):
            epoch_started = time.perf_counter()
            order = seed_rng.spawn(epoch).permutation(n)
            total = 0.0
            for start in range(0, n, hp.batch_size):
                batch = order[start:start + hp.batch_size]
                try:
                    with np.errstate(over="ignore", invalid="ignore"):
                        loss, grads = mse_loss_and_gradients(
                            model, features.matrix[rows[batch]], arrays.users[batch], arrays.ratings[batch]
                        )
                        loss += apply_l2(model.params, grads, strengths)
                        optimizer.step(model.params, grads)
                except NonFiniteError as e:
                    raise TrainingDivergedError(epoch + 1, hp.learning_rate, str(e)) from e
                total += loss * len(batch)
            epoch_loss = total / n
            if not np.isfinite(epoch_loss):
                raise TrainingDivergedError(epoch + 1, hp.learning_rate, "损失不是有限值")
            try:
                model.check_finite()
            except NonFiniteError as e:
                raise TrainingDivergedError(epoch + 1, hp.learning_rate, str(e)) from e
            trace.losses.append(epoch_loss)
            trace.seconds.append(time.perf_counter() - epoch_started)
            logger.info(f"{model.kind.value} z={model.z} 第 {epoch + 1}/{hp.epochs} 轮: loss={epoch_loss:.6f}")

    trace.wall_time = time.perf_counter() - started
    trace.model_hash = model.fingerprint()
    model.metadata["train_seed"] = hp.seed
    model.metadata["hyperparams"] = hp.describe()
    return model, trace
