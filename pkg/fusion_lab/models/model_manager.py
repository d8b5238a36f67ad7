import logging
from typing import Dict, Iterable, Optional, Sequence, Tuple, Type, Union

import numpy as np

from fusion_lab.errors import NonFiniteError, UsageError
from fusion_lab.models.base import (
    DEFAULT_N_FEATURES,
    DEFAULT_N_USERS,
    Activation,
    Model,
    ModelKind,
)
from fusion_lab.models.baselines import LinearModel, UserBiasModel
from fusion_lab.models.fm import FactorizationMachineModel
from fusion_lab.models.masks import AdditiveMaskModel, MultiplicativeMaskModel
from fusion_lab.models.tensor import TensorFusionModel
from fusion_lab.numerics import SeededRng

logger = logging.getLogger(__name__)

Sample = Tuple[np.ndarray, int, float]


class ModelManager:
    """模型管理器，按架构名称创建模型"""

    MODEL_CLASSES: Dict[ModelKind, Type[Model]] = {
        ModelKind.USER_BIAS: UserBiasModel,
        ModelKind.LINEAR: LinearModel,
        ModelKind.ADDITIVE_MASK: AdditiveMaskModel,
        ModelKind.MULTIPLICATIVE_MASK: MultiplicativeMaskModel,
        ModelKind.TENSOR_FUSION: TensorFusionModel,
        ModelKind.FACTORIZATION_MACHINE: FactorizationMachineModel,
    }

    # 结果表网格中的嵌入维度
    GRID_Z_VALUES = (2, 4, 8, 16, 32, 64)

    @classmethod
    def model_class(cls, kind: Union[ModelKind, str]) -> Type[Model]:
        """根据架构名称获取模型类"""
        try:
            return cls.MODEL_CLASSES[ModelKind(kind)]
        except ValueError:
            raise UsageError(f"未知的模型架构: {kind}，可选 {[k.value for k in ModelKind]}") from None

    @classmethod
    def create(cls, kind: Union[ModelKind, str], z: int, activation: Activation = Activation.RELU,
               n_features: int = DEFAULT_N_FEATURES, n_users: int = DEFAULT_N_USERS) -> Model:
        """创建未初始化的模型"""
        model_cls = cls.model_class(kind)
        if ModelKind(kind).is_baseline:
            z = 0
        return model_cls(z, n_features=n_features, n_users=n_users, activation=activation)

    @classmethod
    def available_kinds(cls) -> Sequence[str]:
        return [kind.value for kind in cls.MODEL_CLASSES]


def init_model(kind: Union[ModelKind, str], z: int, rng: SeededRng,
               activation: Activation = Activation.RELU,
               n_features: int = DEFAULT_N_FEATURES, n_users: int = DEFAULT_N_USERS) -> Model:
    """创建并初始化模型；非标准 z 值仅记录提示"""
    kind = ModelKind(kind)
    if not kind.is_baseline and z > 0 and z not in ModelManager.GRID_Z_VALUES:
        logger.debug(f"z={z} 不在结果表网格的嵌入维度 {ModelManager.GRID_Z_VALUES} 之中")
    model = ModelManager.create(kind, z, activation, n_features, n_users)
    model.initialize(rng)
    model.metadata["init_seed"] = rng.seed
    model.metadata["rng_algorithm"] = rng.algorithm
    return model


def param_count(kind: Union[ModelKind, str], z: int,
                n_features: int = DEFAULT_N_FEATURES, n_users: int = DEFAULT_N_USERS) -> int:
    """参数数量（默认维度 1128 个标签、943 个用户）"""
    return ModelManager.model_class(kind).count_params(z, n_features, n_users)


def forward(model: Model, x: np.ndarray, u: int) -> float:
    return model.forward(x, u)


def embedding_of(model: Model, u: int) -> np.ndarray:
    return model.embedding_of(u)


def sensitivity(model: Model, u: int, x: Optional[np.ndarray] = None) -> np.ndarray:
    return model.sensitivity(u, x)


def stack_batch(batch: Iterable[Sample]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """把 (x, u, R) 列表转换为数组"""
    batch = list(batch)
    if not batch:
        raise UsageError("批量不能为空")
    X = np.vstack([np.asarray(x, dtype=np.float64) for x, _, _ in batch])
    users = np.array([u for _, u, _ in batch], dtype=np.int64)
    ratings = np.array([r for _, _, r in batch], dtype=np.float64)
    return X, users, ratings


def mse_loss_and_gradients(model: Model, X: np.ndarray, users: np.ndarray,
                           ratings: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
    """批量均方误差及其对每个可学习参数的解析梯度"""
    X, users = model.check_batch(X, users)
    ratings = np.asarray(ratings, dtype=np.float64)
    if ratings.size == 0:
        raise UsageError("批量不能为空")
    pred, cache = model.forward_batch(X, users)
    if not np.all(np.isfinite(pred)):
        raise NonFiniteError("prediction")
    residual = pred - ratings
    loss = float(np.mean(residual ** 2))
    dpred = 2.0 * residual / ratings.size
    grads = model.backward_batch(cache, dpred)
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(name, "梯度")
    return loss, grads


def gradients(model: Model, batch: Iterable[Sample]) -> Dict[str, np.ndarray]:
    """(x, u, R) 批量上均方误差的精确梯度"""
    X, users, ratings = stack_batch(batch)
    _, grads = mse_loss_and_gradients(model, X, users, ratings)
    return grads
