import copy
import hashlib
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from fusion_lab.errors import NonFiniteError, ShapeMismatchError, UsageError
from fusion_lab.numerics import SeededRng, sample_uniform

logger = logging.getLogger(__name__)

DEFAULT_N_FEATURES = 1128
DEFAULT_N_USERS = 943
EMBEDDING_INIT_RANGE = 0.05


class ModelKind(str, Enum):
    """模型架构（取值是稳定的序列化名称）"""
    USER_BIAS = "user-bias"
    LINEAR = "linear"
    ADDITIVE_MASK = "add"
    MULTIPLICATIVE_MASK = "mul"
    TENSOR_FUSION = "tensor"
    FACTORIZATION_MACHINE = "fm"

    @property
    def is_baseline(self) -> bool:
        return self in (ModelKind.USER_BIAS, ModelKind.LINEAR)


class Activation(str, Enum):
    """隐藏层激活函数"""
    RELU = "relu"
    TANH = "tanh"
    IDENTITY = "identity"

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self is Activation.RELU:
            return np.maximum(x, 0.0)
        if self is Activation.TANH:
            return np.tanh(x)
        return x.copy()

    def derivative(self, x: np.ndarray) -> np.ndarray:
        if self is Activation.RELU:
            return np.where(x > 0.0, 1.0, 0.0)
        if self is Activation.TANH:
            return 1.0 - np.tanh(x) ** 2
        return np.ones_like(x)


@dataclass
class EmbeddingTable:
    """从训练好的模型中提取的用户嵌入"""
    vectors: np.ndarray
    user_ids: Optional[List[int]] = None

    @property
    def n_users(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(np.asarray(self.vectors, dtype=np.float64))
        if self.vectors.ndim != 2:
            raise ShapeMismatchError(self.vectors.shape, ("n_users", "dim"), op="EmbeddingTable")
        if not np.all(np.isfinite(self.vectors)):
            raise NonFiniteError("embeddings")
        if self.user_ids is not None and len(self.user_ids) != self.n_users:
            raise ShapeMismatchError((len(self.user_ids),), self.vectors.shape, op="EmbeddingTable.user_ids")


def glorot_uniform(rng: SeededRng, fan_in: int, fan_out: int, shape: Tuple[int, ...]) -> np.ndarray:
    """按 ±sqrt(6/(fan_in+fan_out)) 均匀初始化权重"""
    limit = float(np.sqrt(6.0 / (fan_in + fan_out)))
    count = int(np.prod(shape))
    return sample_uniform(rng, -limit, limit, count).reshape(shape)


def embedding_uniform(rng: SeededRng, shape: Tuple[int, ...], center: float = 0.0) -> np.ndarray:
    """嵌入行在 center ± 0.05 内均匀初始化"""
    count = int(np.prod(shape))
    values = sample_uniform(rng, -EMBEDDING_INIT_RANGE, EMBEDDING_INIT_RANGE, count)
    return (center + values).reshape(shape)


class Model:
    """所有架构的基类，持有全部可学习参数"""

    kind: ModelKind
    # 参与梯度下降的参数
    learnable: Tuple[str, ...] = ()
    # L2 正则分组
    weight_params: Tuple[str, ...] = ()
    embedding_params: Tuple[str, ...] = ()

    def __init__(self, z: int, n_features: int = DEFAULT_N_FEATURES, n_users: int = DEFAULT_N_USERS,
                 activation: Activation = Activation.RELU):
        if n_features <= 0 or n_users <= 0:
            raise UsageError(f"特征维度和用户数必须为正: n_features={n_features}, n_users={n_users}")
        self.z = int(z)
        self.n_features = int(n_features)
        self.n_users = int(n_users)
        self.activation = Activation(activation)
        self.params: Dict[str, np.ndarray] = {}
        self.metadata: Dict[str, Any] = {}

    # ---- 子类实现 ----

    def initialize(self, rng: SeededRng):
        raise NotImplementedError("子类必须实现initialize方法")

    def forward_batch(self, X: np.ndarray, users: np.ndarray) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        """批量前向，返回预测和反向传播所需的缓存"""
        raise NotImplementedError("子类必须实现forward_batch方法")

    def backward_batch(self, cache: Dict[str, np.ndarray], dpred: np.ndarray) -> Dict[str, np.ndarray]:
        """给定 dL/dpred，返回所有可学习参数的梯度"""
        raise NotImplementedError("子类必须实现backward_batch方法")

    def embedding_of(self, u: int) -> np.ndarray:
        raise NotImplementedError("子类必须实现embedding_of方法")

    def sensitivity(self, u: int, x: Optional[np.ndarray] = None) -> np.ndarray:
        raise NotImplementedError("子类必须实现sensitivity方法")

    @classmethod
    def count_params(cls, z: int, n_features: int = DEFAULT_N_FEATURES, n_users: int = DEFAULT_N_USERS) -> int:
        raise NotImplementedError("子类必须实现count_params方法")

    # ---- 通用功能 ----

    @property
    def param_count(self) -> int:
        return self.count_params(self.z, self.n_features, self.n_users)

    def check_user(self, u: int) -> int:
        """检查用户下标范围"""
        if not 0 <= int(u) < self.n_users:
            raise UsageError(f"用户下标 {u} 超出范围 0..{self.n_users - 1}")
        return int(u)

    def check_features(self, x: np.ndarray) -> np.ndarray:
        """检查物品特征向量的长度和有限性"""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] != self.n_features:
            raise ShapeMismatchError(x.shape, (self.n_features,), op=f"{self.kind.value} 输入")
        if not np.all(np.isfinite(x)):
            raise NonFiniteError("x")
        return x

    def check_batch(self, X: np.ndarray, users: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        X = np.asarray(X, dtype=np.float64)
        users = np.asarray(users, dtype=np.int64)
        if X.ndim != 2 or X.shape[1] != self.n_features or X.shape[0] != users.shape[0]:
            raise ShapeMismatchError(X.shape, (users.shape[0], self.n_features), op=f"{self.kind.value} 批量输入")
        if users.size and (users.min() < 0 or users.max() >= self.n_users):
            raise UsageError(f"批量中存在超出范围 0..{self.n_users - 1} 的用户下标")
        return X, users

    def forward(self, x: np.ndarray, u: int) -> float:
        """单样本预测"""
        x = self.check_features(x)
        u = self.check_user(u)
        pred, _ = self.forward_batch(x[None, :], np.array([u], dtype=np.int64))
        return float(pred[0])

    def predict(self, X: np.ndarray, users: np.ndarray) -> np.ndarray:
        X, users = self.check_batch(X, users)
        pred, _ = self.forward_batch(X, users)
        return pred

    def embedding_table(self, user_ids: Optional[List[int]] = None) -> EmbeddingTable:
        vectors = np.vstack([self.embedding_of(u) for u in range(self.n_users)])
        return EmbeddingTable(vectors=vectors, user_ids=user_ids)

    def copy(self) -> "Model":
        return copy.deepcopy(self)

    def fingerprint(self) -> str:
        """参数内容的SHA-256（按参数名排序）"""
        digest = hashlib.sha256()
        digest.update(f"{self.kind.value}|{self.z}|{self.activation.value}".encode())
        for name in sorted(self.params):
            digest.update(name.encode())
            digest.update(np.ascontiguousarray(self.params[name], dtype=np.float64).tobytes())
        return digest.hexdigest()

    def check_finite(self):
        for name, value in self.params.items():
            if not np.all(np.isfinite(value)):
                raise NonFiniteError(name)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(z={self.z}, n_features={self.n_features}, n_users={self.n_users})"


def scatter_rows(shape: Tuple[int, int], rows: np.ndarray, values: np.ndarray) -> np.ndarray:
    """把按样本的行梯度累加到嵌入表的对应行，未出现的行保持为0"""
    grad = np.zeros(shape, dtype=np.float64)
    np.add.at(grad, rows, values)
    return grad
