"""
基线模型：用户平均分（user-bias）和在用户平均分上叠加特征线性组合（linear）
"""

import logging
from typing import Dict, Optional, Tuple

import numpy as np

from fusion_lab.errors import UsageError
from fusion_lab.models.base import (
    DEFAULT_N_FEATURES,
    DEFAULT_N_USERS,
    Model,
    ModelKind,
    glorot_uniform,
)
from fusion_lab.numerics import SeededRng

logger = logging.getLogger(__name__)

PARAMS_NOTE = "用户平均分由训练数据统计得到而非梯度学习；参数数量按 用户数+1 (user-bias) 和 用户数+特征数+2 (linear) 计"


class UserBiasModel(Model):
    """输出用户在训练集上的平均评分"""

    kind = ModelKind.USER_BIAS

    def initialize(self, rng: SeededRng):
        self.params["user_mean"] = np.zeros(self.n_users, dtype=np.float64)
        self.params["global_mean"] = np.array(0.0)
        self.metadata["params_note"] = PARAMS_NOTE

    def fit_statistics(self, users: np.ndarray, ratings: np.ndarray):
        """根据训练评分计算用户平均分；没有训练评分的用户取全局平均"""
        users = np.asarray(users, dtype=np.int64)
        ratings = np.asarray(ratings, dtype=np.float64)
        if ratings.size == 0:
            raise UsageError("无法在空训练集上统计用户平均分")
        global_mean = float(ratings.mean())
        sums = np.bincount(users, weights=ratings, minlength=self.n_users)
        counts = np.bincount(users, minlength=self.n_users)
        user_mean = np.full(self.n_users, global_mean)
        seen = counts > 0
        user_mean[seen] = sums[seen] / counts[seen]
        self.params["user_mean"] = user_mean
        self.params["global_mean"] = np.array(global_mean)
        cold = int((~seen).sum())
        if cold:
            logger.info(f"{cold} 个冷启动用户使用全局平均分 {global_mean:.4f}")

    def forward_batch(self, X: np.ndarray, users: np.ndarray) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        pred = self.params["user_mean"][users].astype(np.float64)
        return pred, {"X": X, "users": users}

    def backward_batch(self, cache: Dict[str, np.ndarray], dpred: np.ndarray) -> Dict[str, np.ndarray]:
        return {}

    def embedding_of(self, u: int) -> np.ndarray:
        u = self.check_user(u)
        return np.array([self.params["user_mean"][u]], dtype=np.float64)

    def sensitivity(self, u: int, x: Optional[np.ndarray] = None) -> np.ndarray:
        if x is not None:
            raise UsageError("user-bias 模型的输入敏感度与输入无关，不能传入 x")
        self.check_user(u)
        return np.zeros(self.n_features, dtype=np.float64)

    @classmethod
    def count_params(cls, z: int = 0, n_features: int = DEFAULT_N_FEATURES, n_users: int = DEFAULT_N_USERS) -> int:
        return n_users + 1


class LinearModel(UserBiasModel):
    """用户平均分 + 学习到的特征线性组合"""

    kind = ModelKind.LINEAR
    learnable = ("w", "b")
    weight_params = ("w",)

    def initialize(self, rng: SeededRng):
        super().initialize(rng)
        self.params["w"] = glorot_uniform(rng, self.n_features, 1, (self.n_features,))
        self.params["b"] = np.array(0.0)

    def forward_batch(self, X: np.ndarray, users: np.ndarray) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        pred = self.params["user_mean"][users] + X @ self.params["w"] + float(self.params["b"])
        return pred, {"X": X, "users": users}

    def backward_batch(self, cache: Dict[str, np.ndarray], dpred: np.ndarray) -> Dict[str, np.ndarray]:
        return {
            "w": cache["X"].T @ dpred,
            "b": np.array(dpred.sum()),
        }

    def sensitivity(self, u: int, x: Optional[np.ndarray] = None) -> np.ndarray:
        if x is not None:
            raise UsageError("linear 模型的输入敏感度与输入无关，不能传入 x")
        self.check_user(u)
        return self.params["w"].copy()

    @classmethod
    def count_params(cls, z: int = 0, n_features: int = DEFAULT_N_FEATURES, n_users: int = DEFAULT_N_USERS) -> int:
        return n_users + 1 + n_features + 1
