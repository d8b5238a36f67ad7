"""
权重级融合：单层线性张量融合

    ŷ = b + W·x + (e·T)·x + u_b·e = y_x + y_h + y_u

其中 y_x 与用户无关，y_u 为通用用户偏置，e·T 是用户相关的输入敏感度变化。
"""

import logging
from typing import Dict, Optional, Tuple

import numpy as np

from fusion_lab.errors import ShapeMismatchError, UsageError
from fusion_lab.models.base import (
    DEFAULT_N_FEATURES,
    DEFAULT_N_USERS,
    Model,
    ModelKind,
    embedding_uniform,
    glorot_uniform,
    scatter_rows,
)
from fusion_lab.numerics import SeededRng

logger = logging.getLogger(__name__)


class TensorFusionModel(Model):
    """线性张量融合模型"""

    kind = ModelKind.TENSOR_FUSION
    learnable = ("W", "b", "T", "E", "u_b")
    weight_params = ("W", "T", "u_b")
    embedding_params = ("E",)

    def __init__(self, z: int, *args, **kwargs):
        if z <= 0:
            raise UsageError(f"融合模型的嵌入维度必须为正: z={z}")
        super().__init__(z, *args, **kwargs)

    def initialize(self, rng: SeededRng):
        z, n = self.z, self.n_features
        self.params["W"] = glorot_uniform(rng, n, 1, (n,))
        self.params["b"] = np.array(0.0)
        self.params["T"] = glorot_uniform(rng, n, z, (z, n))
        self.params["E"] = embedding_uniform(rng, (self.n_users, z))
        self.params["u_b"] = glorot_uniform(rng, z, 1, (z,))

    def forward_batch(self, X: np.ndarray, users: np.ndarray) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        e = self.params["E"][users]
        H = X @ self.params["T"].T
        y_x = X @ self.params["W"] + float(self.params["b"])
        y_h = np.einsum("bf,bf->b", e, H)
        y_u = e @ self.params["u_b"]
        return y_x + y_h + y_u, {"X": X, "users": users, "e": e, "H": H}

    def backward_batch(self, cache: Dict[str, np.ndarray], dpred: np.ndarray) -> Dict[str, np.ndarray]:
        X, e = cache["X"], cache["e"]
        de = dpred[:, None] * (cache["H"] + self.params["u_b"][None, :])
        return {
            "W": X.T @ dpred,
            "b": np.array(dpred.sum()),
            "T": (dpred[:, None] * e).T @ X,
            "E": scatter_rows(self.params["E"].shape, cache["users"], de),
            "u_b": e.T @ dpred,
        }

    def forward_with_embedding(self, x: np.ndarray, e: np.ndarray) -> float:
        """用任意嵌入 e 代替用户嵌入进行预测"""
        y_x, y_u, y_h = self.decompose_embedding(x, e)
        return y_x + y_u + y_h

    def decompose(self, x: np.ndarray, u: int) -> Tuple[float, float, float]:
        """返回 (y_x, y_u, y_h) 三个分量"""
        u = self.check_user(u)
        return self.decompose_embedding(x, self.params["E"][u])

    def decompose_embedding(self, x: np.ndarray, e: np.ndarray) -> Tuple[float, float, float]:
        x = self.check_features(x)
        e = self._check_embedding(e)
        y_x = float(self.params["b"]) + float(self.params["W"] @ x)
        y_u = float(self.params["u_b"] @ e)
        y_h = float(self.sensitivity_change(e) @ x)
        return y_x, y_u, y_h

    def score_items(self, X: np.ndarray, e: np.ndarray) -> np.ndarray:
        """对一批物品按嵌入 e 打分"""
        e = self._check_embedding(e)
        X = np.asarray(X, dtype=np.float64)
        weights = self.params["W"] + self.sensitivity_change(e)
        return X @ weights + float(self.params["b"]) + float(self.params["u_b"] @ e)

    def user_bias(self, e: np.ndarray) -> float:
        """通用用户偏置 y_u = u_b·e"""
        return float(self.params["u_b"] @ self._check_embedding(e))

    def sensitivity_change(self, e: np.ndarray) -> np.ndarray:
        """用户相关的输入敏感度变化 e·T"""
        return self._check_embedding(e) @ self.params["T"]

    def embedding_of(self, u: int) -> np.ndarray:
        u = self.check_user(u)
        return self.params["E"][u].copy()

    def sensitivity(self, u: int, x: Optional[np.ndarray] = None) -> np.ndarray:
        """输入敏感度 W + E[u]·T，与输入无关"""
        if x is not None:
            raise UsageError("张量融合模型的输入敏感度与输入无关，不能传入 x")
        u = self.check_user(u)
        return self.params["W"] + self.sensitivity_change(self.params["E"][u])

    def _check_embedding(self, e: np.ndarray) -> np.ndarray:
        e = np.asarray(e, dtype=np.float64)
        if e.shape != (self.z,):
            raise ShapeMismatchError(e.shape, (self.z,), op="tensor 嵌入")
        return e

    @classmethod
    def count_params(cls, z: int, n_features: int = DEFAULT_N_FEATURES, n_users: int = DEFAULT_N_USERS) -> int:
        # W + b + T + E + u_b
        return n_features + 1 + z * (n_features + n_users + 1)
