"""
神经元级融合：单隐层感知机，用户嵌入作为加性/乘性掩码在激活前作用于隐层
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
    embedding_uniform,
    glorot_uniform,
    scatter_rows,
)
from fusion_lab.numerics import SeededRng

logger = logging.getLogger(__name__)


class MaskModel(Model):
    """W1·x + b1 与嵌入 E[u] 组合后经激活，再线性映射到评分"""

    learnable = ("W1", "b1", "E", "w2", "b2")
    weight_params = ("W1", "w2")
    embedding_params = ("E",)
    embedding_center = 0.0

    def __init__(self, z: int, *args, **kwargs):
        if z <= 0:
            raise UsageError(f"融合模型的嵌入维度必须为正: z={z}")
        super().__init__(z, *args, **kwargs)

    def initialize(self, rng: SeededRng):
        z, n = self.z, self.n_features
        self.params["W1"] = glorot_uniform(rng, n, z, (z, n))
        self.params["b1"] = np.zeros(z)
        self.params["E"] = embedding_uniform(rng, (self.n_users, z), center=self.embedding_center)
        self.params["w2"] = glorot_uniform(rng, z, 1, (z,))
        self.params["b2"] = np.array(0.0)

    def _combine(self, a: np.ndarray, e: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _combine_grads(self, dpre: np.ndarray, a: np.ndarray, e: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """返回 (dL/da, dL/de)"""
        raise NotImplementedError

    def forward_batch(self, X: np.ndarray, users: np.ndarray) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        a = X @ self.params["W1"].T + self.params["b1"]
        e = self.params["E"][users]
        pre = self._combine(a, e)
        h = self.activation.apply(pre)
        pred = h @ self.params["w2"] + float(self.params["b2"])
        return pred, {"X": X, "users": users, "a": a, "e": e, "pre": pre, "h": h}

    def backward_batch(self, cache: Dict[str, np.ndarray], dpred: np.ndarray) -> Dict[str, np.ndarray]:
        dh = dpred[:, None] * self.params["w2"][None, :]
        dpre = dh * self.activation.derivative(cache["pre"])
        da, de = self._combine_grads(dpre, cache["a"], cache["e"])
        return {
            "W1": da.T @ cache["X"],
            "b1": da.sum(axis=0),
            "E": scatter_rows(self.params["E"].shape, cache["users"], de),
            "w2": cache["h"].T @ dpred,
            "b2": np.array(dpred.sum()),
        }

    def embedding_of(self, u: int) -> np.ndarray:
        u = self.check_user(u)
        return self.params["E"][u].copy()

    def sensitivity(self, u: int, x: Optional[np.ndarray] = None) -> np.ndarray:
        """在输入 x 处的解析偏导 ∂ŷ/∂x（掩码模型的敏感度依赖输入）"""
        if x is None:
            raise UsageError(f"{self.kind.value} 模型的输入敏感度依赖于输入，必须提供 x")
        x = self.check_features(x)
        u = self.check_user(u)
        _, cache = self.forward_batch(x[None, :], np.array([u]))
        dpre = self.params["w2"][None, :] * self.activation.derivative(cache["pre"])
        da, _ = self._combine_grads(dpre, cache["a"], cache["e"])
        return (da @ self.params["W1"])[0]

    @classmethod
    def count_params(cls, z: int, n_features: int = DEFAULT_N_FEATURES, n_users: int = DEFAULT_N_USERS) -> int:
        # W1 + b1 + E + w2 + b2
        return z * (n_features + n_users + 2) + 1


class AdditiveMaskModel(MaskModel):
    """加性掩码：act(W1·x + b1 + E[u])"""

    kind = ModelKind.ADDITIVE_MASK

    def _combine(self, a: np.ndarray, e: np.ndarray) -> np.ndarray:
        return a + e

    def _combine_grads(self, dpre: np.ndarray, a: np.ndarray, e: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return dpre, dpre

    def concatenated_layer(self) -> Tuple[np.ndarray, np.ndarray]:
        """等价的拼接形式：[W1 | Eᵀ] 作用于 [x; onehot(u)]，返回 (权重, 偏置)"""
        return np.hstack([self.params["W1"], self.params["E"].T]), self.params["b1"].copy()


class MultiplicativeMaskModel(MaskModel):
    """乘性掩码：act((W1·x + b1) ⊙ E[u])"""

    kind = ModelKind.MULTIPLICATIVE_MASK
    # 嵌入初始化在1附近，避免掩码为0时梯度全部消失
    embedding_center = 1.0

    def _combine(self, a: np.ndarray, e: np.ndarray) -> np.ndarray:
        return a * e

    def _combine_grads(self, dpre: np.ndarray, a: np.ndarray, e: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return dpre * e, dpre * a
