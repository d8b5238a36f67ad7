"""
二阶因子分解机（FM），输入为物品特征与用户 one-hot 的拼接

用户 one-hot 部分从不显式构造，前向和梯度直接索引用户对应的 W 元素和 V 行。
"""

import logging
from typing import Dict, Optional, Tuple

import numpy as np

from fusion_lab.errors import NonFiniteError, ShapeMismatchError, UsageError
from fusion_lab.models.base import (
    DEFAULT_N_FEATURES,
    DEFAULT_N_USERS,
    Model,
    ModelKind,
    embedding_uniform,
    glorot_uniform,
)
from fusion_lab.numerics import SeededRng

logger = logging.getLogger(__name__)

FM_T_PATHS = ("factored", "gram")


class FactorizationMachineModel(Model):
    """FM(x) = b + W·x + Σ_{i<j} x_i <V_i, V_j> x_j"""

    kind = ModelKind.FACTORIZATION_MACHINE
    learnable = ("b", "W", "V")
    weight_params = ("W",)
    embedding_params = ("V",)

    def __init__(self, z: int, *args, **kwargs):
        if z <= 0:
            raise UsageError(f"FM 的秩必须为正: z={z}")
        super().__init__(z, *args, **kwargs)

    @property
    def n_inputs(self) -> int:
        return self.n_features + self.n_users

    def initialize(self, rng: SeededRng):
        n = self.n_inputs
        self.params["b"] = np.array(0.0)
        self.params["W"] = glorot_uniform(rng, n, 1, (n,))
        self.params["V"] = embedding_uniform(rng, (n, self.z))

    def forward_batch(self, X: np.ndarray, users: np.ndarray) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        nf = self.n_features
        W, V = self.params["W"], self.params["V"]
        rows = nf + users
        V_items, V_users = V[:nf], V[rows]
        S = X @ V_items + V_users
        Q = (X ** 2) @ (V_items ** 2) + V_users ** 2
        linear = float(self.params["b"]) + X @ W[:nf] + W[rows]
        pred = linear + 0.5 * np.sum(S ** 2 - Q, axis=1)
        return pred, {"X": X, "rows": rows, "S": S, "V_users": V_users}

    def backward_batch(self, cache: Dict[str, np.ndarray], dpred: np.ndarray) -> Dict[str, np.ndarray]:
        nf = self.n_features
        X, rows, S = cache["X"], cache["rows"], cache["S"]
        V_items = self.params["V"][:nf]

        dW = np.zeros(self.n_inputs)
        dW[:nf] = X.T @ dpred
        np.add.at(dW, rows, dpred)

        dV = np.zeros_like(self.params["V"])
        dV[:nf] = X.T @ (dpred[:, None] * S) - V_items * ((X ** 2).T @ dpred)[:, None]
        # 用户 one-hot 分量恒为1
        np.add.at(dV, rows, dpred[:, None] * (S - cache["V_users"]))
        return {"b": np.array(dpred.sum()), "W": dW, "V": dV}

    def embedding_of(self, u: int) -> np.ndarray:
        """用户对应的 V 行后接该用户的偏置 W 元素，长度 z+1"""
        u = self.check_user(u)
        row = self.n_features + u
        return np.append(self.params["V"][row], self.params["W"][row])

    def sensitivity(self, u: int, x: Optional[np.ndarray] = None) -> np.ndarray:
        """物品特征上的 ∂ŷ/∂x_i = W_i + Σ_f v_if (s_f - v_if x_i)"""
        if x is None:
            raise UsageError("FM 的输入敏感度依赖于输入，必须提供 x")
        x = self.check_features(x)
        u = self.check_user(u)
        nf = self.n_features
        V_items = self.params["V"][:nf]
        s = x @ V_items + self.params["V"][nf + u]
        return self.params["W"][:nf] + V_items @ s - np.sum(V_items ** 2, axis=1) * x

    def dense_input(self, x: np.ndarray, u: int) -> np.ndarray:
        """构造显式的 [x; onehot(u)] 向量（仅用于核对和分析）"""
        x = self.check_features(x)
        u = self.check_user(u)
        full = np.zeros(self.n_inputs)
        full[: self.n_features] = x
        full[self.n_features + u] = 1.0
        return full

    def _check_dense(self, x_full: np.ndarray) -> np.ndarray:
        x_full = np.asarray(x_full, dtype=np.float64)
        if x_full.shape != (self.n_inputs,):
            raise ShapeMismatchError(x_full.shape, (self.n_inputs,), op="FM 完整输入")
        if not np.all(np.isfinite(x_full)):
            raise NonFiniteError("x")
        return x_full

    def linear_part(self, x_full: np.ndarray) -> float:
        x_full = self._check_dense(x_full)
        return float(self.params["b"]) + float(self.params["W"] @ x_full)

    @classmethod
    def count_params(cls, z: int, n_features: int = DEFAULT_N_FEATURES, n_users: int = DEFAULT_N_USERS) -> int:
        n = n_features + n_users
        return 1 + n + n * z


def fm_forward_dense(model: FactorizationMachineModel, x_full: np.ndarray) -> float:
    """在显式完整输入上逐对计算 FM 交互项（严格 i<j），O(n²)，用于核对 forward 的 O(n·z) 形式"""
    x_full = model._check_dense(x_full)
    V = model.params["V"]
    rows, cols = np.triu_indices(len(x_full), k=1)
    pairwise = np.einsum("pk,pk->p", V[rows], V[cols])
    return model.linear_part(x_full) + float(np.sum(x_full[rows] * x_full[cols] * pairwise))


def fm_t_forward(model: FactorizationMachineModel, x_full: np.ndarray, path: str = "factored") -> float:
    """FM_T：交互项对 j 的求和覆盖全部 1..n（含对角线）

    path="factored" 按 (xV)Vᵀx 计算，path="gram" 先算 T = VVᵀ 再算 xᵀTx。
    """
    x_full = model._check_dense(x_full)
    V = model.params["V"]
    if path == "factored":
        xv = x_full @ V
        interaction = float(xv @ (V.T @ x_full))
    elif path == "gram":
        T = V @ V.T
        interaction = float(x_full @ T @ x_full)
    else:
        raise UsageError(f"未知的 FM_T 计算路径: {path}，可选 {FM_T_PATHS}")
    return model.linear_part(x_full) + interaction
