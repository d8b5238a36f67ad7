"""
稠密线性代数与可复现随机数

向量和矩阵统一用 float64 的 numpy 数组表示（行优先），
随机数使用 numpy 的 PCG64 生成器，相同种子在任何平台上产生相同序列。
"""

import logging
from typing import Sequence, Union

import numpy as np

from fusion_lab.errors import NonFiniteError, ShapeMismatchError, UsageError

logger = logging.getLogger(__name__)

DenseVector = np.ndarray
DenseMatrix = np.ndarray

RNG_ALGORITHM = "numpy.PCG64"
_UINT64_MASK = (1 << 64) - 1


def as_vector(values: Union[Sequence[float], np.ndarray], name: str = "vector") -> DenseVector:
    """转换为一维 float64 向量并检查有限性"""
    vec = np.array(values, dtype=np.float64, copy=True).reshape(-1)
    ensure_finite(vec, name)
    return vec


def as_matrix(values: Union[Sequence[Sequence[float]], np.ndarray], name: str = "matrix") -> DenseMatrix:
    """转换为二维 float64 矩阵（行优先）并检查有限性"""
    mat = np.array(values, dtype=np.float64, copy=True)
    if mat.ndim != 2:
        raise ShapeMismatchError(mat.shape, ("rows", "cols"), op=name)
    ensure_finite(mat, name)
    return np.ascontiguousarray(mat)


def ensure_finite(array: np.ndarray, name: str) -> None:
    """数组中出现 NaN/Inf 时报错"""
    if not np.all(np.isfinite(array)):
        bad = int(np.size(array) - np.count_nonzero(np.isfinite(array)))
        raise NonFiniteError(name, f"{bad} 个元素非有限")


def matvec(m: DenseMatrix, v: DenseVector) -> DenseVector:
    """矩阵乘向量"""
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ShapeMismatchError(m.shape, v.shape, op="matvec")
    result = m @ v
    ensure_finite(result, "matvec")
    return result


def dot(a: DenseVector, b: DenseVector) -> float:
    """向量内积"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise ShapeMismatchError(a.shape, b.shape, op="dot")
    return float(np.dot(a, b))


class SeededRng:
    """带种子的随机数发生器（单一所有者，非线程安全）"""

    algorithm = RNG_ALGORITHM

    def __init__(self, seed: int):
        self.seed = int(seed) & _UINT64_MASK
        self._generator = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, lo: float, hi: float, count: int) -> DenseVector:
        """在 [lo, hi) 上均匀采样"""
        return sample_uniform(self, lo, hi, count)

    def permutation(self, n: int) -> np.ndarray:
        """0..n-1 的随机排列"""
        return self._generator.permutation(int(n))

    def choice(self, n: int, count: int) -> np.ndarray:
        """从 0..n-1 中无放回抽取 count 个"""
        if count > n:
            raise UsageError(f"无法从 {n} 个元素中无放回抽取 {count} 个")
        return self._generator.choice(int(n), size=int(count), replace=False)

    def weighted_index(self, weights: np.ndarray) -> int:
        """按权重抽取一个下标"""
        weights = np.asarray(weights, dtype=np.float64)
        total = float(weights.sum())
        if total <= 0.0:
            return int(self._generator.integers(0, len(weights)))
        return int(self._generator.choice(len(weights), p=weights / total))

    def spawn(self, *keys: int) -> "SeededRng":
        """由 (seed, keys...) 派生独立的子发生器"""
        sequence = np.random.SeedSequence([self.seed, *[int(k) & _UINT64_MASK for k in keys]])
        child_seed = int(sequence.generate_state(2, dtype=np.uint64)[0])
        return SeededRng(child_seed)

    @property
    def generator(self) -> np.random.Generator:
        return self._generator


def sample_uniform(rng: SeededRng, lo: float, hi: float, count: int) -> DenseVector:
    """从 rng 抽取 count 个 [lo, hi) 上的均匀样本"""
    if not lo < hi:
        raise UsageError(f"均匀分布区间非法: lo={lo} 必须小于 hi={hi}")
    if count < 0:
        raise UsageError(f"采样数量不能为负: {count}")
    if count == 0:
        return np.zeros(0, dtype=np.float64)
    values = rng.generator.uniform(lo, hi, size=int(count))
    # 浮点舍入可能恰好得到 hi
    return np.minimum(values, np.nextafter(hi, lo))
