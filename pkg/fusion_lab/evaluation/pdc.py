"""
Pair-Distance Correlation (PDC)

对所有至少有 t 个共同评分物品的用户对，计算评分行为距离 d_U 和嵌入欧氏距离 d_E，
返回两列数值的 Pearson 相关系数。用户对按下标 i<j 枚举，顺序与 scipy 的压缩距离向量一致。
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.spatial.distance import pdist
from scipy.stats import pearsonr

from fusion_lab.data.folds import RatingArrays, to_arrays
from fusion_lab.data.movielens import RatingRecord
from fusion_lab.errors import (
    DatasetIntegrityError,
    PdcUndefinedError,
    ShapeMismatchError,
    UndefinedCorrelationError,
    UsageError,
)
from fusion_lab.models.base import EmbeddingTable

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = (1, 2, 4, 8)


class UserDistance(str, Enum):
    """用户空间上的距离 d_U"""
    MEAN_SQUARED_DIFFERENCE = "mean_squared_difference"
    MEAN_ABSOLUTE_DIFFERENCE = "mean_absolute_difference"


class EmbeddingDistance(str, Enum):
    """嵌入空间上的距离 d_E"""
    EUCLIDEAN = "euclidean"


class RatingScope(str, Enum):
    """d_U 使用的评分范围"""
    TEST = "test"
    TRAIN_AND_TEST = "train+test"


class PdcConfig(BaseModel):
    """PDC 配置"""
    model_config = ConfigDict(frozen=True)

    threshold: int = Field(4, ge=1)
    d_e: EmbeddingDistance = EmbeddingDistance.EUCLIDEAN
    d_u: UserDistance = UserDistance.MEAN_SQUARED_DIFFERENCE
    rating_scope: RatingScope = RatingScope.TEST


@dataclass
class PdcResult:
    threshold: int
    score: Optional[float]
    pair_count: int
    error: Optional[str] = None

    @property
    def available(self) -> bool:
        return self.score is not None


def pearson(a: Sequence[float], b: Sequence[float]) -> float:
    """Pearson 相关系数；方差为零时报错而不是返回0"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeMismatchError(a.shape, b.shape, op="pearson")
    if a.size < 2:
        raise UndefinedCorrelationError(f"至少需要 2 个样本，实际 {a.size} 个")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise UndefinedCorrelationError("输入方差为零，相关系数无定义")
    r = float(pearsonr(a, b)[0])
    return float(np.clip(r, -1.0, 1.0))


def _pair_key(ratings: RatingArrays):
    pairs = ratings.users.astype(np.int64) * (int(ratings.items.max()) + 1) + ratings.items.astype(np.int64)
    unique, counts = np.unique(pairs, return_counts=True)
    if np.any(counts > 1):
        dup = int(unique[counts > 1][0])
        raise DatasetIntegrityError(f"同一 (用户, 物品) 存在重复评分: pair_key={dup}")


class PairStatistics:
    """所有用户对的共同评分数和 d_U（按 i<j 的压缩顺序存储）"""

    def __init__(self, ratings: RatingArrays, n_users: int,
                 d_u: UserDistance = UserDistance.MEAN_SQUARED_DIFFERENCE):
        self.n_users = int(n_users)
        self.d_u = UserDistance(d_u)
        if len(ratings) and int(ratings.users.max()) >= self.n_users:
            raise UsageError(f"评分中的用户下标超出 0..{self.n_users - 1}")
        if len(ratings):
            _pair_key(ratings)

        items, item_col = np.unique(ratings.items, return_inverse=True)
        shape = (self.n_users, len(items))
        indicator = np.zeros(shape)
        indicator[ratings.users, item_col] = 1.0
        counts = indicator @ indicator.T

        if self.d_u is UserDistance.MEAN_SQUARED_DIFFERENCE:
            values = np.zeros(shape)
            values[ratings.users, item_col] = ratings.ratings
            squares = values ** 2
            cross = values @ values.T
            sums = squares @ indicator.T + indicator @ squares.T - 2.0 * cross
        else:
            # 按评分等级拆分指示矩阵：Σ_a M_a · (Σ_b |a-b| M_b)ᵀ
            levels = np.unique(ratings.ratings)
            level_masks = []
            for level in levels:
                mask = np.zeros(shape)
                rows = ratings.ratings == level
                mask[ratings.users[rows], item_col[rows]] = 1.0
                level_masks.append(mask)
            sums = np.zeros((self.n_users, self.n_users))
            for a, mask_a in zip(levels, level_masks):
                weighted = sum(abs(a - b) * mask_b for b, mask_b in zip(levels, level_masks))
                sums += mask_a @ weighted.T

        upper = np.triu_indices(self.n_users, k=1)
        self.common = np.rint(counts[upper]).astype(np.int64)
        with np.errstate(divide="ignore", invalid="ignore"):
            self.distance = np.where(self.common > 0, sums[upper] / np.maximum(self.common, 1), np.nan)

    def qualifying(self, threshold: int) -> np.ndarray:
        """共同评分数 ≥ threshold 的用户对掩码"""
        if threshold < 1:
            raise UsageError(f"阈值必须 ≥ 1: {threshold}")
        return self.common >= threshold

    def pair_count(self, threshold: int) -> int:
        return int(self.qualifying(threshold).sum())


def embedding_distances(embeddings: EmbeddingTable, n_users: int,
                        d_e: EmbeddingDistance = EmbeddingDistance.EUCLIDEAN) -> np.ndarray:
    """嵌入之间的压缩距离向量（i<j 顺序）"""
    if embeddings.n_users < n_users:
        raise UsageError(f"嵌入只覆盖 {embeddings.n_users} 个用户，评分涉及 {n_users} 个")
    return pdist(embeddings.vectors[:n_users], EmbeddingDistance(d_e).value)


def _score(stats: PairStatistics, distances: np.ndarray, threshold: int) -> PdcResult:
    mask = stats.qualifying(threshold)
    count = int(mask.sum())
    if count < 2:
        raise PdcUndefinedError(threshold, count, "合格用户对少于 2 个")
    try:
        score = pearson(distances[mask], stats.distance[mask])
    except UndefinedCorrelationError as e:
        raise PdcUndefinedError(threshold, count, str(e)) from e
    return PdcResult(threshold, score, count)


def _as_arrays(ratings, user_index: Optional[Mapping[int, int]]) -> RatingArrays:
    if isinstance(ratings, RatingArrays):
        return ratings
    if user_index is None:
        raise UsageError("评分记录列表需要同时提供 user_index")
    return to_arrays(list(ratings), user_index)


def pdc(embeddings: EmbeddingTable, test_ratings, cfg: PdcConfig = PdcConfig(),
        user_index: Optional[Mapping[int, int]] = None) -> PdcResult:
    """计算单个阈值下的 PDC，返回分数和用户对数量"""
    ratings = _as_arrays(test_ratings, user_index)
    stats = PairStatistics(ratings, embeddings.n_users, cfg.d_u)
    return _score(stats, embedding_distances(embeddings, stats.n_users, cfg.d_e), cfg.threshold)


def pdc_sweep(embeddings: EmbeddingTable, test_ratings, thresholds: Sequence[int] = DEFAULT_THRESHOLDS,
              d_e: EmbeddingDistance = EmbeddingDistance.EUCLIDEAN,
              d_u: UserDistance = UserDistance.MEAN_SQUARED_DIFFERENCE,
              user_index: Optional[Mapping[int, int]] = None,
              stats: Optional[PairStatistics] = None) -> Dict[int, PdcResult]:
    """按多个阈值计算 PDC；单个阈值失败时记录并继续"""
    if not thresholds:
        raise UsageError("阈值列表不能为空")
    if stats is None:
        stats = PairStatistics(_as_arrays(test_ratings, user_index), embeddings.n_users, d_u)
    distances = embedding_distances(embeddings, stats.n_users, d_e)
    results = {}
    for t in thresholds:
        try:
            results[t] = _score(stats, distances, t)
        except PdcUndefinedError as e:
            logger.warning(str(e))
            results[t] = PdcResult(t, None, e.pair_count, str(e))
    return results


def user_distance(u_i: int, u_j: int, ratings: Sequence[RatingRecord], t: int,
                  d_u: UserDistance = UserDistance.MEAN_SQUARED_DIFFERENCE) -> Optional[float]:
    """两个用户基于共同评分物品的距离；共同物品少于 t 个时返回 None"""
    by_user: Dict[int, Dict[int, float]] = {u_i: {}, u_j: {}}
    for r in ratings:
        if r.user_id in by_user:
            if r.item_id in by_user[r.user_id]:
                raise DatasetIntegrityError(f"用户 {r.user_id} 对物品 {r.item_id} 有重复评分")
            by_user[r.user_id][r.item_id] = r.rating
    common = sorted(set(by_user[u_i]) & set(by_user[u_j]))
    if len(common) < t:
        return None
    gaps = np.array([by_user[u_i][k] - by_user[u_j][k] for k in common])
    if UserDistance(d_u) is UserDistance.MEAN_ABSOLUTE_DIFFERENCE:
        return float(np.mean(np.abs(gaps)))
    return float(np.mean(gaps ** 2))


def pdc_bruteforce(embeddings: EmbeddingTable, ratings: RatingArrays, cfg: PdcConfig = PdcConfig()) -> PdcResult:
    """逐对枚举的朴素实现（O(用户²·物品)），用于核对向量化实现"""
    by_user: List[Dict[int, float]] = [dict() for _ in range(embeddings.n_users)]
    for u, item, r in zip(ratings.users, ratings.items, ratings.ratings):
        by_user[int(u)][int(item)] = float(r)
    l_e, l_u = [], []
    for i in range(embeddings.n_users):
        for j in range(i + 1, embeddings.n_users):
            common = [k for k in by_user[i] if k in by_user[j]]
            if len(common) < cfg.threshold:
                continue
            gaps = [by_user[i][k] - by_user[j][k] for k in common]
            if cfg.d_u is UserDistance.MEAN_ABSOLUTE_DIFFERENCE:
                l_u.append(sum(abs(g) for g in gaps) / len(gaps))
            else:
                l_u.append(sum(g * g for g in gaps) / len(gaps))
            l_e.append(float(np.linalg.norm(embeddings.vectors[i] - embeddings.vectors[j])))
    if len(l_e) < 2:
        raise PdcUndefinedError(cfg.threshold, len(l_e), "合格用户对少于 2 个")
    try:
        return PdcResult(cfg.threshold, pearson(l_e, l_u), len(l_e))
    except UndefinedCorrelationError as e:
        raise PdcUndefinedError(cfg.threshold, len(l_e), str(e)) from e
