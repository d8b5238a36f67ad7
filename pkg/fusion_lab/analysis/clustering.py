"""
用户嵌入的 k-means 聚类（k-means++ 初始化 + Lloyd 迭代）
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from fusion_lab.errors import UsageError
from fusion_lab.models.base import EmbeddingTable
from fusion_lab.numerics import SeededRng

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 300


@dataclass
class Clustering:
    k: int
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    # 每次分配后的目标函数值
    history: List[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False

    def members(self, cluster_id: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == cluster_id)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)

    def to_frame(self, user_ids: Optional[List[int]] = None) -> pd.DataFrame:
        ids = user_ids if user_ids is not None else list(range(1, len(self.assignments) + 1))
        return pd.DataFrame({"user_id": ids, "cluster": self.assignments})


def _objective(vectors: np.ndarray, centroids: np.ndarray, assignments: np.ndarray) -> float:
    return float(np.sum((vectors - centroids[assignments]) ** 2))


def _seed_centroids(vectors: np.ndarray, k: int, rng: SeededRng) -> np.ndarray:
    """k-means++：首个中心均匀抽取，其余按到最近中心距离的平方加权抽取"""
    n = vectors.shape[0]
    chosen = [int(rng.choice(n, 1)[0])]
    closest = cdist(vectors, vectors[chosen], "sqeuclidean")[:, 0]
    for _ in range(1, k):
        index = rng.weighted_index(closest)
        chosen.append(index)
        closest = np.minimum(closest, cdist(vectors, vectors[[index]], "sqeuclidean")[:, 0])
    return vectors[chosen].copy()


def _repair_empty(vectors: np.ndarray, centroids: np.ndarray, assignments: np.ndarray, k: int) -> np.ndarray:
    """空簇取离自身中心最远的点（来源簇至少保留一个点）"""
    assignments = assignments.copy()
    for cluster in range(k):
        if np.any(assignments == cluster):
            continue
        counts = np.bincount(assignments, minlength=k)
        gaps = np.sum((vectors - centroids[assignments]) ** 2, axis=1)
        gaps[counts[assignments] <= 1] = -1.0
        donor = int(np.argmax(gaps))
        logger.debug(f"簇 {cluster} 为空，移入点 {donor}")
        assignments[donor] = cluster
        centroids[cluster] = vectors[donor]
    return assignments


def kmeans(embeddings: EmbeddingTable, k: int, rng: SeededRng, max_iterations: int = MAX_ITERATIONS) -> Clustering:
    """对嵌入做 k-means，分配不再变化或达到迭代上限时停止"""
    vectors = embeddings.vectors
    if k < 1:
        raise UsageError(f"簇数必须为正: k={k}")
    distinct = np.unique(vectors, axis=0).shape[0]
    if k > distinct:
        raise UsageError(f"簇数 k={k} 超过不同嵌入向量的数量 {distinct}")

    centroids = _seed_centroids(vectors, k, rng)
    assignments = np.argmin(cdist(vectors, centroids, "sqeuclidean"), axis=1)
    assignments = _repair_empty(vectors, centroids, assignments, k)
    history = [_objective(vectors, centroids, assignments)]
    converged = False
    iteration = 0
    for iteration in range(1, max_iterations + 1):
        for cluster in range(k):
            centroids[cluster] = vectors[assignments == cluster].mean(axis=0)
        updated = np.argmin(cdist(vectors, centroids, "sqeuclidean"), axis=1)
        updated = _repair_empty(vectors, centroids, updated, k)
        history.append(_objective(vectors, centroids, updated))
        if np.array_equal(updated, assignments):
            converged = True
            break
        assignments = updated
    if not converged:
        logger.warning(f"k-means 在 {max_iterations} 次迭代内未收敛")

    inertia = _objective(vectors, centroids, assignments)
    logger.info(f"k-means k={k}: {iteration} 次迭代，inertia={inertia:.6f}")
    return Clustering(k, assignments, centroids, inertia, history, iteration, converged)


def sample_clusters(clustering: Clustering, count: int, rng: SeededRng) -> List[int]:
    """无放回抽取 count 个簇编号"""
    if count < 0 or count > clustering.k:
        raise UsageError(f"抽样数量 {count} 必须在 0..{clustering.k} 之间")
    return [int(c) for c in rng.choice(clustering.k, count)]
