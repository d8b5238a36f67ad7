import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from fusion_lab.data.genome import FeatureCatalog
from fusion_lab.data.movielens import RatingRecord, check_disjoint
from fusion_lab.errors import DatasetIntegrityError, UsageError
from fusion_lab.numerics import SeededRng

logger = logging.getLogger(__name__)

TUNING_FOLD_ID = 0


@dataclass
class RatingArrays:
    """评分的数组形式：用户下标、原始物品ID、评分"""
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray

    def __len__(self) -> int:
        return int(self.ratings.shape[0])


def to_arrays(records: Sequence[RatingRecord], user_index: Mapping[int, int]) -> RatingArrays:
    """把评分记录转换为数组，用户ID映射为连续下标"""
    try:
        users = np.array([user_index[r.user_id] for r in records], dtype=np.int64)
    except KeyError as e:
        raise DatasetIntegrityError(f"用户 {e.args[0]} 不在用户下标映射中") from None
    items = np.array([r.item_id for r in records], dtype=np.int64)
    ratings = np.array([r.rating for r in records], dtype=np.float64)
    return RatingArrays(users, items, ratings)


@dataclass
class Fold:
    """一折训练/测试划分以及连续的用户/物品下标"""
    fold_id: int
    train: List[RatingRecord]
    test: List[RatingRecord]
    user_index: Dict[int, int]
    item_index: Dict[int, int]
    notes: Dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_records(cls, fold_id: int, train: List[RatingRecord], test: List[RatingRecord],
                     item_ids: Optional[Sequence[int]] = None, user_ids: Optional[Sequence[int]] = None) -> "Fold":
        if user_ids is None:
            user_ids = {r.user_id for r in train} | {r.user_id for r in test}
        if item_ids is None:
            item_ids = {r.item_id for r in train} | {r.item_id for r in test}
        user_index = {u: idx for idx, u in enumerate(sorted(user_ids))}
        item_index = {i: idx for idx, i in enumerate(sorted(item_ids))}
        return cls(fold_id, list(train), list(test), user_index, item_index)

    @property
    def n_users(self) -> int:
        return len(self.user_index)

    @property
    def n_items(self) -> int:
        return len(self.item_index)

    @property
    def user_ids(self) -> List[int]:
        """按下标排列的原始用户ID"""
        return sorted(self.user_index, key=self.user_index.get)

    def train_arrays(self) -> RatingArrays:
        return to_arrays(self.train, self.user_index)

    def test_arrays(self) -> RatingArrays:
        return to_arrays(self.test, self.user_index)

    def validate(self, catalog: Optional[FeatureCatalog] = None):
        """检查训练/测试不重叠、用户下标是双射、物品都有特征"""
        check_disjoint(self.train, self.test, f"fold {self.fold_id}")
        if sorted(self.user_index.values()) != list(range(self.n_users)):
            raise DatasetIntegrityError(f"fold {self.fold_id}: 用户下标不是 0..{self.n_users - 1} 的双射")
        if catalog is not None:
            missing = {r.item_id for r in self.train + self.test if r.item_id not in catalog}
            if missing:
                raise DatasetIntegrityError(f"fold {self.fold_id}: {len(missing)} 部电影没有特征向量")


def build_folds(folds: List[Fold], link_map: Mapping[int, np.ndarray]) -> List[Fold]:
    """去掉未链接电影的评分，重建连续下标；用户集合保持不变"""
    if not link_map:
        raise UsageError("链接结果为空，无法构建数据集")
    linked_items = sorted(link_map)
    result = []
    for fold in folds:
        train = [r for r in fold.train if r.item_id in link_map]
        test = [r for r in fold.test if r.item_id in link_map]
        if not test:
            raise DatasetIntegrityError(f"fold {fold.fold_id}: 过滤后测试集为空")
        built = Fold.from_records(fold.fold_id, train, test, item_ids=linked_items, user_ids=fold.user_index.keys())
        built.notes["dropped_train"] = str(len(fold.train) - len(train))
        built.notes["dropped_test"] = str(len(fold.test) - len(test))
        check_disjoint(built.train, built.test, f"fold {fold.fold_id}")
        logger.info(
            f"fold {fold.fold_id}: 训练 {len(train)} 条（丢弃 {len(fold.train) - len(train)}），"
            f"测试 {len(test)} 条（丢弃 {len(fold.test) - len(test)}）"
        )
        result.append(built)
    return result


def catalog_from_link(link_map: Mapping[int, np.ndarray], tag_names: List[str],
                      titles: Optional[Mapping[int, str]] = None) -> FeatureCatalog:
    """以 ML-100k 电影ID为键的特征目录"""
    return FeatureCatalog.from_mapping(tag_names, link_map, titles)


def make_tuning_split(fold: Fold, fraction: float = 0.1, seed: int = 0) -> Fold:
    """从训练集中按种子划出验证集，用于超参数搜索；与该折的测试集不相交"""
    if not 0.0 < fraction < 1.0:
        raise UsageError(f"验证集比例必须在 (0, 1) 内: {fraction}")
    n = len(fold.train)
    n_valid = max(1, int(round(n * fraction)))
    order = SeededRng(seed).permutation(n)
    valid_rows = set(order[:n_valid].tolist())
    train = [r for row, r in enumerate(fold.train) if row not in valid_rows]
    valid = [r for row, r in enumerate(fold.train) if row in valid_rows]
    split = Fold(TUNING_FOLD_ID, train, valid, dict(fold.user_index), dict(fold.item_index))
    split.notes["tuning_split"] = f"fold{fold.fold_id}.train 的 {fraction:g} 验证子集 (seed={seed})"
    return split
