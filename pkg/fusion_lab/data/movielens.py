"""
MovieLens-100k 读取：u.data 评分、官方五折划分 u1..u5 和 u.item 电影目录
"""

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import pandas as pd

from fusion_lab.errors import DataFormatError, DatasetIntegrityError, MissingInputError

logger = logging.getLogger(__name__)

RATING_MIN = 1
RATING_MAX = 5
N_OFFICIAL_FOLDS = 5
_PANDAS_LINE = re.compile(r"line (\d+)")


@dataclass(frozen=True)
class RatingRecord:
    """一条 (用户, 物品, 评分) 观测，使用原始ID"""
    user_id: int
    item_id: int
    rating: float

    def __post_init__(self):
        if self.user_id <= 0 or self.item_id <= 0:
            raise ValueError(f"用户ID和物品ID必须为正: {self.user_id}, {self.item_id}")
        if not RATING_MIN <= self.rating <= RATING_MAX:
            raise ValueError(f"评分 {self.rating} 超出范围 [{RATING_MIN}, {RATING_MAX}]")

    @property
    def pair(self) -> Tuple[int, int]:
        return self.user_id, self.item_id


def _read_table(path: Path, sep: str, encoding: str = "utf-8") -> Optional[pd.DataFrame]:
    """按字符串读取无表头表格；空文件返回 None"""
    if not path.exists():
        raise MissingInputError(str(path))
    try:
        return pd.read_csv(path, sep=sep, header=None, dtype=str, keep_default_na=False,
                           encoding=encoding, quoting=3)
    except pd.errors.EmptyDataError:
        return None
    except pd.errors.ParserError as e:
        match = _PANDAS_LINE.search(str(e))
        raise DataFormatError(str(path), int(match.group(1)) if match else None, f"字段数量错误: {e}") from e


def read_rating_file(path: Union[str, Path]) -> List[RatingRecord]:
    """读取 u.data 格式的文件（user\\titem\\trating\\ttimestamp）"""
    path = Path(path)
    df = _read_table(path, sep="\t")
    if df is None:
        logger.warning(f"{path} 为空文件")
        return []
    if df.shape[1] != 4:
        raise DataFormatError(str(path), 1, f"期望 4 个字段，实际 {df.shape[1]} 个")

    numeric = df.apply(pd.to_numeric, errors="coerce")
    bad_rows = numeric[[0, 1, 2]].isna().any(axis=1) | (df == "").any(axis=1)
    if bad_rows.any():
        line_no = int(bad_rows.to_numpy().nonzero()[0][0]) + 1
        raise DataFormatError(str(path), line_no, f"字段缺失或不是整数: {df.iloc[line_no - 1].tolist()}")

    ratings = numeric[2]
    not_integer = ratings != ratings.round()
    out_of_range = (ratings < RATING_MIN) | (ratings > RATING_MAX)
    for mask, reason in ((not_integer, "评分不是整数"), (out_of_range, "评分超出范围 1-5")):
        if mask.any():
            line_no = int(mask.to_numpy().nonzero()[0][0]) + 1
            raise DataFormatError(str(path), line_no, f"{reason}: {ratings.iloc[line_no - 1]}")
    ids = numeric[[0, 1]]
    bad_ids = ((ids <= 0) | (ids != ids.round())).any(axis=1).to_numpy()
    if bad_ids.any():
        line_no = int(bad_ids.nonzero()[0][0]) + 1
        raise DataFormatError(str(path), line_no, "用户ID或物品ID必须为正整数")

    return [
        RatingRecord(int(u), int(i), float(r))
        for u, i, r in zip(numeric[0].to_numpy(), numeric[1].to_numpy(), ratings.to_numpy())
    ]


def load_ratings(path: Union[str, Path]) -> List[RatingRecord]:
    """读取 ML-100k 目录下的 u.data"""
    records = read_rating_file(Path(path) / "u.data")
    n_users = len({r.user_id for r in records})
    n_items = len({r.item_id for r in records})
    logger.info(f"读取 {len(records)} 条评分，{n_users} 个用户，{n_items} 部电影")
    return records


def check_disjoint(train: List[RatingRecord], test: List[RatingRecord], label: str):
    """训练集和测试集的 (用户, 物品) 对不能重叠"""
    overlap = {r.pair for r in train} & {r.pair for r in test}
    if overlap:
        sample = sorted(overlap)[:5]
        raise DatasetIntegrityError(f"{label}: 训练集与测试集有 {len(overlap)} 个重叠的 (用户, 物品) 对，例如 {sample}")


def load_official_folds(path: Union[str, Path]):
    """读取官方五折划分 u1.base/u1.test … u5.base/u5.test（链接前）"""
    from fusion_lab.data.folds import Fold

    path = Path(path)
    folds = []
    for fold_id in range(1, N_OFFICIAL_FOLDS + 1):
        base_path, test_path = path / f"u{fold_id}.base", path / f"u{fold_id}.test"
        for required in (base_path, test_path):
            if not required.exists():
                raise MissingInputError(str(required), "官方五折划分文件缺失")
        train = read_rating_file(base_path)
        test = read_rating_file(test_path)
        check_disjoint(train, test, f"u{fold_id}")
        folds.append(Fold.from_records(fold_id, train, test))
        logger.info(f"折 {fold_id}: 训练 {len(train)} 条，测试 {len(test)} 条")
    return folds


def load_item_catalog(path: Union[str, Path]) -> Dict[int, Tuple[str, str]]:
    """读取 u.item，返回 {电影ID: (标题, 上映日期)}"""
    path = Path(path)
    df = _read_table(path, sep="|", encoding="latin-1")
    if df is None:
        return {}
    if df.shape[1] < 3:
        raise DataFormatError(str(path), 1, f"期望至少 3 个字段，实际 {df.shape[1]} 个")
    catalog = {}
    for line_no, (raw_id, title, release) in enumerate(zip(df[0], df[1], df[2]), start=1):
        try:
            item_id = int(raw_id)
        except ValueError:
            raise DataFormatError(str(path), line_no, f"电影ID不是整数: {raw_id!r}") from None
        catalog[item_id] = (title.strip(), release.strip())
    return catalog
