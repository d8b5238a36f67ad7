"""
MovieLens-20M 标签基因组读取，以及 ML-100k 与 ML-20M 电影目录的按标题+年份链接
"""

import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd

from fusion_lab.data.movielens import load_item_catalog
from fusion_lab.errors import DataFormatError, DatasetIntegrityError, MissingInputError, ShapeMismatchError

logger = logging.getLogger(__name__)

EXPECTED_TAG_COUNT = 1128

# 两个目录都把冠词放在标题末尾（"Usual Suspects, The"），但并不一致
_TRAILING_ARTICLE = re.compile(r"^(?P<rest>.+),\s*(?P<article>the|a|an|les|la|le|il|el|das|der|die)$")
_YEAR_AT_END = re.compile(r"\((?P<year>\d{4})\)\s*$")
_PARENTHESES = re.compile(r"\([^)]*\)")
_NON_WORD = re.compile(r"[^0-9a-z ]+")
_SPACES = re.compile(r"\s+")
_RELEASE_YEAR = re.compile(r"(\d{4})\s*$")


@dataclass
class FeatureCatalog:
    """电影的稠密标签特征：每行对应一部电影，每列对应一个基因组标签"""
    tag_names: List[str]
    ids: np.ndarray
    matrix: np.ndarray
    titles: Dict[int, str] = field(default_factory=dict)
    excluded: int = 0

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.matrix = np.ascontiguousarray(np.asarray(self.matrix, dtype=np.float64))
        if self.matrix.ndim != 2 or self.matrix.shape != (len(self.ids), len(self.tag_names)):
            raise ShapeMismatchError(self.matrix.shape, (len(self.ids), len(self.tag_names)), op="FeatureCatalog")
        if self.matrix.size and (not np.all(np.isfinite(self.matrix))
                                 or self.matrix.min() < 0.0 or self.matrix.max() > 1.0):
            raise DatasetIntegrityError("标签相关度必须是 [0, 1] 内的有限值")
        self._row = {int(movie_id): row for row, movie_id in enumerate(self.ids)}
        if len(self._row) != len(self.ids):
            raise DatasetIntegrityError("特征目录中存在重复的电影ID")

    @classmethod
    def from_mapping(cls, tag_names: List[str], mapping: Mapping[int, np.ndarray],
                     titles: Optional[Mapping[int, str]] = None) -> "FeatureCatalog":
        ids = sorted(mapping)
        matrix = np.vstack([mapping[i] for i in ids]) if ids else np.zeros((0, len(tag_names)))
        return cls(list(tag_names), np.array(ids, dtype=np.int64), matrix,
                   {i: titles[i] for i in ids if i in titles} if titles else {})

    @property
    def n_tags(self) -> int:
        return len(self.tag_names)

    @property
    def features(self) -> Dict[int, np.ndarray]:
        """{电影ID: 特征向量}"""
        return {int(movie_id): self.matrix[row] for row, movie_id in enumerate(self.ids)}

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, movie_id: int) -> bool:
        return int(movie_id) in self._row

    def vector(self, movie_id: int) -> np.ndarray:
        return self.matrix[self.row_indices([movie_id])[0]]

    def row_indices(self, movie_ids: Iterable[int]) -> np.ndarray:
        """电影ID转换为矩阵行号；缺少特征时报错"""
        rows = []
        for movie_id in movie_ids:
            row = self._row.get(int(movie_id))
            if row is None:
                raise DatasetIntegrityError(f"电影 {movie_id} 没有特征向量")
            rows.append(row)
        return np.array(rows, dtype=np.int64)


@dataclass
class LinkRow:
    ml100k_id: int
    title: str
    status: str
    ml20m_id: Optional[int] = None


@dataclass
class LinkReport:
    """ML-100k 到 ML-20M 的链接结果"""
    matched: int = 0
    dropped: int = 0
    dropped_titles: List[str] = field(default_factory=list)
    rows: List[LinkRow] = field(default_factory=list)
    # 在 ML-100k 中重复出现的同名电影，链接到同一部 ML-20M 电影
    aliases: List[Tuple[int, int]] = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.matched + self.dropped

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(r.ml100k_id, r.title, r.status, "" if r.ml20m_id is None else r.ml20m_id) for r in self.rows],
            columns=["ml100k_id", "title", "status", "ml20m_id"],
        )

    def save_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, lineterminator="\n")
        return path


def parse_year(title: str, release_date: str = "") -> Optional[int]:
    """从标题末尾的 (NNNN) 解析年份，缺失时退回上映日期"""
    match = _YEAR_AT_END.search(title)
    if match:
        return int(match.group("year"))
    match = _RELEASE_YEAR.search(release_date or "")
    return int(match.group(1)) if match else None


def normalize_title(title: str) -> str:
    """标题归一化：去掉年份和括号中的别名，把末尾冠词移到开头，转小写"""
    text = _YEAR_AT_END.sub("", title.strip())
    text = _PARENTHESES.sub(" ", text)
    text = _SPACES.sub(" ", text).strip().lower()
    match = _TRAILING_ARTICLE.match(text)
    if match:
        text = f"{match.group('article')} {match.group('rest')}"
    text = text.replace("&", " and ")
    text = _NON_WORD.sub(" ", text)
    return _SPACES.sub(" ", text).strip()


def title_key(title: str, release_date: str = "") -> Tuple[str, Optional[int]]:
    return normalize_title(title), parse_year(title, release_date)


def _read_csv(path: Path, **kwargs) -> pd.DataFrame:
    if not path.exists():
        raise MissingInputError(str(path))
    try:
        return pd.read_csv(path, **kwargs)
    except (pd.errors.ParserError, ValueError) as e:
        raise DataFormatError(str(path), None, f"CSV 解析失败: {e}") from e


def load_genome(scores_path: Union[str, Path], tags_path: Union[str, Path]) -> FeatureCatalog:
    """读取 genome-scores.csv 和 genome-tags.csv，返回以 ML-20M 电影ID为键的特征目录"""
    scores_path, tags_path = Path(scores_path), Path(tags_path)
    tags = _read_csv(tags_path, dtype={"tagId": np.int64, "tag": str}, keep_default_na=False)
    if list(tags.columns[:2]) != ["tagId", "tag"]:
        raise DataFormatError(str(tags_path), 1, f"表头应为 tagId,tag，实际 {list(tags.columns)}")
    if tags["tagId"].duplicated().any():
        raise DataFormatError(str(tags_path), None, "存在重复的 tagId")
    tags = tags.sort_values("tagId", kind="mergesort").reset_index(drop=True)
    tag_column = {int(tag_id): col for col, tag_id in enumerate(tags["tagId"])}
    n_tags = len(tag_column)
    if n_tags != EXPECTED_TAG_COUNT:
        logger.warning(f"基因组标签数量为 {n_tags}，不是 {EXPECTED_TAG_COUNT}")

    scores = _read_csv(scores_path, dtype={"movieId": np.int64, "tagId": np.int64, "relevance": np.float64})
    if list(scores.columns[:3]) != ["movieId", "tagId", "relevance"]:
        raise DataFormatError(str(scores_path), 1, f"表头应为 movieId,tagId,relevance，实际 {list(scores.columns)}")
    relevance = scores["relevance"].to_numpy()
    bad = ~np.isfinite(relevance) | (relevance < 0.0) | (relevance > 1.0)
    if bad.any():
        row = int(bad.nonzero()[0][0])
        raise DataFormatError(str(scores_path), row + 2, f"相关度 {relevance[row]} 超出 [0, 1]")
    duplicated = scores.duplicated(["movieId", "tagId"]).to_numpy()
    if duplicated.any():
        row = int(duplicated.nonzero()[0][0])
        raise DataFormatError(str(scores_path), row + 2,
                              f"重复的 (movieId, tagId) = ({scores['movieId'].iat[row]}, {scores['tagId'].iat[row]})")
    unknown = ~scores["tagId"].isin(tag_column.keys()).to_numpy()
    if unknown.any():
        row = int(unknown.nonzero()[0][0])
        raise DataFormatError(str(scores_path), row + 2, f"未知的 tagId {scores['tagId'].iat[row]}")

    counts = scores.groupby("movieId")["tagId"].count()
    complete_ids = np.sort(counts.index[counts == n_tags].to_numpy())
    excluded = int((counts != n_tags).sum())
    if excluded:
        logger.warning(f"{excluded} 部电影的基因组分数不完整，已排除")

    complete = scores[scores["movieId"].isin(complete_ids)]
    movie_row = pd.Series(np.arange(len(complete_ids)), index=complete_ids)
    matrix = np.zeros((len(complete_ids), n_tags))
    matrix[movie_row.loc[complete["movieId"]].to_numpy(),
           complete["tagId"].map(tag_column).to_numpy()] = complete["relevance"].to_numpy()
    logger.info(f"读取基因组特征：{len(complete_ids)} 部电影，{n_tags} 个标签")
    return FeatureCatalog(tags["tag"].tolist(), complete_ids, matrix, excluded=excluded)


def load_ml20m_titles(movies_path: Union[str, Path]) -> Dict[int, str]:
    """读取 ML-20M movies.csv，返回 {movieId: 标题}"""
    movies_path = Path(movies_path)
    movies = _read_csv(movies_path, dtype={"movieId": np.int64, "title": str}, keep_default_na=False)
    if "movieId" not in movies.columns or "title" not in movies.columns:
        raise DataFormatError(str(movies_path), 1, "表头应包含 movieId,title")
    return dict(zip(movies["movieId"].astype(int), movies["title"].str.strip()))


def link_movies(ml100k_items: Union[str, Path], ml20m_movies: Union[str, Path],
                catalog: FeatureCatalog) -> Tuple[Dict[int, np.ndarray], LinkReport]:
    """按 (归一化标题, 年份) 把 ML-100k 电影链接到带基因组特征的 ML-20M 电影"""
    items = load_item_catalog(ml100k_items)
    ml20m_titles = load_ml20m_titles(ml20m_movies)

    candidates: Dict[Tuple[str, Optional[int]], List[int]] = defaultdict(list)
    for movie_id in sorted(ml20m_titles):
        candidates[title_key(ml20m_titles[movie_id])].append(movie_id)

    report = LinkReport()
    link_map: Dict[int, np.ndarray] = {}
    claimed: Dict[int, Tuple[int, str]] = {}
    collisions = []
    for item_id in sorted(items):
        title, release = items[item_id]
        key = title_key(title, release)
        matches = candidates.get(key, []) if key[1] is not None else []
        with_genome = [m for m in matches if m in catalog]
        if not matches:
            status, target = "no_match", None
        elif not with_genome:
            status, target = "no_genome", matches[0]
        else:
            status, target = "matched", with_genome[0]
            if len(with_genome) > 1:
                logger.warning(f"{title} 对应多部 ML-20M 电影 {with_genome}，取ID最小者")

        if status == "matched":
            if target in claimed:
                other_id, other_title = claimed[target]
                if other_title == title:
                    report.aliases.append((other_id, item_id))
                else:
                    collisions.append((other_id, other_title, item_id, title, target))
            claimed.setdefault(target, (item_id, title))
            link_map[item_id] = catalog.vector(target)
            report.matched += 1
        else:
            report.dropped += 1
            report.dropped_titles.append(title)
        report.rows.append(LinkRow(item_id, title, status, target))

    if collisions:
        listing = "; ".join(f"{a} {ta!r} 与 {b} {tb!r} -> {m}" for a, ta, b, tb, m in collisions)
        raise DatasetIntegrityError(f"多部 ML-100k 电影链接到同一部 ML-20M 电影: {listing}")
    if report.aliases:
        logger.info(f"ML-100k 中有 {len(report.aliases)} 对重复条目，共享同一特征向量")
    logger.info(f"链接完成：匹配 {report.matched} 部，丢弃 {report.dropped} 部")
    return link_map, report
