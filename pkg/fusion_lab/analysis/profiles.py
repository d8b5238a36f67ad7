"""
张量融合模型的簇中心画像：通用用户偏置、输入敏感度变化最大/最小的标签、评分最高/最低的电影
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from fusion_lab.data.genome import FeatureCatalog
from fusion_lab.errors import UsageError
from fusion_lab.models.base import Model
from fusion_lab.models.tensor import TensorFusionModel

logger = logging.getLogger(__name__)

N_TAGS_REPORTED = 5
N_MOVIES_REPORTED = 3

Scored = Tuple[str, float]


@dataclass
class CentroidProfile:
    cluster_id: int
    bias: float
    top_features: List[Scored] = field(default_factory=list)
    bottom_features: List[Scored] = field(default_factory=list)
    top_movies: List[Scored] = field(default_factory=list)
    bottom_movies: List[Scored] = field(default_factory=list)
    size: int = 0


def _rank_tags(s: np.ndarray, tag_names: Sequence[str], count: int) -> Tuple[List[Scored], List[Scored]]:
    order = np.lexsort((np.arange(len(s)), -s))
    top = [(tag_names[i], float(s[i])) for i in order[:count]]
    bottom = [(tag_names[i], float(s[i])) for i in order[::-1][:count]]
    return top, bottom


def _rank_movies(scores: np.ndarray, titles: List[str], count: int) -> Tuple[List[Scored], List[Scored]]:
    top = sorted(zip(titles, scores.tolist()), key=lambda ts: (-ts[1], ts[0]))[:count]
    bottom = sorted(zip(titles, scores.tolist()), key=lambda ts: (ts[1], ts[0]))[:count]
    return top, bottom


def centroid_profile(model: Model, centroid: np.ndarray, catalog: FeatureCatalog,
                     tag_names: Optional[Sequence[str]] = None, titles: Optional[Mapping[int, str]] = None,
                     cluster_id: int = 0, n_tags: int = N_TAGS_REPORTED,
                     n_movies: int = N_MOVIES_REPORTED) -> CentroidProfile:
    """以簇中心代替用户嵌入，读出偏置、敏感度变化和电影排名"""
    if not isinstance(model, TensorFusionModel):
        raise UsageError(
            f"簇中心画像只适用于张量融合模型，当前为 {model.kind.value}；"
            "其他模型请使用 sensitivity(model, u, x) 计算输入敏感度"
        )
    tag_names = list(tag_names if tag_names is not None else catalog.tag_names)
    if len(tag_names) != model.n_features:
        raise UsageError(f"标签名数量 {len(tag_names)} 与特征维度 {model.n_features} 不一致")
    if len(tag_names) < 2 * n_tags:
        raise UsageError(f"标签数 {len(tag_names)} 不足以给出互不相交的前/后 {n_tags} 个")
    if len(catalog) < n_movies:
        raise UsageError(f"电影目录只有 {len(catalog)} 部，少于 {n_movies}")
    titles = titles if titles is not None else catalog.titles

    bias = model.user_bias(centroid)
    top_features, bottom_features = _rank_tags(model.sensitivity_change(centroid), tag_names, n_tags)
    scores = model.score_items(catalog.matrix, centroid)
    movie_titles = [titles.get(int(i), str(int(i))) for i in catalog.ids]
    top_movies, bottom_movies = _rank_movies(scores, movie_titles, n_movies)
    return CentroidProfile(cluster_id, bias, top_features, bottom_features, top_movies, bottom_movies)


def profiles_frame(profiles: Sequence[CentroidProfile]) -> pd.DataFrame:
    def names(items: List[Scored]) -> str:
        return "; ".join(name for name, _ in items)

    return pd.DataFrame([
        {
            "cluster": p.cluster_id,
            "size": p.size,
            "bias": p.bias,
            "top_features": names(p.top_features),
            "top_movies": names(p.top_movies),
            "bottom_features": names(p.bottom_features),
            "bottom_movies": names(p.bottom_movies),
        }
        for p in profiles
    ])


def format_profiles(profiles: Sequence[CentroidProfile]) -> str:
    """对齐的文本表格：簇、偏置、前/后标签、前/后电影"""
    blocks = []
    for p in profiles:
        lines = [f"cluster {p.cluster_id}  (users={p.size})  bias={p.bias:+.4f}"]
        columns = [
            ("top features", p.top_features),
            ("top movies", p.top_movies),
            ("bottom features", p.bottom_features),
            ("bottom movies", p.bottom_movies),
        ]
        for label, items in columns:
            lines.append(f"  {label:<16}" + " | ".join(f"{name} ({score:+.3f})" for name, score in items))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def save_profiles(profiles: Sequence[CentroidProfile], directory: Union[str, Path]) -> Tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / "profiles.csv"
    text_path = directory / "profiles.txt"
    profiles_frame(profiles).to_csv(csv_path, index=False, float_format="%.17g", lineterminator="\n")
    text_path.write_text(format_profiles(profiles), encoding="utf-8")
    return csv_path, text_path
