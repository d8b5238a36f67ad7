"""
测试夹具：在 tmp_path 中生成小型的 MovieLens 格式数据集

ML-100k 部分有 20 个用户、30 部电影和官方格式的五折划分；
ML-20M 部分有 12 个基因组标签。电影 27/28 标题相同（别名），
29 没有基因组分数，30 在 ML-20M 中找不到。
"""

import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np
import pytest

from fusion_lab.data.movielens import RatingRecord

N_USERS = 20
N_MOVIES = 30
N_TAGS = 12
RATINGS_PER_USER = 18
N_FOLDS = 5

ALIAS_TITLE = "Chasing Amy (1997)"
ARTICLE_TITLE_100K = "Usual Suspects, The (1995)"
ARTICLE_TITLE_20M = "The Usual Suspects (1995)"


def pytest_configure(config):
    config.addinivalue_line("markers", "movielens: 需要真实的 MovieLens 数据（FUSION_LAB_ML100K/FUSION_LAB_ML20M）")
    config.addinivalue_line("markers", "asyncio: 异步测试")


def pytest_collection_modifyitems(config, items):
    if os.environ.get("FUSION_LAB_ML100K") and os.environ.get("FUSION_LAB_ML20M"):
        return
    skip = pytest.mark.skip(reason="未设置 FUSION_LAB_ML100K / FUSION_LAB_ML20M")
    for item in items:
        if "movielens" in item.keywords:
            item.add_marker(skip)


@dataclass
class SyntheticMovieLens:
    ml100k: Path
    ml20m: Path
    ratings: List[RatingRecord]
    folds: List[Tuple[List[RatingRecord], List[RatingRecord]]]

    @property
    def n_users(self) -> int:
        return N_USERS

    @property
    def n_tags(self) -> int:
        return N_TAGS


def ml100k_title(movie_id: int) -> str:
    if movie_id == 26:
        return ARTICLE_TITLE_100K
    if movie_id in (27, 28):
        return ALIAS_TITLE
    if movie_id == 29:
        return "Genome Less (1994)"
    if movie_id == 30:
        return "Unlinked Film (1990)"
    return f"Movie {movie_id:02d} ({1990 + movie_id % 8})"


def _synthetic_ratings(rng: np.random.Generator) -> List[RatingRecord]:
    user_taste = rng.normal(0.0, 1.0, size=(N_USERS, 3))
    movie_style = rng.normal(0.0, 1.0, size=(N_MOVIES, 3))
    records = []
    for u in range(N_USERS):
        movies = np.sort(rng.choice(N_MOVIES, size=RATINGS_PER_USER, replace=False))
        for m in movies:
            score = 3.0 + 0.8 * float(user_taste[u] @ movie_style[m]) + rng.normal(0.0, 0.5)
            records.append(RatingRecord(u + 1, int(m) + 1, float(np.clip(np.rint(score), 1, 5))))
    return records


def _split_folds(records: List[RatingRecord]):
    """每个用户的第 k 条评分进入第 (k mod 5)+1 折的测试集"""
    position = {}
    test_fold = []
    for r in records:
        k = position.get(r.user_id, 0)
        position[r.user_id] = k + 1
        test_fold.append(k % N_FOLDS + 1)
    folds = []
    for fold_id in range(1, N_FOLDS + 1):
        test = [r for r, f in zip(records, test_fold) if f == fold_id]
        train = [r for r, f in zip(records, test_fold) if f != fold_id]
        folds.append((train, test))
    return folds


def _write_ratings(path: Path, records: List[RatingRecord]):
    lines = [f"{r.user_id}\t{r.item_id}\t{int(r.rating)}\t{874965758 + i}" for i, r in enumerate(records)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_ml100k(directory: Path, records: List[RatingRecord], folds) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    items = []
    for movie_id in range(1, N_MOVIES + 1):
        title = ml100k_title(movie_id)
        flags = "|".join(["0"] * 19)
        items.append(f"{movie_id}|{title}|01-Jan-1995||http://example.org/{movie_id}|{flags}")
    (directory / "u.item").write_bytes(("\n".join(items) + "\n").encode("latin-1"))
    _write_ratings(directory / "u.data", records)
    for fold_id, (train, test) in enumerate(folds, start=1):
        _write_ratings(directory / f"u{fold_id}.base", train)
        _write_ratings(directory / f"u{fold_id}.test", test)
    return directory


def write_ml20m(directory: Path, rng: np.random.Generator) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    movies = [(100 + m, ml100k_title(m)) for m in range(1, 27)]
    movies[25] = (126, ARTICLE_TITLE_20M)
    movies += [(127, ALIAS_TITLE), (129, "Genome Less (1994)"), (200, "Extra Film (2015)"),
               (201, "Another Extra (2014)")]
    lines = ["movieId,title,genres"]
    lines += [f'{movie_id},"{title}",Drama' for movie_id, title in movies]
    (directory / "movies.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    tags = ["tagId,tag"] + [f"{t + 1},tag{t:02d}" for t in range(N_TAGS)]
    (directory / "genome-tags.csv").write_text("\n".join(tags) + "\n", encoding="utf-8")

    scores = ["movieId,tagId,relevance"]
    with_genome = [movie_id for movie_id, _ in movies if movie_id != 129]
    for movie_id in with_genome:
        for t in range(N_TAGS):
            scores.append(f"{movie_id},{t + 1},{rng.uniform(0.0, 1.0):.5f}")
    # 只覆盖部分标签的电影会被排除
    for t in range(5):
        scores.append(f"300,{t + 1},0.50000")
    (directory / "genome-scores.csv").write_text("\n".join(scores) + "\n", encoding="utf-8")
    return directory


@pytest.fixture
def movielens(tmp_path) -> SyntheticMovieLens:
    """小型 ML-100k + ML-20M 数据目录"""
    rng = np.random.default_rng(7)
    records = _synthetic_ratings(rng)
    folds = _split_folds(records)
    ml100k = write_ml100k(tmp_path / "ml-100k", records, folds)
    ml20m = write_ml20m(tmp_path / "ml-20m", rng)
    return SyntheticMovieLens(ml100k, ml20m, records, folds)


@pytest.fixture
def prepared_cache(movielens, tmp_path) -> Path:
    """已经 prepare 过的缓存目录"""
    from fusion_lab.harness.experiment import cmd_prepare

    out_dir = tmp_path / "cache"
    cmd_prepare(movielens.ml100k, movielens.ml20m, out_dir)
    return out_dir
