#!/usr/bin/env python3
"""
测试 MovieLens 读取、基因组链接、五折构建和数据集缓存
"""

import numpy as np
import pytest

from fusion_lab.conftest import ALIAS_TITLE, ARTICLE_TITLE_100K, N_TAGS, N_USERS
from fusion_lab.data import (
    available_folds,
    build_folds,
    catalog_from_link,
    dataset_hash,
    link_movies,
    load_dataset,
    load_genome,
    load_official_folds,
    load_ratings,
    make_tuning_split,
    read_rating_file,
    save_dataset,
)
from fusion_lab.data.genome import normalize_title, parse_year, title_key
from fusion_lab.errors import (
    CacheVersionError,
    DataFormatError,
    DatasetIntegrityError,
    MissingInputError,
    UsageError,
)


def _linked(movielens):
    genome = load_genome(movielens.ml20m / "genome-scores.csv", movielens.ml20m / "genome-tags.csv")
    link_map, report = link_movies(movielens.ml100k / "u.item", movielens.ml20m / "movies.csv", genome)
    return genome, link_map, report


def _built(movielens):
    genome, link_map, _ = _linked(movielens)
    folds = build_folds(load_official_folds(movielens.ml100k), link_map)
    return folds, catalog_from_link(link_map, genome.tag_names)


def test_load_ratings(movielens):
    """读取 u.data"""
    records = load_ratings(movielens.ml100k)
    assert len(records) == len(movielens.ratings)
    assert len({r.user_id for r in records}) == N_USERS
    assert records[0] == movielens.ratings[0]


def test_read_rating_file_errors(tmp_path):
    """格式错误的行带行号报错，空文件返回空列表"""
    empty = tmp_path / "empty.data"
    empty.write_text("", encoding="utf-8")
    assert read_rating_file(empty) == []

    out_of_range = tmp_path / "range.data"
    out_of_range.write_text("1\t2\t3\t0\n1\t50\t9\t0\n", encoding="utf-8")
    with pytest.raises(DataFormatError) as excinfo:
        read_rating_file(out_of_range)
    assert excinfo.value.line_no == 2

    missing_field = tmp_path / "missing.data"
    missing_field.write_text("1\t2\t3\t0\n4\t5\n", encoding="utf-8")
    with pytest.raises(DataFormatError) as excinfo:
        read_rating_file(missing_field)
    assert excinfo.value.line_no == 2

    not_integer = tmp_path / "float.data"
    not_integer.write_text("1\t2\t3.5\t0\n", encoding="utf-8")
    with pytest.raises(DataFormatError):
        read_rating_file(not_integer)

    with pytest.raises(MissingInputError):
        read_rating_file(tmp_path / "absent.data")


def test_official_folds(movielens):
    """五折划分的大小与 ID"""
    folds = load_official_folds(movielens.ml100k)
    assert [f.fold_id for f in folds] == [1, 2, 3, 4, 5]
    for fold, (train, test) in zip(folds, movielens.folds):
        assert len(fold.train) == len(train)
        assert len(fold.test) == len(test)
        assert len(fold.train) + len(fold.test) == len(movielens.ratings)


def test_official_folds_missing_and_overlap(movielens):
    """缺少划分文件或训练/测试重叠时报错"""
    (movielens.ml100k / "u1.base").unlink()
    with pytest.raises(MissingInputError) as excinfo:
        load_official_folds(movielens.ml100k)
    assert "u1.base" in str(excinfo.value)

    first_test = (movielens.ml100k / "u2.test").read_text(encoding="utf-8").splitlines()[0]
    (movielens.ml100k / "u1.base").write_text(first_test + "\n", encoding="utf-8")
    (movielens.ml100k / "u1.test").write_text(first_test + "\n", encoding="utf-8")
    with pytest.raises(DatasetIntegrityError):
        load_official_folds(movielens.ml100k)


def test_title_normalization():
    """标题归一化和年份解析"""
    assert title_key("Toy Story (1995)") == title_key("Toy Story (1995)")
    assert title_key(ARTICLE_TITLE_100K) == title_key("The Usual Suspects (1995)")
    assert normalize_title("Shawshank Redemption, The (1994)") == "the shawshank redemption"
    assert normalize_title("City of Lost Children, The (Cité des enfants perdus, La) (1995)") == "the city of lost children"
    assert parse_year("Toy Story (1995)") == 1995
    assert parse_year("Unknown", "01-Jan-1996") == 1996
    assert parse_year("Unknown") is None


def test_load_genome(movielens):
    """完整覆盖的电影保留，部分覆盖的电影被排除"""
    genome = load_genome(movielens.ml20m / "genome-scores.csv", movielens.ml20m / "genome-tags.csv")
    assert genome.n_tags == N_TAGS
    assert genome.tag_names[0] == "tag00"
    assert 300 not in genome
    assert 129 not in genome
    assert genome.excluded == 1
    assert genome.matrix.shape == (len(genome), N_TAGS)
    assert np.all((genome.matrix >= 0.0) & (genome.matrix <= 1.0))


def test_load_genome_rejects_bad_relevance_and_duplicates(movielens):
    """相关度越界或重复行时报错"""
    scores = movielens.ml20m / "genome-scores.csv"
    tags = movielens.ml20m / "genome-tags.csv"
    lines = scores.read_text(encoding="utf-8").splitlines()

    scores.write_text("\n".join(lines + ["101,1,1.5"]) + "\n", encoding="utf-8")
    with pytest.raises(DataFormatError):
        load_genome(scores, tags)

    scores.write_text("\n".join(lines + [lines[1]]) + "\n", encoding="utf-8")
    with pytest.raises(DataFormatError):
        load_genome(scores, tags)


def test_link_movies(movielens):
    """按标题+年份链接，报告匹配/丢弃数量"""
    genome, link_map, report = _linked(movielens)
    statuses = {row.ml100k_id: row.status for row in report.rows}
    assert report.matched == 28
    assert report.dropped == 2
    assert report.total == 30
    assert statuses[26] == "matched"
    assert statuses[29] == "no_genome"
    assert statuses[30] == "no_match"
    assert report.aliases == [(27, 28)]
    np.testing.assert_array_equal(link_map[27], link_map[28])
    np.testing.assert_array_equal(link_map[1], genome.vector(101))
    assert ALIAS_TITLE not in report.dropped_titles
    assert list(report.to_frame().columns) == ["ml100k_id", "title", "status", "ml20m_id"]


def test_link_collision_raises(movielens):
    """两部不同标题的电影链接到同一部 ML-20M 电影时报错"""
    items = movielens.ml100k / "u.item"
    lines = items.read_bytes().decode("latin-1").splitlines()
    # 电影 2 改成与电影 1 只差大小写的标题
    fields = lines[1].split("|")
    fields[1] = "movie 01 (1991)"
    lines[1] = "|".join(fields)
    items.write_bytes(("\n".join(lines) + "\n").encode("latin-1"))
    genome = load_genome(movielens.ml20m / "genome-scores.csv", movielens.ml20m / "genome-tags.csv")
    with pytest.raises(DatasetIntegrityError):
        link_movies(items, movielens.ml20m / "movies.csv", genome)


def test_build_folds(movielens):
    """丢弃未链接电影的评分，保留全部用户"""
    folds, catalog = _built(movielens)
    dropped = {29, 30}
    for fold in folds:
        fold.validate(catalog)
        assert fold.n_users == N_USERS
        assert sorted(fold.user_index.values()) == list(range(N_USERS))
        assert not any(r.item_id in dropped for r in fold.train + fold.test)
        assert int(fold.notes["dropped_train"]) + len(fold.train) == len(movielens.folds[fold.fold_id - 1][0])
        train_pairs = {r.pair for r in fold.train}
        assert not any(r.pair in train_pairs for r in fold.test)
    # 同一部电影在各折中的特征相同
    assert folds[0].item_index == folds[4].item_index


def test_build_folds_empty_inputs(movielens):
    """链接结果为空或测试集过滤后为空时报错"""
    folds = load_official_folds(movielens.ml100k)
    with pytest.raises(UsageError):
        build_folds(folds, {})
    with pytest.raises(DatasetIntegrityError):
        build_folds(folds, {9999: np.zeros(N_TAGS)})


def test_tuning_split(movielens):
    """调参划分从训练集中切出，与测试集不相交"""
    folds, _ = _built(movielens)
    split = make_tuning_split(folds[0], 0.1, seed=3)
    assert len(split.train) + len(split.test) == len(folds[0].train)
    assert len(split.test) == round(len(folds[0].train) * 0.1)
    test_pairs = {r.pair for r in folds[0].test}
    assert not any(r.pair in test_pairs for r in split.train + split.test)
    assert "tuning_split" in split.notes
    again = make_tuning_split(folds[0], 0.1, seed=3)
    assert [r.pair for r in again.test] == [r.pair for r in split.test]
    with pytest.raises(UsageError):
        make_tuning_split(folds[0], 1.5)


def test_cache_round_trip(movielens, tmp_path):
    """保存后读取得到相同的数据，重复保存字节相同"""
    folds, catalog = _built(movielens)
    cache = tmp_path / "cache"
    for fold in folds:
        save_dataset(fold, catalog, cache)
    first_hash = dataset_hash(cache)
    assert available_folds(cache) == [1, 2, 3, 4, 5]

    loaded, loaded_catalog = load_dataset(cache, 2)
    assert loaded.train == folds[1].train
    assert loaded.test == folds[1].test
    assert loaded.user_index == folds[1].user_index
    assert loaded.item_index == folds[1].item_index
    assert loaded_catalog.matrix.tobytes() == catalog.matrix.tobytes()
    assert loaded_catalog.tag_names == catalog.tag_names

    for fold in folds:
        save_dataset(fold, catalog, cache)
    assert dataset_hash(cache) == first_hash


def test_cache_corruption_and_version(movielens, tmp_path):
    """损坏的缓存或其他版本的缓存报错"""
    folds, catalog = _built(movielens)
    cache = tmp_path / "cache"
    save_dataset(folds[0], catalog, cache)

    train = cache / "fold1" / "train.csv"
    content = train.read_text(encoding="utf-8")
    train.write_text(content[: len(content) // 2], encoding="utf-8")
    with pytest.raises(DatasetIntegrityError):
        load_dataset(cache, 1)

    save_dataset(folds[0], catalog, cache)
    header = cache / "fold1" / "header.txt"
    header.write_text(header.read_text(encoding="utf-8").replace("format_version=1", "format_version=0"),
                      encoding="utf-8")
    with pytest.raises(CacheVersionError):
        load_dataset(cache, 1)

    with pytest.raises(MissingInputError):
        load_dataset(cache, 3)
