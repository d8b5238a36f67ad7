"""
数据集缓存（纯文本格式）

    <cache>/catalog/header.txt   表头：版本、数量、各数据文件的SHA-256
    <cache>/catalog/tags.csv     col,tag
    <cache>/catalog/movies.csv   item_id,title
    <cache>/catalog/features.csv item_id,f0..f{n-1}（%.17g，往返精确）
    <cache>/fold<i>/header.txt
    <cache>/fold<i>/train.csv    user_id,item_id,rating
    <cache>/fold<i>/test.csv
    <cache>/fold<i>/users.csv    user_id,index
    <cache>/fold<i>/items.csv    item_id,index

header.txt 第一行是 "fusion-lab dataset cache"，其余每行 key=value。
"""

import hashlib
import logging
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
import pandas as pd

from fusion_lab.data.folds import Fold
from fusion_lab.data.genome import FeatureCatalog
from fusion_lab.data.movielens import RatingRecord
from fusion_lab.errors import CacheVersionError, DatasetIntegrityError, MissingInputError

logger = logging.getLogger(__name__)

CACHE_FORMAT_VERSION = "1"
CACHE_MAGIC = "fusion-lab dataset cache"
FLOAT_FORMAT = "%.17g"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_frame(frame: pd.DataFrame, path: Path) -> str:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return _sha256(path)


def _write_header(directory: Path, entries: Dict[str, str]):
    lines = [CACHE_MAGIC] + [f"{key}={value}" for key, value in entries.items()]
    (directory / "header.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_header(directory: Path) -> Dict[str, str]:
    path = directory / "header.txt"
    if not path.exists():
        raise MissingInputError(str(path), "缓存不存在，请先运行 prepare")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != CACHE_MAGIC:
        raise DatasetIntegrityError(f"{path}: 不是 fusion-lab 数据集缓存")
    header = {}
    for line in lines[1:]:
        key, sep, value = line.partition("=")
        if not sep:
            raise DatasetIntegrityError(f"{path}: 表头行格式错误 {line!r}")
        header[key] = value
    version = header.get("format_version")
    if version != CACHE_FORMAT_VERSION:
        raise CacheVersionError(str(path), str(version), CACHE_FORMAT_VERSION)
    return header


def _verify(directory: Path, header: Dict[str, str], names: List[str]):
    for name in names:
        path = directory / name
        if not path.exists():
            raise DatasetIntegrityError(f"缓存文件缺失: {path}")
        if _sha256(path) != header.get(f"sha256.{name}"):
            raise DatasetIntegrityError(f"缓存文件校验和不匹配，文件可能已损坏: {path}")


def _records_frame(records: List[RatingRecord]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "user_id": [r.user_id for r in records],
            "item_id": [r.item_id for r in records],
            "rating": np.array([r.rating for r in records], dtype=np.float64),
        }
    )


def _read_records(path: Path) -> List[RatingRecord]:
    frame = pd.read_csv(path, dtype={"user_id": np.int64, "item_id": np.int64}, float_precision="round_trip")
    return [RatingRecord(int(u), int(i), float(r)) for u, i, r in frame.itertuples(index=False)]


def save_catalog(catalog: FeatureCatalog, path: Union[str, Path]) -> Path:
    """保存特征目录；相同内容重复保存得到相同字节"""
    directory = Path(path) / "catalog"
    directory.mkdir(parents=True, exist_ok=True)
    hashes = {
        "tags.csv": _write_frame(pd.DataFrame({"col": range(catalog.n_tags), "tag": catalog.tag_names}),
                                 directory / "tags.csv"),
        "movies.csv": _write_frame(
            pd.DataFrame({"item_id": catalog.ids, "title": [catalog.titles.get(int(i), "") for i in catalog.ids]}),
            directory / "movies.csv",
        ),
    }
    features = pd.DataFrame(catalog.matrix, columns=[f"f{j}" for j in range(catalog.n_tags)])
    features.insert(0, "item_id", catalog.ids)
    hashes["features.csv"] = _write_frame(features, directory / "features.csv")
    entries = {
        "format_version": CACHE_FORMAT_VERSION,
        "kind": "catalog",
        "n_items": str(len(catalog)),
        "n_tags": str(catalog.n_tags),
        "excluded": str(catalog.excluded),
    }
    entries.update({f"sha256.{name}": digest for name, digest in hashes.items()})
    _write_header(directory, entries)
    return directory


def load_catalog(path: Union[str, Path]) -> FeatureCatalog:
    directory = Path(path) / "catalog"
    header = _read_header(directory)
    _verify(directory, header, ["tags.csv", "movies.csv", "features.csv"])
    tags = pd.read_csv(directory / "tags.csv", keep_default_na=False, dtype={"tag": str})
    movies = pd.read_csv(directory / "movies.csv", keep_default_na=False, dtype={"title": str})
    features = pd.read_csv(directory / "features.csv", float_precision="round_trip")
    if len(features) != int(header["n_items"]) or len(tags) != int(header["n_tags"]):
        raise DatasetIntegrityError(f"{directory}: 数据行数与表头不一致")
    ids = features["item_id"].to_numpy(dtype=np.int64)
    matrix = features.drop(columns=["item_id"]).to_numpy(dtype=np.float64)
    titles = {int(i): t for i, t in zip(movies["item_id"], movies["title"]) if t}
    return FeatureCatalog(tags["tag"].tolist(), ids, matrix, titles, excluded=int(header["excluded"]))


def save_dataset(fold: Fold, catalog: FeatureCatalog, path: Union[str, Path]) -> Path:
    """保存一折数据和特征目录"""
    root = Path(path)
    save_catalog(catalog, root)
    directory = root / f"fold{fold.fold_id}"
    directory.mkdir(parents=True, exist_ok=True)
    users = sorted(fold.user_index.items(), key=lambda kv: kv[1])
    items = sorted(fold.item_index.items(), key=lambda kv: kv[1])
    hashes = {
        "train.csv": _write_frame(_records_frame(fold.train), directory / "train.csv"),
        "test.csv": _write_frame(_records_frame(fold.test), directory / "test.csv"),
        "users.csv": _write_frame(pd.DataFrame(users, columns=["user_id", "index"]), directory / "users.csv"),
        "items.csv": _write_frame(pd.DataFrame(items, columns=["item_id", "index"]), directory / "items.csv"),
    }
    entries = {
        "format_version": CACHE_FORMAT_VERSION,
        "kind": "fold",
        "fold_id": str(fold.fold_id),
        "n_train": str(len(fold.train)),
        "n_test": str(len(fold.test)),
        "n_users": str(fold.n_users),
        "n_items": str(fold.n_items),
    }
    entries.update({f"note.{key}": value for key, value in sorted(fold.notes.items())})
    entries.update({f"sha256.{name}": digest for name, digest in hashes.items()})
    _write_header(directory, entries)
    logger.debug(f"fold {fold.fold_id} 已缓存到 {directory}")
    return directory


def load_dataset(path: Union[str, Path], fold_id: int) -> Tuple[Fold, FeatureCatalog]:
    """读取一折缓存数据和特征目录"""
    root = Path(path)
    directory = root / f"fold{fold_id}"
    header = _read_header(directory)
    _verify(directory, header, ["train.csv", "test.csv", "users.csv", "items.csv"])
    train = _read_records(directory / "train.csv")
    test = _read_records(directory / "test.csv")
    if len(train) != int(header["n_train"]) or len(test) != int(header["n_test"]):
        raise DatasetIntegrityError(f"{directory}: 评分条数与表头不一致")
    users = pd.read_csv(directory / "users.csv")
    items = pd.read_csv(directory / "items.csv")
    fold = Fold(
        int(header["fold_id"]),
        train,
        test,
        {int(u): int(i) for u, i in zip(users["user_id"], users["index"])},
        {int(m): int(i) for m, i in zip(items["item_id"], items["index"])},
        {key[len("note."):]: value for key, value in header.items() if key.startswith("note.")},
    )
    return fold, load_catalog(root)


def available_folds(path: Union[str, Path]) -> List[int]:
    root = Path(path)
    return sorted(int(p.name[len("fold"):]) for p in root.glob("fold*") if (p / "header.txt").exists())


def dataset_hash(path: Union[str, Path]) -> str:
    """整个缓存的哈希（各表头文件的SHA-256，表头中已包含数据文件的校验和）"""
    root = Path(path)
    digest = hashlib.sha256()
    headers = [root / "catalog" / "header.txt"] + [root / f"fold{i}" / "header.txt" for i in available_folds(root)]
    for header in headers:
        if not header.exists():
            raise MissingInputError(str(header), "缓存不存在，请先运行 prepare")
        digest.update(header.read_bytes())
    return digest.hexdigest()
