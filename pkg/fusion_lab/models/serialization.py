"""
模型的文本容器格式

    # fusion-lab model
    format_version: 1
    kind: tensor
    z: 4
    ...（其余表头键值）
    checksum: <参数区的SHA-256>
    ---
    [W] 1128
    <每行一个值，%.17g，往返精确>
    [T] 4 1128
    ...
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from fusion_lab.errors import CacheVersionError, DatasetIntegrityError, DataFormatError, MissingInputError
from fusion_lab.models.base import Activation, EmbeddingTable, Model, ModelKind
from fusion_lab.models.model_manager import ModelManager

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = "1"
MAGIC = "# fusion-lab model"


def _format_array(name: str, value: np.ndarray) -> str:
    shape = " ".join(str(d) for d in value.shape)
    lines = [f"[{name}] {shape}".rstrip()]
    lines.extend("%.17g" % v for v in np.asarray(value, dtype=np.float64).reshape(-1))
    return "\n".join(lines)


def save_model(model: Model, path: Union[str, Path], header: Dict[str, Any] = None) -> Path:
    """保存模型；header 中的额外键值（seed、数据集哈希等）写入表头"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = "\n".join(_format_array(name, model.params[name]) for name in sorted(model.params)) + "\n"
    meta = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind.value,
        "z": model.z,
        "n_features": model.n_features,
        "n_users": model.n_users,
        "activation": model.activation.value,
        "metadata": json.dumps(model.metadata, sort_keys=True, ensure_ascii=False),
    }
    for key, value in (header or {}).items():
        meta[key] = value if isinstance(value, (str, int, float)) else json.dumps(value, sort_keys=True)
    meta["checksum"] = hashlib.sha256(payload.encode("utf-8")).hexdigest()
    head = [MAGIC] + [f"{key}: {value}" for key, value in meta.items()] + ["---"]
    path.write_text("\n".join(head) + "\n" + payload, encoding="utf-8")
    logger.debug(f"模型已保存到 {path}")
    return path


def _split(path: Path) -> Tuple[Dict[str, str], str]:
    if not path.exists():
        raise MissingInputError(str(path), "模型文件不存在")
    text = path.read_text(encoding="utf-8")
    head, sep, payload = text.partition("\n---\n")
    lines = head.splitlines()
    if not sep or not lines or lines[0] != MAGIC:
        raise DataFormatError(str(path), 1, "不是 fusion-lab 模型文件")
    header = {}
    for line_no, line in enumerate(lines[1:], start=2):
        key, colon, value = line.partition(": ")
        if not colon:
            raise DataFormatError(str(path), line_no, f"表头行格式错误: {line!r}")
        header[key] = value
    return header, payload


def load_model(path: Union[str, Path]) -> Tuple[Model, Dict[str, str]]:
    """读取模型，返回 (模型, 表头)"""
    path = Path(path)
    header, payload = _split(path)
    version = header.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise CacheVersionError(str(path), str(version), MODEL_FORMAT_VERSION)
    if hashlib.sha256(payload.encode("utf-8")).hexdigest() != header.get("checksum"):
        raise DatasetIntegrityError(f"{path}: 参数区校验和不匹配，文件可能已损坏")

    model = ModelManager.create(
        ModelKind(header["kind"]),
        int(header["z"]),
        activation=Activation(header["activation"]),
        n_features=int(header["n_features"]),
        n_users=int(header["n_users"]),
    )
    model.metadata = json.loads(header.get("metadata", "{}"))

    name, shape, values = None, (), []

    def flush():
        expected = int(np.prod(shape)) if shape else 1
        if len(values) != expected:
            raise DatasetIntegrityError(f"{path}: 参数 {name} 期望 {expected} 个值，实际 {len(values)} 个")
        model.params[name] = np.array(values, dtype=np.float64).reshape(shape)

    for line in payload.splitlines():
        if line.startswith("["):
            if name is not None:
                flush()
            label, _, dims = line[1:].partition("]")
            name, shape, values = label, tuple(int(d) for d in dims.split()), []
        elif line:
            values.append(float(line))
    if name is not None:
        flush()
    model.check_finite()
    return model, header


def save_embeddings(table: EmbeddingTable, path: Union[str, Path], user_ids: Optional[List[int]] = None) -> Path:
    """导出嵌入 CSV：user_id,dim_0..dim_{d-1}（原始用户ID）"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ids = user_ids if user_ids is not None else table.user_ids
    if ids is None:
        ids = list(range(1, table.n_users + 1))
    frame = pd.DataFrame(table.vectors, columns=[f"dim_{j}" for j in range(table.dim)])
    frame.insert(0, "user_id", ids)
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path


def load_embeddings(path: Union[str, Path]) -> EmbeddingTable:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(str(path), "嵌入文件不存在")
    frame = pd.read_csv(path, float_precision="round_trip")
    dims = [c for c in frame.columns if c != "user_id"]
    if "user_id" not in frame.columns or dims != [f"dim_{j}" for j in range(len(dims))] or not dims:
        raise DataFormatError(str(path), 1, "表头应为 user_id,dim_0..dim_{d-1}")
    if frame["user_id"].duplicated().any():
        raise DatasetIntegrityError(f"{path}: 存在重复的 user_id")
    return EmbeddingTable(frame[dims].to_numpy(dtype=np.float64), [int(u) for u in frame["user_id"]])
