"""
实验配置

优先级：命令行参数 > 配置文件(JSON) > 环境变量(.env) > 默认值
"""

import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from fusion_lab.errors import MissingInputError, UsageError
from fusion_lab.evaluation.pdc import DEFAULT_THRESHOLDS, RatingScope, UserDistance
from fusion_lab.models.base import ModelKind
from fusion_lab.models.model_manager import ModelManager
from fusion_lab.training.hyperparams import HyperParams

logger = logging.getLogger(__name__)

ENV_VARS = {
    "ml100k_dir": "FUSION_LAB_ML100K",
    "ml20m_dir": "FUSION_LAB_ML20M",
    "cache_dir": "FUSION_LAB_CACHE",
    "output_dir": "FUSION_LAB_OUTPUT",
}

# 不影响结果的字段，不参与配置哈希
HASH_EXCLUDED = {"output_dir", "workers"}


class ExperimentConfig(BaseModel):
    """一次完整实验（模型 × 嵌入维度 × 折）的配置"""
    model_config = ConfigDict(extra="forbid")

    ml100k_dir: Optional[str] = None
    ml20m_dir: Optional[str] = None
    cache_dir: str = "cache"
    output_dir: str = "results"

    kinds: List[ModelKind] = Field(default_factory=lambda: list(ModelKind))
    z_values: List[int] = Field(default_factory=lambda: list(ModelManager.GRID_Z_VALUES))
    folds: List[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5])

    default_hyperparams: HyperParams = Field(default_factory=HyperParams)
    # 按模型名称覆盖的超参数
    hyperparams: Dict[str, HyperParams] = Field(default_factory=dict)
    # 非空时先在调参划分上做网格搜索
    tuning_grid: List[HyperParams] = Field(default_factory=list)
    tuning_fraction: float = Field(0.1, gt=0, lt=1)

    pdc_thresholds: List[int] = Field(default_factory=lambda: list(DEFAULT_THRESHOLDS))
    d_u: UserDistance = UserDistance.MEAN_SQUARED_DIFFERENCE
    rating_scope: RatingScope = RatingScope.TEST

    seed: int = Field(0, ge=0, lt=2 ** 64)
    clamp_predictions: bool = False
    workers: int = Field(1, ge=1)

    @field_validator("z_values")
    @classmethod
    def _positive_z(cls, values: List[int]) -> List[int]:
        if not values or any(z <= 0 for z in values):
            raise ValueError(f"z 值必须为正且非空: {values}")
        return values

    @field_validator("pdc_thresholds")
    @classmethod
    def _positive_thresholds(cls, values: List[int]) -> List[int]:
        if not values or any(t < 1 for t in values):
            raise ValueError(f"PDC 阈值必须 ≥ 1 且非空: {values}")
        return values

    @field_validator("hyperparams")
    @classmethod
    def _known_kinds(cls, values: Dict[str, HyperParams]) -> Dict[str, HyperParams]:
        unknown = [k for k in values if k not in ModelManager.available_kinds()]
        if unknown:
            raise ValueError(f"未知的模型架构: {unknown}")
        return values

    def hyperparams_for(self, kind: Union[ModelKind, str]) -> HyperParams:
        return self.hyperparams.get(ModelKind(kind).value, self.default_hyperparams)

    def config_hash(self) -> str:
        """规范化 JSON 的 SHA-256（不含输出目录和并发数）"""
        payload = self.model_dump(mode="json", exclude=HASH_EXCLUDED)
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def require_paths(self, *names: str):
        """检查指定的数据目录已配置且存在"""
        for name in names:
            value = getattr(self, name)
            if not value:
                raise UsageError(f"未配置 {name}，请通过命令行、配置文件或环境变量 {ENV_VARS[name]} 指定")
            if not Path(value).exists():
                raise MissingInputError(value, f"{name} 指向的目录不存在")


def _environment_defaults() -> Dict[str, Any]:
    load_dotenv()
    return {field: os.environ[var] for field, var in ENV_VARS.items() if os.environ.get(var)}


def load_experiment_config(path: Optional[Union[str, Path]] = None,
                           overrides: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    """按优先级合并环境变量、配置文件和命令行参数"""
    data = _environment_defaults()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise MissingInputError(str(path), "配置文件不存在")
        try:
            file_data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise UsageError(f"配置文件 {path} 不是合法的 JSON: {e}") from e
        if not isinstance(file_data, dict):
            raise UsageError(f"配置文件 {path} 顶层必须是对象")
        data.update(file_data)
    if overrides:
        data.update({key: value for key, value in overrides.items() if value is not None})
    try:
        config = ExperimentConfig(**data)
    except ValidationError as e:
        raise UsageError(f"配置无效: {e}") from e
    logger.debug(f"实验配置哈希 {config.config_hash()[:12]}")
    return config
