"""
单次运行（模型 × z × 折）的评估报告
"""

import json
from pathlib import Path
from typing import Any, Dict, Optional, Union

from pydantic import BaseModel, ConfigDict, model_validator

from fusion_lab.errors import DataFormatError

# MAE ≤ RMSE 的浮点容差
_ORDER_TOLERANCE = 1e-12


class EvalReport(BaseModel):
    """评估结果；所有字段都是确定的，不包含耗时"""
    model_config = ConfigDict(extra="forbid")

    kind: str
    z: int
    fold_id: int
    seed: int
    mae: Optional[float] = None
    rmse: Optional[float] = None
    pdc: Dict[int, Optional[float]] = {}
    pair_counts: Dict[int, int] = {}
    param_count: int = 0
    params_note: str = ""
    n_train: int = 0
    n_test: int = 0
    activation: str = ""
    optimizer: str = ""
    hyperparams: Dict[str, Any] = {}
    clamp_predictions: bool = False
    d_u: str = ""
    rating_scope: str = ""
    tuning_split: str = ""
    model_hash: str = ""
    config_hash: str = ""
    dataset_hash: str = ""
    version: str = ""
    error: Optional[str] = None

    @model_validator(mode="after")
    def _check_ranges(self) -> "EvalReport":
        if self.mae is not None and self.rmse is not None and self.mae > self.rmse + _ORDER_TOLERANCE:
            raise ValueError(f"MAE {self.mae} 大于 RMSE {self.rmse}")
        for t, score in self.pdc.items():
            if score is not None and not -1.0 <= score <= 1.0:
                raise ValueError(f"PDC(t={t}) = {score} 超出 [-1, 1]")
        return self

    @property
    def cell_id(self) -> str:
        return f"{self.kind}_{self.z}_fold{self.fold_id}"

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "EvalReport":
        path = Path(path)
        try:
            return cls.model_validate_json(path.read_text(encoding="utf-8"))
        except ValueError as e:
            raise DataFormatError(str(path), None, f"报告格式错误: {e}") from e
