from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from fusion_lab.config import ExperimentConfig
from fusion_lab.models.base import ModelKind


class CellStatus(Enum):
    """网格单元状态"""
    PENDING = "pending"
    IN_PROGRESS = "in_progress"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass
class GridCell:
    """一次训练+评估：(模型, z, 折)"""
    kind: ModelKind
    z: int
    fold_id: int
    status: CellStatus = CellStatus.PENDING
    started_at: Optional[datetime] = None
    completed_at: Optional[datetime] = None
    result: Any = None
    error: Optional[str] = None

    @property
    def id(self) -> str:
        return f"{self.kind.value}_{self.z}_fold{self.fold_id}"

    @property
    def row(self) -> Tuple[ModelKind, int]:
        return self.kind, self.z


def grid_rows(config: ExperimentConfig) -> List[Tuple[ModelKind, int]]:
    """结果表的行：基线模型各一行（z=0），其余模型每个 z 一行"""
    rows = []
    for kind in ModelKind:
        if kind not in config.kinds:
            continue
        if kind.is_baseline:
            rows.append((kind, 0))
        else:
            rows.extend((kind, z) for z in sorted(set(config.z_values)))
    return rows


class ExperimentPlanner:
    """实验网格规划器，跟踪每个单元的状态"""

    def __init__(self):
        self.cells: Dict[str, GridCell] = {}
        self.cell_order: List[str] = []

    @classmethod
    def from_config(cls, config: ExperimentConfig) -> "ExperimentPlanner":
        planner = cls()
        for kind, z in grid_rows(config):
            for fold_id in config.folds:
                planner.add_cell(GridCell(kind, z, fold_id))
        return planner

    def add_cell(self, cell: GridCell):
        self.cells[cell.id] = cell
        self.cell_order.append(cell.id)

    def ordered(self) -> List[GridCell]:
        return [self.cells[cell_id] for cell_id in self.cell_order]

    def start_cell(self, cell_id: str):
        cell = self.cells[cell_id]
        cell.status = CellStatus.IN_PROGRESS
        cell.started_at = datetime.now()

    def complete_cell(self, cell_id: str, result: Any = None):
        cell = self.cells[cell_id]
        cell.status = CellStatus.COMPLETED
        cell.completed_at = datetime.now()
        cell.result = result

    def fail_cell(self, cell_id: str, error: str):
        cell = self.cells[cell_id]
        cell.status = CellStatus.FAILED
        cell.error = error
        cell.completed_at = datetime.now()

    def get_progress(self) -> Dict[str, int]:
        """获取进度"""
        counts = {status: 0 for status in CellStatus}
        for cell in self.cells.values():
            counts[cell.status] += 1
        return {
            "total": len(self.cells),
            "completed": counts[CellStatus.COMPLETED],
            "failed": counts[CellStatus.FAILED],
            "in_progress": counts[CellStatus.IN_PROGRESS],
            "pending": counts[CellStatus.PENDING],
        }
