import json
import logging
import uuid
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

logger = logging.getLogger(__name__)


class RunEventLog:
    """运行事件日志，记录网格单元的开始/完成/失败等结构化事件"""

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.events: List[Dict[str, Any]] = []
        self.current_session_id: Optional[str] = None

    def start_new_session(self) -> str:
        """开始新的运行会话，返回会话ID"""
        self.current_session_id = str(uuid.uuid4())
        return self.current_session_id

    def log_event(self, event_type: str, **fields: Any):
        """记录一条事件"""
        if not self.enabled:
            return
        entry = {
            "timestamp": datetime.now().isoformat(),
            "type": event_type,
            "session_id": self.current_session_id,
        }
        entry.update(fields)
        self.events.append(entry)
        logger.debug(f"事件 {event_type}: {fields}")

    def log_cell_started(self, cell_id: str):
        self.log_event("cell_started", cell_id=cell_id)

    def log_cell_finished(self, cell_id: str, **metrics: Any):
        self.log_event("cell_finished", cell_id=cell_id, **metrics)

    def log_cell_failed(self, cell_id: str, error: str):
        self.log_event("cell_failed", cell_id=cell_id, error=error)

    def log_tuning_failed(self, row_id: str, error: str):
        self.log_event("tuning_failed", row_id=row_id, error=error)

    def log_pdc_unavailable(self, cell_id: str, threshold: int, reason: str):
        self.log_event("pdc_unavailable", cell_id=cell_id, threshold=threshold, reason=reason)

    def log_error(self, error: Exception):
        """记录错误"""
        if not self.enabled:
            return
        self.log_event("error", error=str(error), error_type=type(error).__name__)
        logger.error(f"错误: {error}")

    def get_events(self, event_type: Optional[str] = None) -> List[Dict[str, Any]]:
        """获取事件，可按类型过滤"""
        if event_type:
            return [e for e in self.events if e["type"] == event_type]
        return list(self.events)

    def save(self, filepath: Union[str, Path]):
        """保存事件到 JSON 文件"""
        try:
            with open(filepath, "w", encoding="utf-8") as f:
                json.dump(self.events, f, ensure_ascii=False, indent=2)
            logger.info(f"事件日志已保存到 {filepath}")
        except OSError as e:
            logger.error(f"保存事件日志失败: {e}")
