"""
实验室统一异常定义
"""

from typing import Optional, Sequence


class FusionLabError(Exception):
    """所有实验室异常的基类"""


class DataFormatError(FusionLabError, ValueError):
    """输入文件格式错误（带文件路径和行号）"""

    def __init__(self, path: str, line_no: Optional[int], reason: str):
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason
        where = f"{self.path}:{line_no}" if line_no is not None else self.path
        super().__init__(f"{where}: {reason}")


class MissingInputError(FusionLabError, FileNotFoundError):
    """缺少必需的输入文件"""

    def __init__(self, path: str, hint: str = ""):
        self.path = str(path)
        message = f"找不到输入文件: {self.path}"
        if hint:
            message += f" ({hint})"
        super().__init__(message)

    def __str__(self) -> str:
        return self.args[0]


class DatasetIntegrityError(FusionLabError, ValueError):
    """数据集一致性被破坏（训练/测试重叠、链接冲突、缓存损坏等）"""


class CacheVersionError(FusionLabError, ValueError):
    """缓存或模型容器的格式版本不匹配"""

    def __init__(self, path: str, found: str, expected: str):
        self.found = found
        self.expected = expected
        super().__init__(f"{path}: 格式版本 {found} 与期望版本 {expected} 不一致")


class ShapeMismatchError(FusionLabError, ValueError):
    """维度不匹配，消息中包含两侧的形状"""

    def __init__(self, left_shape: Sequence[int], right_shape: Sequence[int], op: str = ""):
        self.left_shape = tuple(left_shape)
        self.right_shape = tuple(right_shape)
        prefix = f"{op}: " if op else ""
        super().__init__(f"{prefix}维度不匹配 {self.left_shape} vs {self.right_shape}")


class NonFiniteError(FusionLabError, ArithmeticError):
    """参数或梯度中出现 NaN/Inf"""

    def __init__(self, name: str, detail: str = ""):
        self.name = name
        message = f"参数 {name} 出现非有限值"
        if detail:
            message += f": {detail}"
        super().__init__(message)


class TrainingDivergedError(FusionLabError, RuntimeError):
    """训练损失变为非有限值"""

    def __init__(self, epoch: int, learning_rate: float, detail: str = ""):
        self.epoch = epoch
        self.learning_rate = learning_rate
        message = f"训练在第 {epoch} 轮发散 (learning_rate={learning_rate})"
        if detail:
            message += f": {detail}"
        super().__init__(message)


class PdcUndefinedError(FusionLabError, ValueError):
    """PDC无法计算：合格用户对不足或方差为零"""

    def __init__(self, threshold: Optional[int], pair_count: int, reason: str):
        self.threshold = threshold
        self.pair_count = pair_count
        super().__init__(
            f"PDC在阈值 t={threshold} 下无定义（合格用户对 {pair_count} 个）: {reason}；"
            f"阈值可能过高"
        )


class UsageError(FusionLabError, ValueError):
    """参数组合不合法"""


class UndefinedCorrelationError(FusionLabError, ValueError):
    """相关系数无定义（长度不足或方差为零）"""
