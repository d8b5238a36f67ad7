from enum import Enum

from pydantic import BaseModel, ConfigDict, Field

from fusion_lab.models.base import Activation


class OptimizerName(str, Enum):
    """优化器类型"""
    SGD = "sgd"
    ADAM = "adam"


class HyperParams(BaseModel):
    """训练超参数"""
    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(0.01, gt=0)
    epochs: int = Field(20, ge=1)
    batch_size: int = Field(64, ge=1)
    l2_weights: float = Field(0.0, ge=0)
    l2_embeddings: float = Field(0.0, ge=0)
    # 默认只对FM施加L2；神经网络需显式开启
    regularize_neural: bool = False
    seed: int = Field(0, ge=0, lt=2 ** 64)
    optimizer: OptimizerName = OptimizerName.SGD
    activation: Activation = Activation.RELU

    def describe(self) -> str:
        """单行描述，用于日志和报告表头"""
        return (
            f"optimizer={self.optimizer.value} lr={self.learning_rate:g} epochs={self.epochs} "
            f"batch={self.batch_size} l2_w={self.l2_weights:g} l2_e={self.l2_embeddings:g} "
            f"activation={self.activation.value} seed={self.seed}"
        )
