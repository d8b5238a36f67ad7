from fusion_lab.models.base import Activation, EmbeddingTable, Model, ModelKind
from fusion_lab.models.fm import FactorizationMachineModel, fm_forward_dense, fm_t_forward
from fusion_lab.models.model_manager import (
    ModelManager,
    embedding_of,
    forward,
    gradients,
    init_model,
    mse_loss_and_gradients,
    param_count,
    sensitivity,
)
from fusion_lab.models.tensor import TensorFusionModel
from fusion_lab.models.serialization import load_embeddings, load_model, save_embeddings, save_model
