from fusion_lab.training.grid_search import GridPoint, GridSearchResult, grid_search
from fusion_lab.training.hyperparams import HyperParams, OptimizerName
from fusion_lab.training.optimizers import SGD, Adam, make_optimizer
from fusion_lab.training.trainer import TrainTrace, predict_arrays, train
