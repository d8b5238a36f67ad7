from fusion_lab.evaluation.metrics import mae, prediction_metrics, rmse
from fusion_lab.evaluation.pdc import (
    DEFAULT_THRESHOLDS,
    EmbeddingDistance,
    PairStatistics,
    PdcConfig,
    PdcResult,
    RatingScope,
    UserDistance,
    pdc,
    pdc_bruteforce,
    pdc_sweep,
    pearson,
    user_distance,
)
from fusion_lab.evaluation.report import EvalReport
