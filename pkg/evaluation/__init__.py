from .baseline import NearestNeighborPredictor, TrainBank, nn_retrieve
from .metrics import (
    MetricsReport,
    confusion_matrix,
    evaluate,
    paired_significance,
    sequence_accuracy,
)
from .samples import EvalSample, Prediction
