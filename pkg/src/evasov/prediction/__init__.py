from .gru import GruLayer, GruModel, TrainConfig, TrainingError, gru_forward, gru_train
from .predictors import (EvalReport, GruPredictor, HoldPredictor, LrPredictor,
                         PredictionConfig, Predictor, evaluate_predictor, load_model,
                         lr_predict, lr_predict_batch, make_windows, save_model,
                         train_gru_predictor)
from .trace import (ANGLES, Trace, angular_error, load_trace, quat_to_matrix,
                    quat_to_viewport, resample_trace, save_trace, unwrap_yaw)

__all__ = [
    "ANGLES", "EvalReport", "GruLayer", "GruModel", "GruPredictor", "HoldPredictor",
    "LrPredictor", "PredictionConfig", "Predictor", "Trace", "TrainConfig", "TrainingError",
    "angular_error", "evaluate_predictor", "gru_forward", "gru_train", "load_model",
    "load_trace", "lr_predict", "lr_predict_batch", "make_windows", "quat_to_matrix",
    "quat_to_viewport", "resample_trace", "save_model", "save_trace", "train_gru_predictor",
    "unwrap_yaw",
]
