"""Predictors that turn solved training variations into solver hints."""

from .affine import (ADD, SKIP, SVM, DEFAULT_THRESHOLDS, AffineGateConfig, AffinePredictor, Gate, GateThresholds,
                     extract_features, fit_affine_predictor, hyperplane_labels, predict_affine, resolve_conflicts)
from .knn import (TransmissionPredictorConfig, WarmStartPredictorConfig, consensus_matrix, knn_indices,
                  predict_transmission, predict_warm_start)
from .store import StoreMismatchError, TrainingRecord, TrainingStore
from .svm import (SvmModel, kfold_evaluate, kfold_predictions, model_objective, precision_recall, svm_objective,
                  svm_train)

__all__ = [
    "ADD", "SKIP", "SVM", "DEFAULT_THRESHOLDS", "AffineGateConfig", "AffinePredictor", "Gate", "GateThresholds",
    "extract_features", "fit_affine_predictor", "hyperplane_labels", "predict_affine", "resolve_conflicts",
    "TransmissionPredictorConfig", "WarmStartPredictorConfig", "consensus_matrix", "knn_indices",
    "predict_transmission", "predict_warm_start", "StoreMismatchError", "TrainingRecord", "TrainingStore",
    "SvmModel", "kfold_evaluate", "kfold_predictions", "model_objective", "precision_recall", "svm_objective",
    "svm_train",
]
