"""Longitudinal UPDRS progression forecasting toolkit.

Covers synthetic cohort generation, data profiling, preprocessing
(skew-correcting transforms, missingness-aware imputation, standardization),
lagged supervised-set assembly, two from-scratch forecasters (an
attention-LSTM and a spline-network), training with early stopping, metric
reporting, and a batch CLI.
"""
from .dataset import (Cohort, DataProfile, SynthConfig, generate_synthetic,
                      load_cohort, profile, to_feature_matrix, validate_cohort,
                      write_cohort)
from .features import (LagConfig, SupervisedSet, build_supervised,
                       correlation_matrix, kde, peptide_presence, split,
                       split_patients, top_peptides)
from .models import (KanForecaster, KanForecasterConfig, LstmForecaster,
                     LstmForecasterConfig, build_kan_forecaster,
                     build_lstm_forecaster, summarize)
from .preprocess import (FittedPreprocessor, ImputeConfig, boxcox, boxcox_mle,
                         fit_preprocessor, mean_impute, skewness, soft_impute)
from .traineval import (EvalReport, History, TargetScaler, TrainConfig,
                        evaluate, fit_target_scaler, mse, rmse, smape, train)

__version__ = "0.1.0"

__all__ = [
    "Cohort", "DataProfile", "SynthConfig", "generate_synthetic",
    "load_cohort", "profile", "to_feature_matrix", "validate_cohort",
    "write_cohort", "LagConfig", "SupervisedSet", "build_supervised",
    "correlation_matrix", "kde", "peptide_presence", "split", "split_patients",
    "top_peptides", "KanForecaster", "KanForecasterConfig", "LstmForecaster",
    "LstmForecasterConfig", "build_kan_forecaster", "build_lstm_forecaster",
    "summarize", "FittedPreprocessor", "ImputeConfig", "boxcox", "boxcox_mle",
    "fit_preprocessor", "mean_impute", "skewness", "soft_impute", "EvalReport",
    "History", "TargetScaler", "TrainConfig", "evaluate", "fit_target_scaler",
    "mse", "rmse", "smape", "train",
]
