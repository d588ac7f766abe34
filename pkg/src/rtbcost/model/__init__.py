from .binning import (
    MIN_CLASS_SHARE,
    DegenerateDistribution,
    InsufficientSamples,
    NonPositivePrice,
    PriceBinning,
    fit_binning,
    log_normalize,
    loo_entropy,
)
from .encoding import FeatureEncoder, SchemaMismatch
from .evaluation import (
    FeatureSelectionReport,
    InsufficientClassSupport,
    evaluate,
    evaluate_encoded,
    select_features,
    variance_filter,
)
from .forest import ForestParams, RandomForestModel, SingleClassData, Tree, fit_encoded, fit_forest
from .io import (
    SCHEMA_VERSION,
    CorruptModel,
    PriceModel,
    VersionMismatch,
    checksum,
    estimate_price,
    export_model,
    import_model,
    predict_class,
)
from .kernels import BACKEND
from .metrics import EvalMetrics, confusion_matrix, metrics_from_confusion, weighted_auc_ovr
from .regression import RegressionForest, fit_regression_forest
from .train import train_price_model

__all__ = [
    "BACKEND", "CorruptModel", "DegenerateDistribution", "EvalMetrics", "FeatureEncoder",
    "FeatureSelectionReport", "ForestParams", "InsufficientClassSupport", "InsufficientSamples",
    "MIN_CLASS_SHARE", "NonPositivePrice", "PriceBinning", "PriceModel", "RandomForestModel",
    "RegressionForest", "SCHEMA_VERSION", "SchemaMismatch", "SingleClassData", "Tree",
    "VersionMismatch", "checksum", "confusion_matrix", "estimate_price", "evaluate",
    "evaluate_encoded", "export_model", "fit_binning", "fit_encoded", "fit_forest",
    "fit_regression_forest", "import_model", "log_normalize", "loo_entropy",
    "metrics_from_confusion", "predict_class", "select_features", "train_price_model", "variance_filter",
    "weighted_auc_ovr",
]
