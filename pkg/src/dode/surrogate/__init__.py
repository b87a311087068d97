"""Simulator surrogates: sampling, models, tuning and surrogate-based estimation."""
from .basinhopping import BasinHoppingResult, basinhopping
from .dataset import Dataset, build_dataset
from .fnn import FnnModel, TrainerConfig, TrainingError, fnn_fit, fnn_predict
from .knn import KnnModel, knn_fit, knn_predict
from .method import MlConfig, SurrogateCounts, run_ml_method
from .sobol import UnsupportedDimensionError, sobol_points, star_discrepancy
from .tuning import CvResult, FnnSpec, GridSearchResult, HyperGrid, KnnSpec, grid_search, kfold_cv

__all__ = [
    "BasinHoppingResult", "CvResult", "Dataset", "FnnModel", "FnnSpec", "GridSearchResult", "HyperGrid",
    "KnnModel", "KnnSpec", "MlConfig", "SurrogateCounts", "TrainerConfig", "TrainingError",
    "UnsupportedDimensionError", "basinhopping", "build_dataset", "fnn_fit", "fnn_predict", "grid_search",
    "kfold_cv", "knn_fit", "knn_predict", "run_ml_method", "sobol_points", "star_discrepancy",
]
