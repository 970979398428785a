"""Surrogate model families and hyperparameter search."""
from .base import (FORMAT_VERSION, Family, NotFittedError, Standardizer, SurrogateModel, load_model,
                   model_from_bytes, model_to_bytes, save_model)
from .forest import RandomForestEnsemble, RegressionTree, fit_random_forest
from .knn import KnnRegressor, fit_knn
from .linear import LinearChain, LinearEnsemble, RankDeficientError, fit_linear_chain, fit_linear_ensemble
from .mlp import MlpDivergenceError, MlpRegressor, fit_mlp
from .search import (Choice, HyperSpace, IntRange, LogUniform, SearchResult, Uniform, cv_score,
                     default_space, domain_from_json, grid_search_cv, make_model, random_search_cv,
                     space_from_json)

__all__ = [
    "FORMAT_VERSION", "Family", "NotFittedError", "Standardizer", "SurrogateModel", "load_model",
    "model_from_bytes", "model_to_bytes", "save_model", "RandomForestEnsemble", "RegressionTree",
    "fit_random_forest", "KnnRegressor", "fit_knn", "LinearChain", "LinearEnsemble",
    "RankDeficientError", "fit_linear_chain", "fit_linear_ensemble", "MlpDivergenceError",
    "MlpRegressor", "fit_mlp", "Choice", "HyperSpace", "IntRange", "LogUniform", "SearchResult",
    "Uniform", "cv_score", "default_space", "domain_from_json", "grid_search_cv", "make_model",
    "random_search_cv", "space_from_json",
]
