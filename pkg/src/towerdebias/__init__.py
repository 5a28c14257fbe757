"""towerdebias: sensitive-attribute removal for black-box predictions.

Given a model that predicts from features plus sensitive attributes, the
:class:`TowerDebias` estimator replaces each prediction by the average of the
model's predictions over the k reference rows nearest in feature space, which
estimates the prediction's expectation at fixed features and so carries no
direct dependence on the sensitive attributes. The rest of the package
supplies baseline models, fairness/utility metrics, a repeated-holdout
experiment harness, and a seeded Gaussian engine that verifies the supporting
mathematics.
"""

__version__ = "0.1.0"

from .data import (Dataset, Role, SplitPlan, Standardizer, fit_standardizer,
                   load_csv, load_schema, split)
from .debias import TowerDebias, build_index, classify
from .exceptions import (ConstantColumnError, ConvergenceWarning, DataError,
                         DegenerateSpecError, NumericalError, TowerDebiasError)
from .harness import (DEFAULT_K_GRID, ExperimentConfig, SweepResult,
                      export_results, run_experiment, write_synthetic)
from .metrics import (CorrelationEntry, FairnessReport, fairness_report, mape,
                      misclassification_rate, pearson)
from .models import (FitConfig, FittedPredictor, KnnModel, LinearModel,
                     LogisticModel, design_columns, export_predictions,
                     fit_knn_predictor, fit_linear, fit_logistic,
                     load_external_predictions, load_model, save_model)
from .theory import (GaussianSpec, PopulationCoefficients, build_spec,
                     correlation_reduction_closed_form, population_coefficients,
                     preset_spec, random_spec, residualize, residualize_dataset,
                     run_inequality_trials, sample_dataset, sample_matrix,
                     verify_correlation_inequality, verify_tower)

__all__ = [
    "__version__",
    # data
    "Dataset", "Role", "SplitPlan", "Standardizer", "fit_standardizer",
    "load_csv", "load_schema", "split",
    # debias
    "TowerDebias", "build_index", "classify",
    # errors
    "TowerDebiasError", "DataError", "NumericalError", "ConstantColumnError",
    "DegenerateSpecError", "ConvergenceWarning",
    # models
    "FitConfig", "FittedPredictor", "LinearModel", "LogisticModel", "KnnModel",
    "design_columns", "fit_linear", "fit_logistic", "fit_knn_predictor",
    "load_external_predictions", "export_predictions", "save_model", "load_model",
    # metrics
    "pearson", "mape", "misclassification_rate", "fairness_report",
    "FairnessReport", "CorrelationEntry",
    # theory
    "GaussianSpec", "PopulationCoefficients", "population_coefficients",
    "correlation_reduction_closed_form", "sample_matrix", "sample_dataset",
    "random_spec", "build_spec", "preset_spec", "verify_tower", "residualize",
    "residualize_dataset", "verify_correlation_inequality", "run_inequality_trials",
    # harness
    "DEFAULT_K_GRID", "ExperimentConfig", "SweepResult", "run_experiment",
    "export_results", "write_synthetic",
]
