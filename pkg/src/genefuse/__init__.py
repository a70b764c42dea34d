"""Microarray feature selection and classification: filter and wrapper
selectors feed a binary particle swarm, whose subset trains a voting
ensemble of boosted trees, a random forest and logistic regression."""

__version__ = "0.1.0"

from .dataset import (DataError, Dataset, FoldPlan, SplitSpec, StandardizationParams, load_arff,
                      load_csv, make_folds, split, synthesize)
from .evaluation import (ConfusionMatrix, MetricSet, RunReport, confusion, cross_validate, metrics,
                         repeated_runs, roc_auc)
from .filters import FilterReport, FilterThresholds, run_filters
from .pipeline import (PipelineConfig, PipelineResult, StageError, compare_members, fit_pipeline,
                       load_config, run_pipeline)
from .pool import CandidatePool, EmptyPoolError, build_pool
from .pso import PsoConfig, PsoResult, SubsetFitness, optimize
from .rfe import RfeConfig, RfeTrace, rfe_select

__all__ = [
    "DataError", "Dataset", "FoldPlan", "SplitSpec", "StandardizationParams", "load_arff",
    "load_csv", "make_folds", "split", "synthesize",
    "ConfusionMatrix", "MetricSet", "RunReport", "confusion", "cross_validate", "metrics",
    "repeated_runs", "roc_auc",
    "FilterReport", "FilterThresholds", "run_filters",
    "PipelineConfig", "PipelineResult", "StageError", "compare_members", "fit_pipeline",
    "load_config", "run_pipeline",
    "CandidatePool", "EmptyPoolError", "build_pool",
    "PsoConfig", "PsoResult", "SubsetFitness", "optimize",
    "RfeConfig", "RfeTrace", "rfe_select",
]
