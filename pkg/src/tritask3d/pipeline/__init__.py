from .config import BalanceConfig, DataConfig, OptimConfig, RunConfig, load_config
from .evaluate import evaluate_cases, evaluate_checkpoint, infer, run_case
from .model import (
    ModelConfig,
    ModelOutputs,
    MultiTaskModel,
    build_model,
    build_single_task,
    shared_parameter_subset,
)
from .splits import five_fold_split, load_splits, save_splits
from .train import load_checkpoint, load_dataset, prepare_sample, seed_everything, train

__all__ = [
    "BalanceConfig",
    "DataConfig",
    "OptimConfig",
    "RunConfig",
    "load_config",
    "evaluate_cases",
    "evaluate_checkpoint",
    "infer",
    "run_case",
    "ModelConfig",
    "ModelOutputs",
    "MultiTaskModel",
    "build_model",
    "build_single_task",
    "shared_parameter_subset",
    "five_fold_split",
    "load_splits",
    "save_splits",
    "load_checkpoint",
    "load_dataset",
    "prepare_sample",
    "seed_everything",
    "train",
]
