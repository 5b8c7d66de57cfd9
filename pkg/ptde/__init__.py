# PTDE main package initialization
# Exports the public API: configuration, the two training stages, evaluation and the harness

from .config import ExperimentConfig, Variant, config_hash, load_config, parse_config
from .distill import DistillDataset, DistillResult, build_decentralized_policy, generate_dataset, train_student
from .evaluation import EvalResult, compute_prr, evaluate
from .exceptions import PTDEError
from .harness import Experiment, run_pipeline
from .learners import train_stage1, train_stage1_ac
from .report import report

# Define package version
__version__ = "0.1.0"

# Explicitly define public API
__all__ = [
    "DistillDataset",
    "DistillResult",
    "EvalResult",
    "Experiment",
    "ExperimentConfig",
    "PTDEError",
    "Variant",
    "build_decentralized_policy",
    "compute_prr",
    "config_hash",
    "evaluate",
    "generate_dataset",
    "load_config",
    "parse_config",
    "report",
    "run_pipeline",
    "train_stage1",
    "train_stage1_ac",
    "train_student",
]
