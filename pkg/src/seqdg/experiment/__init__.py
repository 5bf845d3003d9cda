"""Leave-one-domain-out training, ablation arms, metrics and run outputs."""
from .config import ARMS, ARM_TERMS, DataConfig, ExperimentConfig, load_config, preset
from .metrics import MetricsReport, confusion_matrix, score
from .protocol import DomainRegistry, leave_one_out, run_ablation, run_fold
from .training import TrainResult, evaluate, train

__all__ = [
    "ARMS", "ARM_TERMS", "DataConfig", "ExperimentConfig", "load_config", "preset",
    "MetricsReport", "confusion_matrix", "score",
    "DomainRegistry", "leave_one_out", "run_ablation", "run_fold",
    "TrainResult", "evaluate", "train",
]
