from .config import RunConfig, load_config
from .diagnostics import ChorusAggregateError, ChorusError
from .distill import DistillConfig, labeled_sample_loss, unlabeled_sample_loss
from .experiment import MethodId, run_method, train_teachers

__all__ = [
    "ChorusAggregateError",
    "ChorusError",
    "DistillConfig",
    "MethodId",
    "RunConfig",
    "labeled_sample_loss",
    "load_config",
    "run_method",
    "train_teachers",
    "unlabeled_sample_loss",
]
