"""Adversarial attacks and stability-regularized training for small regression nets."""
from .attacks import DEFAULT_FGSM, DEFAULT_PGD, AttackConfig, apply_attack, fgsm, pgd
from .data import (
    TEST,
    TRAIN,
    VAL,
    Dataset,
    Normalizer,
    apply_normalizer,
    compute_neighbors,
    fit_normalizer,
    load_csv,
    load_dataset_cache,
    nearest_train_distance,
    normalize_dataset,
    save_dataset_cache,
    split_dataset,
)
from .defenses import (
    DefenseConfig,
    NeighborInfo,
    ansr_param_grad,
    ansr_penalty,
    batch_loss_grad,
    pseudo_huber,
    total_loss_grad,
)
from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    NonFiniteError,
    RegrobustError,
    SearchFailed,
    TrainingDiverged,
)
from .nn import (
    GradientBundle,
    RegressionNet,
    backward,
    forward,
    grad_penalty_param_grad,
    initialize,
    input_gradient,
    load_net,
    net_from_dict,
    net_to_dict,
    params_to_vector,
    save_net,
    vector_to_net,
)
from .evaluation import (
    AggregateRecord,
    CellRecord,
    PointRecord,
    aggregate,
    evaluate_cell,
    mse,
    perturbation_profile,
    train_models,
)
from .seeding import derive_seed
from .training import (
    AdamState,
    SearchSpace,
    TrainConfig,
    adam_step,
    random_search,
    sample_defense_config,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "AggregateRecord",
    "AttackConfig",
    "CellRecord",
    "ConfigError",
    "DataError",
    "Dataset",
    "DefenseConfig",
    "DimensionError",
    "GradientBundle",
    "NeighborInfo",
    "NonFiniteError",
    "Normalizer",
    "PointRecord",
    "RegressionNet",
    "RegrobustError",
    "SearchFailed",
    "SearchSpace",
    "TrainConfig",
    "TrainingDiverged",
    "DEFAULT_FGSM",
    "DEFAULT_PGD",
    "TEST",
    "TRAIN",
    "VAL",
    "adam_step",
    "aggregate",
    "apply_normalizer",
    "ansr_param_grad",
    "ansr_penalty",
    "apply_attack",
    "backward",
    "batch_loss_grad",
    "compute_neighbors",
    "derive_seed",
    "evaluate_cell",
    "fgsm",
    "fit_normalizer",
    "forward",
    "grad_penalty_param_grad",
    "initialize",
    "input_gradient",
    "load_csv",
    "load_dataset_cache",
    "load_net",
    "mse",
    "nearest_train_distance",
    "net_from_dict",
    "net_to_dict",
    "normalize_dataset",
    "params_to_vector",
    "perturbation_profile",
    "pgd",
    "pseudo_huber",
    "random_search",
    "sample_defense_config",
    "save_dataset_cache",
    "save_net",
    "split_dataset",
    "total_loss_grad",
    "train",
    "train_models",
    "vector_to_net",
]
