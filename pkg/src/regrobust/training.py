"""Minibatch Adam training and random-search hyperparameter tuning."""
from dataclasses import dataclass, replace

import numpy as np

from . import data as data_mod
from .attacks import DEFAULT_PGD, AttackConfig, apply_attack
from .defenses import DefenseConfig, batch_loss_grad
from .errors import ConfigError, DimensionError, SearchFailed, TrainingDiverged
from .nn import RegressionNet, forward, initialize, params_to_vector, vector_to_net
from .parallel import pmap
from .seeding import derive_seed

OBJECTIVES = ("val_mse_clean", "val_mse_pgd")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 200
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    hidden_dim: int | None = None  # None: hidden layer as wide as the input

    def __post_init__(self):
        if not (np.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if int(self.batch_size) < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if int(self.epochs) < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ConfigError("adam betas must lie in [0, 1)")
        if not self.adam_eps > 0:
            raise ConfigError(f"adam_eps must be positive, got {self.adam_eps}")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, n: int):
        return cls(m=np.zeros(n), v=np.zeros(n))


def adam_step(params, grads, state: AdamState, t: int, cfg: TrainConfig):
    """One bias-corrected Adam update. t is 1-based. Pure: returns new arrays."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise DimensionError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}"
        )
    if t < 1:
        raise ConfigError(f"adam step index must be >= 1, got {t}")
    m = cfg.adam_beta1 * state.m + (1.0 - cfg.adam_beta1) * grads
    v = cfg.adam_beta2 * state.v + (1.0 - cfg.adam_beta2) * grads * grads
    m_hat = m / (1.0 - cfg.adam_beta1**t)
    v_hat = v / (1.0 - cfg.adam_beta2**t)
    new_params = params - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return new_params, AdamState(m=m, v=v)


def train(
    dataset,
    defense: DefenseConfig,
    cfg: TrainConfig,
    neighbors: dict | None = None,
):
    """Train a fresh network on the train split under the given defense.

    Returns (net, history) where history is the per-epoch mean training loss
    (the full defended objective, averaged over minibatches by size). Fresh
    stability perturbations are drawn for every minibatch gradient step.
    Aborts with TrainingDiverged the moment the loss or parameters go
    non-finite.
    """
    rows = dataset.rows(data_mod.TRAIN)
    if len(rows) < 1:
        raise ConfigError("train split is empty")
    X = dataset.features[rows]
    Y = dataset.targets[rows]
    n = len(rows)

    if defense.needs_neighbors:
        if neighbors is None:
            raise ConfigError(f"defense {defense.kind!r} needs precomputed neighbors")
        nn_d, gaps = data_mod.neighbor_arrays(neighbors, rows)
    else:
        nn_d = gaps = None

    activation = "sigmoid" if dataset.target_bounded_01 else "identity"
    rng_init = np.random.default_rng(derive_seed(cfg.seed, "init"))
    net = initialize(X.shape[1], rng_init, hidden_dim=cfg.hidden_dim, output_activation=activation)
    theta = params_to_vector(net)
    state = AdamState.zeros(theta.size)
    rng_shuffle = np.random.default_rng(derive_seed(cfg.seed, "shuffle"))
    rng_penalty = np.random.default_rng(derive_seed(cfg.seed, "penalty"))

    history = []
    t = 0
    bs = int(cfg.batch_size)
    for epoch in range(int(cfg.epochs)):
        order = rng_shuffle.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            loss, grad = batch_loss_grad(
                vector_to_net(net, theta),
                X[idx],
                Y[idx],
                defense,
                rng=rng_penalty if defense.needs_rng else None,
                nn_distances=None if nn_d is None else nn_d[idx],
                label_gaps=None if gaps is None else gaps[idx],
            )
            t += 1
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch + 1}, step {t}")
            theta, state = adam_step(theta, grad, state, t, cfg)
            if not np.all(np.isfinite(theta)):
                raise TrainingDiverged(f"non-finite parameters at epoch {epoch + 1}, step {t}")
            epoch_loss += loss * len(idx)
        history.append(epoch_loss / n)
    return vector_to_net(net, theta), history


@dataclass(frozen=True)
class SearchSpace:
    """Uniform sampling intervals for each defense hyperparameter."""

    delta: tuple = (0.01, 16.0)
    sigma: tuple = (0.01, 16.0)
    beta: tuple = (0.5, 8.0)
    lam: tuple = (0.1, 10.0)
    n_trials: int = 20

    def __post_init__(self):
        for name in ("delta", "sigma", "beta", "lam"):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi) and 0 < lo <= hi):
                raise ConfigError(f"search range for {name} must satisfy 0 < lo <= hi, got {lo}, {hi}")
        if int(self.n_trials) < 1:
            raise ConfigError(f"n_trials must be >= 1, got {self.n_trials}")


# Which hyperparameters each defense kind actually tunes, in draw order.
TUNED_PARAMS = {
    "none": (),
    "pseudo_huber": ("delta",),
    "grad_reg": ("sigma",),
    "ansr": ("beta", "lam"),
    "combined": ("delta", "sigma", "beta", "lam"),
}


def sample_defense_config(kind: str, space: SearchSpace, rng, n_samples: int = 100) -> DefenseConfig:
    """Draw one candidate config, sampling only the parameters the kind uses."""
    if kind not in TUNED_PARAMS:
        raise ConfigError(f"unknown defense kind {kind!r}")
    draws = {}
    for name in TUNED_PARAMS[kind]:
        lo, hi = getattr(space, name)
        draws[name] = float(rng.uniform(lo, hi))
    return DefenseConfig(kind=kind, n_samples=n_samples, **draws)


@dataclass
class TrialRecord:
    trial: int
    source: str  # "injected" or "sampled"
    config: DefenseConfig
    value: float  # validation objective; NaN if training diverged
    train_seed: int


def _objective_value(net: RegressionNet, dataset, objective: str, attack: AttackConfig) -> float:
    rows = dataset.rows(data_mod.VAL)
    Xv = dataset.features[rows]
    Yv = dataset.targets[rows]
    if objective == "val_mse_pgd":
        Xv = apply_attack(net, Xv, Yv, attack)
    pred = forward(net, Xv)
    return float(np.mean((Yv - pred) ** 2))


def _trial_worker(payload) -> float:
    dataset, config, train_cfg, objective, attack, neighbors = payload
    try:
        net, _ = train(dataset, config, train_cfg, neighbors=neighbors)
    except TrainingDiverged:
        return float("nan")
    return _objective_value(net, dataset, objective, attack)


def random_search(
    dataset,
    kind: str,
    space: SearchSpace,
    objective: str,
    seed: int,
    train_cfg: TrainConfig,
    neighbors: dict | None = None,
    attack: AttackConfig | None = None,
    candidates=(),
    n_samples: int = 100,
    jobs: int = 1,
):
    """Uniform random search over the defense's hyperparameters.

    Trains one model per trial (independently seeded from the master seed),
    scores it on the validation split, and returns (best_config, records)
    where records logs every trial. Ties go to the earliest trial. Explicit
    candidate configs, if given, are evaluated before the sampled ones.
    Raises SearchFailed (carrying the log) if every trial diverged.
    """
    if objective not in OBJECTIVES:
        raise ConfigError(f"objective must be one of {OBJECTIVES}, got {objective!r}")
    if attack is None:
        attack = DEFAULT_PGD

    configs = [(c, "injected") for c in candidates]
    for i in range(int(space.n_trials)):
        rng = np.random.default_rng(derive_seed(seed, "sample", i))
        configs.append((sample_defense_config(kind, space, rng, n_samples=n_samples), "sampled"))

    payloads = []
    records = []
    for k, (config, source) in enumerate(configs):
        train_seed = derive_seed(seed, "trial", k)
        payloads.append(
            (dataset, config, replace(train_cfg, seed=train_seed), objective, attack, neighbors)
        )
        records.append(
            TrialRecord(trial=k, source=source, config=config, value=float("nan"), train_seed=train_seed)
        )

    values = pmap(_trial_worker, payloads, jobs=jobs)
    for rec, value in zip(records, values):
        rec.value = float(value)

    finite = [r for r in records if np.isfinite(r.value)]
    if not finite:
        raise SearchFailed(f"all {len(records)} search trials diverged for kind {kind!r}", records)
    best = min(finite, key=lambda r: (r.value, r.trial))
    return best.config, records
