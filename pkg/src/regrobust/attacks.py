"""Gradient-based L-infinity attacks on regression networks.

The attack objective is always the plain squared error (y - f(x))^2, whatever
loss the model was trained with. Both attacks accept a single point (D,) with
a scalar target or a batch (N, D) with targets (N,) and perturb rows
independently.
"""
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .nn import RegressionNet, _as_batch, input_gradient

ATTACK_KINDS = ("none", "fgsm", "pgd")


@dataclass(frozen=True)
class AttackConfig:
    kind: str
    epsilon: float = 0.1  # per-step magnitude (fgsm: the whole perturbation)
    rho: float = 0.1  # pgd ball radius around the clean point
    steps: int = 10

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ConfigError(f"kind must be one of {ATTACK_KINDS}, got {self.kind!r}")
        if self.kind == "none":
            return
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.kind == "pgd":
            if not (np.isfinite(self.rho) and self.rho > 0):
                raise ConfigError(f"rho must be positive, got {self.rho}")
            if int(self.steps) < 1:
                raise ConfigError(f"steps must be >= 1, got {self.steps}")
            if self.epsilon > 2.0 * self.rho:
                warnings.warn(
                    f"pgd step size {self.epsilon} exceeds the ball diameter "
                    f"{2.0 * self.rho}; iterates will just bounce between faces",
                    stacklevel=2,
                )


DEFAULT_NONE = AttackConfig(kind="none")
DEFAULT_FGSM = AttackConfig(kind="fgsm", epsilon=0.1)
DEFAULT_PGD = AttackConfig(kind="pgd", epsilon=0.025, rho=0.1, steps=10)


def fgsm(net: RegressionNet, x, y, epsilon: float):
    """One signed-gradient step: x + epsilon * sign(d (y - f(x))^2 / d x).

    Coordinates with zero gradient stay put (sign(0) = 0).
    """
    if not (np.isfinite(epsilon) and epsilon > 0):
        raise ConfigError(f"epsilon must be positive, got {epsilon}")
    X, single = _as_batch(net, x)
    g = input_gradient(net, X, np.atleast_1d(np.asarray(y, dtype=np.float64)))
    out = X + epsilon * np.sign(g)
    return out[0] if single else out


def pgd(net: RegressionNet, x, y, cfg: AttackConfig):
    """Iterated signed-gradient ascent, clipped to the L-inf ball of radius rho."""
    if cfg.kind != "pgd":
        raise ConfigError(f"pgd needs a pgd config, got kind={cfg.kind!r}")
    X, single = _as_batch(net, x)
    Y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    lo = X - cfg.rho
    hi = X + cfg.rho
    adv = X.copy()
    for _ in range(int(cfg.steps)):
        g = input_gradient(net, adv, Y)
        adv = np.clip(adv + cfg.epsilon * np.sign(g), lo, hi)
    return adv[0] if single else adv


def apply_attack(net: RegressionNet, x, y, cfg: AttackConfig):
    """Dispatch on cfg.kind; kind 'none' returns an unmodified copy."""
    if cfg.kind == "none":
        X, single = _as_batch(net, x)
        return X[0].copy() if single else X.copy()
    if cfg.kind == "fgsm":
        return fgsm(net, x, y, cfg.epsilon)
    return pgd(net, x, y, cfg)
