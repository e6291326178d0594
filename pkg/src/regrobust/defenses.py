"""Training-time defenses: robust loss, gradient penalty, stability penalty.

The stability penalty for a training point x with nearest-neighbor distance d
and label gap g is a Monte-Carlo estimate of

    E_{dx ~ U(ball)} [ (f(x) - f(x + dx))^2 * 1[|f(x) - f(x + dx)| > g] ]

where the ball is the L-infinity ball of radius beta * d. Prediction swings
smaller than the gap to the nearest neighbor's label are considered benign and
are not penalized. The indicator is treated as constant when differentiating
(straight-through), so the gradient is exact for the gated squared term with
the gate frozen at its sampled value.

Batched entry points draw all perturbations for a batch with a single RNG
call; numpy's Generator fills that block exactly as the per-point calls would
consume it, so per-point and batched results agree to rounding error given the
same starting stream.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, NonFiniteError
from .losses import pseudo_huber  # noqa: F401  (public API of this module)
from .nn import (
    RegressionNet,
    _as_batch,
    batch_backward,
    forward_parts,
    grad_penalty_batch,
    grad_penalty_param_grad,  # noqa: F401  (re-exported for defense users)
)

DEFENSE_KINDS = ("none", "pseudo_huber", "grad_reg", "ansr", "combined")

# Primary fitting loss per defense kind; penalties are added on top of it.
_PRIMARY_LOSS = {
    "none": "squared_error",
    "grad_reg": "squared_error",
    "ansr": "squared_error",
    "pseudo_huber": "pseudo_huber",
    "combined": "pseudo_huber",
}


@dataclass(frozen=True)
class DefenseConfig:
    """Defense selection plus every tunable knob.

    Fields irrelevant to ``kind`` are ignored by the math but still validated,
    so a config can be round-tripped through files without surprises.
    """

    kind: str
    delta: float = 1.0  # pseudo-Huber scale
    sigma: float = 0.1  # input-gradient penalty weight
    lam: float = 1.0  # stability penalty weight
    beta: float = 1.0  # perturbation radius as a multiple of nn distance
    n_samples: int = 100  # Monte-Carlo samples per point per step
    norm_p: str = "inf"

    def __post_init__(self):
        if self.kind not in DEFENSE_KINDS:
            raise ConfigError(f"kind must be one of {DEFENSE_KINDS}, got {self.kind!r}")
        for name in ("delta", "sigma", "lam", "beta"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ConfigError(f"{name} must be finite, got {v}")
        if not self.delta > 0:
            raise ConfigError(f"delta must be positive, got {self.delta}")
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if int(self.n_samples) < 1:
            raise ConfigError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.norm_p != "inf":
            raise ConfigError(f"only the inf norm is supported, got {self.norm_p!r}")

    @property
    def needs_neighbors(self) -> bool:
        return self.kind in ("ansr", "combined")

    @property
    def needs_rng(self) -> bool:
        return self.kind in ("ansr", "combined")


@dataclass(frozen=True)
class NeighborInfo:
    """Nearest training neighbor of a training point, under the L-inf norm."""

    nn_index: int
    nn_distance: float
    label_gap: float

    def __post_init__(self):
        if not (np.isfinite(self.nn_distance) and self.nn_distance >= 0):
            raise ConfigError(f"nn_distance must be finite and >= 0, got {self.nn_distance}")
        if not (np.isfinite(self.label_gap) and self.label_gap >= 0):
            raise ConfigError(f"label_gap must be finite and >= 0, got {self.label_gap}")


def _ansr_batch(net: RegressionNet, X, radii, gaps, n_samples: int, rng):
    """Stability penalty values and the summed unscaled theta-gradient.

    Returns (omega (B,), grad_sum (n_params,)) where omega[i] is the
    Monte-Carlo penalty for row i and grad_sum is sum_i d omega[i] / d theta
    with the sampled perturbations and gates held fixed.

    A radius of zero makes every perturbed copy equal to the clean point, so
    the true penalty is exactly zero; the gate enforces that explicitly
    because equal inputs routed through different matmul shapes can round one
    ulp apart. The row's samples are still drawn to keep the stream aligned.
    """
    X, _ = _as_batch(net, X)
    B, D = X.shape
    S = int(n_samples)
    radii = np.asarray(radii, dtype=np.float64)
    gaps = np.asarray(gaps, dtype=np.float64)
    if radii.shape != (B,) or gaps.shape != (B,):
        raise DimensionError(
            f"radii/gaps must have shape ({B},), got {radii.shape} and {gaps.shape}"
        )
    if not (np.all(np.isfinite(radii)) and np.all(np.isfinite(gaps))):
        raise NonFiniteError("radii/gaps contain NaN or infinity")
    if np.any(radii < 0) or np.any(gaps < 0):
        raise ConfigError("radii and label gaps must be >= 0")

    U = rng.uniform(-1.0, 1.0, size=(B, S, D))
    XP = X[:, None, :] + U * radii[:, None, None]

    z0, a0, _, y0, act1_0, _ = forward_parts(net, X)
    zp, ap, _, yp, act1_p, _ = forward_parts(net, XP.reshape(B * S, D))
    yp = yp.reshape(B, S)
    dy = y0[:, None] - yp  # (B, S)
    gate = (np.abs(dy) > gaps[:, None]) & (radii[:, None] > 0.0)
    gated = np.where(gate, dy, 0.0)
    omega = (gated * gated).mean(axis=1)  # (B,)

    # d omega_i / d theta = (2/S) sum_s gated * (d f(x_i)/d theta - d f(x_i+dx)/d theta)
    coef = (2.0 / S) * gated  # (B, S)
    csum = coef.sum(axis=1)  # (B,)

    w2 = net.w2
    m0 = (z0 > 0.0) * w2  # (B, H)
    mp = ((zp > 0.0) * w2).reshape(B, S, -1)  # (B, S, H)
    ap = ap.reshape(B, S, -1)
    act1_p = act1_p.reshape(B, S)

    c0 = csum * act1_0  # (B,)  weight on the clean-point jacobian
    cp = coef * act1_p  # (B, S) weight on each perturbed-point jacobian

    d_b2 = c0.sum() - cp.sum()
    d_w2 = c0 @ a0 - np.einsum("bs,bsh->h", cp, ap)
    dz0 = m0 * c0[:, None]  # (B, H)
    dzp = mp * cp[:, :, None]  # (B, S, H)
    d_b1 = dz0.sum(axis=0) - dzp.sum(axis=(0, 1))
    d_w1 = dz0.T @ X - np.einsum("bsh,bsd->hd", dzp, XP)
    grad_sum = np.concatenate([d_w1.ravel(), d_b1, d_w2, [d_b2]])
    return omega, grad_sum


def _require_rng(rng):
    if rng is None:
        raise ConfigError("this defense draws random perturbations and needs an rng")
    return rng


def ansr_penalty(net: RegressionNet, x, neighbor: NeighborInfo, cfg: DefenseConfig, rng) -> float:
    """Monte-Carlo stability penalty for one training point (unweighted by lambda)."""
    _require_rng(rng)
    X, single = _as_batch(net, x)
    if not single:
        raise DimensionError("ansr_penalty expects a single input point")
    radius = cfg.beta * neighbor.nn_distance
    omega, _ = _ansr_batch(net, X, [radius], [neighbor.label_gap], cfg.n_samples, rng)
    return float(omega[0])


def ansr_param_grad(
    net: RegressionNet, x, neighbor: NeighborInfo, cfg: DefenseConfig, rng
) -> np.ndarray:
    """Theta-gradient of lambda * penalty with samples and gates held fixed."""
    _require_rng(rng)
    X, single = _as_batch(net, x)
    if not single:
        raise DimensionError("ansr_param_grad expects a single input point")
    radius = cfg.beta * neighbor.nn_distance
    _, grad_sum = _ansr_batch(net, X, [radius], [neighbor.label_gap], cfg.n_samples, rng)
    return cfg.lam * grad_sum


def batch_loss_grad(
    net: RegressionNet,
    X,
    Y,
    cfg: DefenseConfig,
    rng=None,
    nn_distances=None,
    label_gaps=None,
):
    """Mean training objective and its mean theta-gradient over a batch.

    The objective is primary_loss + sigma-penalty + lambda-penalty with the
    terms selected by cfg.kind. nn_distances/label_gaps are required only when
    the stability penalty is active; fresh perturbations are drawn from rng on
    every call.
    """
    X, _ = _as_batch(net, X)
    Y = np.asarray(Y, dtype=np.float64)
    B = X.shape[0]
    loss_kind = _PRIMARY_LOSS[cfg.kind]
    values, grad_sum = batch_backward(net, X, Y, loss=loss_kind, delta=cfg.delta)
    total = values.sum()

    if cfg.kind in ("grad_reg", "combined"):
        penalties, pgrad = grad_penalty_batch(net, X, Y, cfg.sigma, loss=loss_kind, delta=cfg.delta)
        total += penalties.sum()
        grad_sum = grad_sum + pgrad

    if cfg.kind in ("ansr", "combined"):
        _require_rng(rng)
        if nn_distances is None or label_gaps is None:
            raise ConfigError("stability penalty needs nn_distances and label_gaps")
        radii = cfg.beta * np.asarray(nn_distances, dtype=np.float64)
        omega, ograd = _ansr_batch(net, X, radii, label_gaps, cfg.n_samples, rng)
        total += cfg.lam * omega.sum()
        grad_sum = grad_sum + cfg.lam * ograd

    return total / B, grad_sum / B


def total_loss_grad(
    net: RegressionNet,
    x,
    y,
    neighbor,
    cfg: DefenseConfig,
    rng=None,
):
    """Per-point training objective and exact theta-gradient.

    neighbor may be None for kinds that do not use it.
    """
    X, single = _as_batch(net, x)
    if not single:
        raise DimensionError("total_loss_grad expects a single input point")
    if cfg.needs_neighbors:
        if neighbor is None:
            raise ConfigError(f"defense {cfg.kind!r} needs neighbor info")
        nn_d = [neighbor.nn_distance]
        gaps = [neighbor.label_gap]
    else:
        nn_d = gaps = None
    loss, grad = batch_loss_grad(
        net, X, [float(y)], cfg, rng=rng, nn_distances=nn_d, label_gaps=gaps
    )
    return float(loss), grad
