"""Single hidden layer ReLU regression network with exact reverse-mode math.

Dense float64 numpy throughout. The flat parameter vector used by the
optimizer and all *_param_grad functions is laid out as

    [w1 row-major, b1, w2, b2]

and every gradient function returns that layout. ReLU' (0) is taken to be 0,
and all analytic gradients are exact for the piecewise-linear network, which
is what the finite-difference test suites check against.
"""
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, NonFiniteError
from .losses import loss_d1, loss_d2, loss_value

ACTIVATIONS = ("identity", "sigmoid")


@dataclass
class RegressionNet:
    """Weights of f(x) = act(w2 . relu(w1 @ x + b1) + b2)."""

    w1: np.ndarray  # (hidden, input)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: float
    output_activation: str = "identity"

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        self.b2 = float(self.b2)
        if self.w1.ndim != 2:
            raise DimensionError(f"w1 must be 2-d, got shape {self.w1.shape}")
        h = self.w1.shape[0]
        if self.b1.shape != (h,) or self.w2.shape != (h,):
            raise DimensionError(
                f"b1/w2 must have shape ({h},), got {self.b1.shape} and {self.w2.shape}"
            )
        if self.output_activation not in ACTIVATIONS:
            raise ConfigError(
                f"output_activation must be one of {ACTIVATIONS}, got {self.output_activation!r}"
            )

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def n_params(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + 1


def initialize(input_dim: int, rng, hidden_dim=None, output_activation: str = "identity"):
    """Glorot-uniform weights, zero biases.

    hidden_dim defaults to input_dim (hidden layer as wide as the input).
    """
    if input_dim < 1:
        raise DimensionError(f"input_dim must be >= 1, got {input_dim}")
    h = input_dim if hidden_dim is None else int(hidden_dim)
    if h < 1:
        raise DimensionError(f"hidden_dim must be >= 1, got {h}")
    lim1 = np.sqrt(6.0 / (input_dim + h))
    lim2 = np.sqrt(6.0 / (h + 1))
    return RegressionNet(
        w1=rng.uniform(-lim1, lim1, size=(h, input_dim)),
        b1=np.zeros(h),
        w2=rng.uniform(-lim2, lim2, size=h),
        b2=0.0,
        output_activation=output_activation,
    )


def params_to_vector(net: RegressionNet) -> np.ndarray:
    return np.concatenate([net.w1.ravel(), net.b1, net.w2, [net.b2]])


def vector_to_net(net: RegressionNet, theta: np.ndarray) -> RegressionNet:
    """Rebuild a net with the same architecture from a flat parameter vector."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (net.n_params,):
        raise DimensionError(
            f"expected parameter vector of shape ({net.n_params},), got {theta.shape}"
        )
    h, d = net.hidden_dim, net.input_dim
    k = h * d
    return RegressionNet(
        w1=theta[:k].reshape(h, d),
        b1=theta[k : k + h],
        w2=theta[k + h : k + 2 * h],
        b2=theta[-1],
        output_activation=net.output_activation,
    )


def _as_batch(net: RegressionNet, x) -> tuple[np.ndarray, bool]:
    """Coerce x to a (N, D) float64 matrix; flag whether input was a single point."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise DimensionError(
            f"input must have {net.input_dim} features, got shape {np.asarray(x).shape}"
        )
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("network input contains NaN or infinity")
    return x, single


def _sigmoid(u):
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    e = np.exp(u[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def forward_parts(net: RegressionNet, X: np.ndarray):
    """All intermediates for a (N, D) batch.

    Returns (z, a, u, yhat, act1, act2) where z = w1 @ x + b1 pre-activations,
    a = relu(z), u is the pre-output, yhat the prediction, and act1/act2 the
    first/second derivatives of the output activation at u.
    """
    z = X @ net.w1.T + net.b1
    a = np.maximum(z, 0.0)
    u = a @ net.w2 + net.b2
    if net.output_activation == "identity":
        yhat = u
        act1 = np.ones_like(u)
        act2 = np.zeros_like(u)
    else:
        p = _sigmoid(u)
        yhat = p
        act1 = p * (1.0 - p)
        act2 = act1 * (1.0 - 2.0 * p)
    return z, a, u, yhat, act1, act2


def forward(net: RegressionNet, x):
    """Predict for one point (returns float) or a batch (returns (N,) array)."""
    X, single = _as_batch(net, x)
    yhat = forward_parts(net, X)[3]
    return float(yhat[0]) if single else yhat


@dataclass
class GradientBundle:
    """Loss value with gradients for one (x, y) pair."""

    value: float
    d_theta: np.ndarray  # (n_params,)
    d_x: np.ndarray  # (input_dim,)


def _pack_grads(net, d_w1, d_b1, d_w2, d_b2) -> np.ndarray:
    return np.concatenate([d_w1.ravel(), d_b1, d_w2, [d_b2]])


def backward(net: RegressionNet, x, y, loss: str = "squared_error", delta: float = 1.0):
    """Value and exact gradients of loss(y - f(x)) for a single point."""
    X, single = _as_batch(net, x)
    if not single:
        raise DimensionError("backward expects a single input point")
    y = float(y)
    if not np.isfinite(y):
        raise NonFiniteError("target is not finite")
    z, a, u, yhat, act1, _ = forward_parts(net, X)
    resid = y - yhat[0]
    value = float(loss_value(loss, resid, delta))
    # dl/dyhat = -l'(resid); chain through the output activation.
    g_u = -float(loss_d1(loss, resid, delta)) * act1[0]
    mask = (z[0] > 0.0).astype(np.float64)
    delta_z = g_u * net.w2 * mask
    d_w1 = np.outer(delta_z, X[0])
    d_b1 = delta_z
    d_w2 = g_u * a[0]
    d_b2 = g_u
    d_x = net.w1.T @ delta_z
    return GradientBundle(value=value, d_theta=_pack_grads(net, d_w1, d_b1, d_w2, d_b2), d_x=d_x)


def batch_backward(net: RegressionNet, X, Y, loss: str = "squared_error", delta: float = 1.0):
    """Per-point loss values and the summed parameter gradient over a batch.

    Returns (values (N,), grad_sum (n_params,)).
    """
    X, _ = _as_batch(net, X)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape != (X.shape[0],):
        raise DimensionError(f"targets must have shape ({X.shape[0]},), got {Y.shape}")
    if not np.all(np.isfinite(Y)):
        raise NonFiniteError("targets contain NaN or infinity")
    z, a, u, yhat, act1, _ = forward_parts(net, X)
    resid = Y - yhat
    values = loss_value(loss, resid, delta)
    g_u = -loss_d1(loss, resid, delta) * act1  # (N,)
    mvec = (z > 0.0) * net.w2  # (N, H)
    dz = mvec * g_u[:, None]
    d_w1 = dz.T @ X
    d_b1 = dz.sum(axis=0)
    d_w2 = (a * g_u[:, None]).sum(axis=0)
    d_b2 = g_u.sum()
    return np.asarray(values, dtype=np.float64), _pack_grads(net, d_w1, d_b1, d_w2, d_b2)


def input_gradient(net: RegressionNet, X, Y) -> np.ndarray:
    """Gradient of the squared error (y - f(x))^2 with respect to x, per row.

    This is the attack objective's gradient regardless of which loss the
    network was trained with.
    """
    X2, single = _as_batch(net, X)
    Y = np.atleast_1d(np.asarray(Y, dtype=np.float64))
    if Y.shape != (X2.shape[0],):
        raise DimensionError(f"targets must have shape ({X2.shape[0]},), got {Y.shape}")
    if not np.all(np.isfinite(Y)):
        raise NonFiniteError("targets contain NaN or infinity")
    z, _, _, yhat, act1, _ = forward_parts(net, X2)
    g_u = -2.0 * (Y - yhat) * act1  # (N,)
    grads = (((z > 0.0) * net.w2) * g_u[:, None]) @ net.w1  # (N, D)
    return grads[0] if single else grads


def grad_penalty_batch(
    net: RegressionNet,
    X,
    Y,
    sigma: float,
    loss: str = "squared_error",
    delta: float = 1.0,
):
    """Input-gradient L1 penalty sigma * ||d loss/d x||_1 and its theta-gradient.

    The theta-gradient treats the ReLU activation pattern and the signs of
    d loss/d x as locally constant, which is exact almost everywhere for the
    piecewise-linear network. Returns (penalties (N,), grad_sum (n_params,)).
    """
    X, _ = _as_batch(net, X)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape != (X.shape[0],):
        raise DimensionError(f"targets must have shape ({X.shape[0]},), got {Y.shape}")
    z, a, u, yhat, act1, act2 = forward_parts(net, X)
    resid = Y - yhat
    l1 = loss_d1(loss, resid, delta)
    l2 = loss_d2(loss, resid, delta)
    g_u = -l1 * act1  # (N,)
    # d g_u / d u with the loss evaluated at resid = y - act(u).
    k = l2 * act1 * act1 - l1 * act2  # (N,)
    mask = z > 0.0
    mvec = mask * net.w2  # (N, H)
    d_x = (mvec * g_u[:, None]) @ net.w1  # (N, D)
    s = np.sign(d_x)  # (N, D)
    penalties = sigma * np.abs(d_x).sum(axis=1)
    v = s @ net.w1.T  # (N, H)
    c = (v * mvec).sum(axis=1)  # (N,)
    kc = k * c
    d_w1 = (mvec * kc[:, None]).T @ X + (mvec * g_u[:, None]).T @ s
    d_b1 = (mvec * kc[:, None]).sum(axis=0)
    d_w2 = (a * kc[:, None] + (v * mask) * g_u[:, None]).sum(axis=0)
    d_b2 = kc.sum()
    return penalties, sigma * _pack_grads(net, d_w1, d_b1, d_w2, d_b2)


def grad_penalty_param_grad(
    net: RegressionNet,
    x,
    y,
    sigma: float,
    loss: str = "squared_error",
    delta: float = 1.0,
) -> np.ndarray:
    """Theta-gradient of sigma * ||d loss(y - f(x)) / d x||_1 for one point."""
    X, single = _as_batch(net, x)
    if not single:
        raise DimensionError("grad_penalty_param_grad expects a single input point")
    _, grad = grad_penalty_batch(net, X, np.asarray([float(y)]), sigma, loss, delta)
    return grad


def net_to_dict(net: RegressionNet) -> dict:
    return {
        "input_dim": net.input_dim,
        "hidden_dim": net.hidden_dim,
        "output_activation": net.output_activation,
        "w1": net.w1.ravel().tolist(),
        "b1": net.b1.tolist(),
        "w2": net.w2.tolist(),
        "b2": net.b2,
    }


def net_from_dict(d: dict) -> RegressionNet:
    try:
        h, di = int(d["hidden_dim"]), int(d["input_dim"])
        return RegressionNet(
            w1=np.asarray(d["w1"], dtype=np.float64).reshape(h, di),
            b1=np.asarray(d["b1"], dtype=np.float64),
            w2=np.asarray(d["w2"], dtype=np.float64),
            b2=float(d["b2"]),
            output_activation=d.get("output_activation", "identity"),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"malformed network dict: {e}") from e


def save_net(net: RegressionNet, path) -> None:
    with open(path, "w") as f:
        json.dump(net_to_dict(net), f, sort_keys=True)
        f.write("\n")


def load_net(path) -> RegressionNet:
    with open(path) as f:
        return net_from_dict(json.load(f))
