"""Minimal neural machinery for the learning agents.

A fixed-topology multilayer perceptron (two tanh hidden layers of 64,
linear output) with hand-written reverse-mode gradients, a functional
Adam optimizer, and the small loss / log-density functions the agents
need.  Everything is plain numpy; parameters are treated as immutable
values and updates return fresh arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HIDDEN = 64
CHECKPOINT_FORMAT_VERSION = 1

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class MlpParameters:
    """Weights and biases of the (in, 64, 64, out) network."""

    weights: tuple[np.ndarray, np.ndarray, np.ndarray]
    biases: tuple[np.ndarray, np.ndarray, np.ndarray]

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def as_list(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    @classmethod
    def from_list(cls, arrays) -> "MlpParameters":
        return cls(weights=tuple(arrays[:3]), biases=tuple(arrays[3:]))


@dataclass(frozen=True)
class GradientSet:
    """Partial derivatives mirroring MlpParameters, plus the input grad."""

    weights: tuple[np.ndarray, np.ndarray, np.ndarray]
    biases: tuple[np.ndarray, np.ndarray, np.ndarray]
    d_input: np.ndarray

    def as_list(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]


@dataclass
class AdamState:
    """First/second moment accumulators and hyperparameters."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_decay: float = 0.01


def init_mlp(in_dim: int, out_dim: int, seed: int, hidden: int = HIDDEN) -> MlpParameters:
    """Glorot-uniform weights, zero biases, from a seeded generator."""
    if in_dim < 1 or out_dim < 1:
        raise ValueError(f"dims must be >= 1, got in={in_dim}, out={out_dim}")
    rng = np.random.default_rng(seed)
    sizes = [in_dim, hidden, hidden, out_dim]
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParameters(weights=tuple(weights), biases=tuple(biases))


def forward(p: MlpParameters, x: np.ndarray):
    """y = W3.tanh(W2.tanh(W1 x + b1) + b2) + b3; cache feeds backward.

    Accepts a single input vector or a (batch, in_dim) matrix.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite network input")
    if x.shape[-1] != p.in_dim:
        raise ValueError(f"input dim {x.shape[-1]} != network in_dim {p.in_dim}")
    w1, w2, w3 = p.weights
    b1, b2, b3 = p.biases
    h1 = np.tanh(x @ w1 + b1)
    h2 = np.tanh(h1 @ w2 + b2)
    y = h2 @ w3 + b3
    return y, (x, h1, h2)


def backward(p: MlpParameters, cache, dL_dy: np.ndarray) -> GradientSet:
    """Exact reverse-mode gradients; batched inputs sum over the batch."""
    x, h1, h2 = cache
    dL_dy = np.asarray(dL_dy, dtype=float)
    if dL_dy.shape != (*x.shape[:-1], p.out_dim):
        raise ValueError(f"dL_dy shape {dL_dy.shape} inconsistent with cache")
    w1, w2, w3 = p.weights

    batched = x.ndim == 2
    x2 = x if batched else x[None, :]
    h1_2 = h1 if batched else h1[None, :]
    h2_2 = h2 if batched else h2[None, :]
    g = dL_dy if batched else dL_dy[None, :]

    dw3 = h2_2.T @ g
    db3 = g.sum(axis=0)
    g = (g @ w3.T) * (1.0 - h2_2**2)
    dw2 = h1_2.T @ g
    db2 = g.sum(axis=0)
    g = (g @ w2.T) * (1.0 - h1_2**2)
    dw1 = x2.T @ g
    db1 = g.sum(axis=0)
    d_input = g @ w1.T
    if not batched:
        d_input = d_input[0]
    return GradientSet(
        weights=(dw1, dw2, dw3), biases=(db1, db2, db3), d_input=d_input
    )


def init_adam(
    arrays, lr: float = 0.001, lr_decay: float = 0.01, **hyper
) -> AdamState:
    """Fresh zero-moment state shaped like the given parameter arrays."""
    if isinstance(arrays, MlpParameters):
        arrays = arrays.as_list()
    return AdamState(
        m=[np.zeros_like(a) for a in arrays],
        v=[np.zeros_like(a) for a in arrays],
        lr=lr,
        lr_decay=lr_decay,
        **hyper,
    )


def adam_update(arrays, grads, s: AdamState):
    """One bias-corrected Adam step over a list of parameter arrays.

    Effective rate decays as lr / (1 + lr_decay * updates_so_far).
    Returns (new_arrays, new_state); inputs are not mutated.
    """
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise ValueError(
                f"non-finite gradient (max |g| = {max(np.max(np.abs(x)) for x in grads)})"
            )
    t = s.t + 1
    lr_t = s.lr / (1.0 + s.lr_decay * (t - 1))
    new_arrays, new_m, new_v = [], [], []
    for a, g, m, v in zip(arrays, grads, s.m, s.v):
        m = s.beta1 * m + (1.0 - s.beta1) * g
        v = s.beta2 * v + (1.0 - s.beta2) * g**2
        m_hat = m / (1.0 - s.beta1**t)
        v_hat = v / (1.0 - s.beta2**t)
        new_arrays.append(a - lr_t * m_hat / (np.sqrt(v_hat) + s.eps))
        new_m.append(m)
        new_v.append(v)
    state = AdamState(
        m=new_m, v=new_v, t=t, lr=s.lr, beta1=s.beta1, beta2=s.beta2,
        eps=s.eps, lr_decay=s.lr_decay,
    )
    return new_arrays, state


def adam_step(p: MlpParameters, g: GradientSet, s: AdamState):
    """Adam over a whole network; returns (new_params, new_state)."""
    arrays, state = adam_update(p.as_list(), g.as_list(), s)
    return MlpParameters.from_list(arrays), state


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error and its gradient w.r.t. pred."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff**2))
    return loss, 2.0 * diff / diff.size


def gaussian_logprob(mean: np.ndarray, log_std: np.ndarray, sample: np.ndarray):
    """Diagonal Gaussian log-density with analytic gradients.

    Broadcasts over leading batch dimensions; the distribution axis is the
    last one.  Returns (logp, d_logp/d_mean, d_logp/d_log_std).
    """
    mean = np.asarray(mean, dtype=float)
    log_std = np.asarray(log_std, dtype=float)
    sample = np.asarray(sample, dtype=float)
    std = np.exp(log_std)
    z = (sample - mean) / std
    logp = np.sum(-0.5 * z**2 - log_std - 0.5 * LOG_2PI, axis=-1)
    d_mean = z / std
    d_log_std = np.broadcast_to(z**2 - 1.0, d_mean.shape).copy()
    return logp, d_mean, d_log_std


def save_checkpoint(path, networks: dict, extras: dict | None = None) -> None:
    """Write named networks (and extra flat arrays) to a versioned .npz."""
    payload = {"format_version": np.array(CHECKPOINT_FORMAT_VERSION)}
    for name, p in networks.items():
        for i, w in enumerate(p.weights):
            payload[f"{name}__w{i}"] = w
        for i, b in enumerate(p.biases):
            payload[f"{name}__b{i}"] = b
    for name, arr in (extras or {}).items():
        payload[f"extra__{name}"] = arr
    np.savez(path, **payload)


def load_checkpoint(path):
    """Read back networks and extras written by save_checkpoint."""
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format version {version}")
        names = {k.split("__")[0] for k in data.files if "__w0" in k}
        networks = {}
        for name in names:
            networks[name] = MlpParameters(
                weights=tuple(data[f"{name}__w{i}"] for i in range(3)),
                biases=tuple(data[f"{name}__b{i}"] for i in range(3)),
            )
        extras = {
            k[len("extra__"):]: data[k] for k in data.files if k.startswith("extra__")
        }
    return networks, extras
