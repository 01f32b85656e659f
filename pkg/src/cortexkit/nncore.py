"""Dense-network primitives: activations, layers, losses, and RMSprop.

Everything is float64 and deterministic: weights come from a caller-provided
numpy Generator and all math is plain numpy, so a fixed seed reproduces runs
bit for bit.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .validation import check_matrix

ACTIVATIONS = ("tanh", "sigmoid", "leakyrelu", "identity")
LOSSES = ("cross_entropy", "mse")

LEAKY_SLOPE = 0.01
RMSPROP_ALPHA = 0.99
RMSPROP_EPS = 1e-8


class Param:
    """A weight array together with its gradient and RMSprop accumulator."""

    __slots__ = ("value", "grad", "rms")

    def __init__(self, value: np.ndarray):
        self.value = np.array(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.rms = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def copy(self) -> "Param":
        out = Param(self.value)
        out.grad[...] = self.grad
        out.rms[...] = self.rms
        return out


def init_weight(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform in (-1/sqrt(fan_in), +1/sqrt(fan_in))."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def activate(x: np.ndarray, kind: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if kind == "tanh":
        return np.tanh(x)
    if kind == "sigmoid":
        return ad._sigmoid(x)
    if kind == "leakyrelu":
        return np.where(x >= 0, x, LEAKY_SLOPE * x)
    if kind == "identity":
        return x.copy()
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activate_node(x: ad.Node, kind: str) -> ad.Node:
    if kind == "tanh":
        return ad.tanh(x)
    if kind == "sigmoid":
        return ad.sigmoid(x)
    if kind == "leakyrelu":
        return ad.leaky_relu(x, LEAKY_SLOPE)
    if kind == "identity":
        return x
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def linear_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """y = x @ W + b with b broadcast over rows."""
    x = check_matrix(x, "x")
    W = check_matrix(W, "W")
    b = np.asarray(b, dtype=np.float64)
    if x.shape[1] != W.shape[0]:
        raise ValueError(f"x has {x.shape[1]} columns but W has {W.shape[0]} rows")
    if b.shape != (W.shape[1],):
        raise ValueError(f"bias shape {b.shape} does not match W output dim {W.shape[1]}")
    return x @ W + b


def shortcut_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray, kind: str) -> np.ndarray:
    """y = actfunc(x @ W + b) + x; requires square W so dims match."""
    W = check_matrix(W, "W")
    if W.shape[0] != W.shape[1]:
        raise ValueError(f"shortcut needs square W, got {W.shape}")
    return activate(linear_forward(x, W, b), kind) + np.asarray(x, dtype=np.float64)


def softmax(logits: np.ndarray) -> np.ndarray:
    return ad._softmax(np.asarray(logits, dtype=np.float64))


def cross_entropy(logits: np.ndarray, onehot: np.ndarray) -> float:
    probs = softmax(logits)
    return float(-(np.asarray(onehot) * np.log(probs)).sum(axis=1).mean())


def mean_squared_error(pred: np.ndarray, target: np.ndarray) -> float:
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float((diff * diff).mean())


def loss_forward(
    x: np.ndarray, W: np.ndarray, b: np.ndarray, kind: str, label: np.ndarray
) -> float:
    """Linear prediction head followed by the chosen loss."""
    logits = linear_forward(x, W, b)
    label = np.asarray(label, dtype=np.float64)
    if label.shape != logits.shape:
        raise ValueError(f"label shape {label.shape} does not match logits {logits.shape}")
    if kind == "cross_entropy":
        return cross_entropy(logits, label)
    if kind == "mse":
        return mean_squared_error(logits, label)
    raise ValueError(f"unknown loss {kind!r}; expected one of {LOSSES}")


def normalize_sample(x: np.ndarray) -> np.ndarray:
    """Shift/scale one sample to mean 0, population stddev 1."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        raise ValueError("normalize_sample needs at least 2 elements")
    std = x.std()
    if std == 0.0:
        raise ValueError("cannot normalize a constant sample (zero stddev)")
    return (x - x.mean()) / std


def rmsprop_step(param: Param, lr: float) -> None:
    """rms <- a*rms + (1-a)*g^2; value <- value - lr*g/(sqrt(rms)+eps)."""
    g = param.grad
    param.rms *= RMSPROP_ALPHA
    param.rms += (1.0 - RMSPROP_ALPHA) * g * g
    param.value -= lr * g / (np.sqrt(param.rms) + RMSPROP_EPS)
