"""Locally supervised module built from explicit neuron-level update rules.

The block computes Output = Input + tanh(Input W + b), pools each contiguous
group of rho outputs into one readout unit, and forms a sigmoid prediction per
unit against a one-hot target under squared error. All four parameter deltas
are closed-form expressions evaluated directly (no recorded graph); each
column of W reads the error of exactly one readout unit, so the update is as
local as the wiring.

Two derivative conventions are provided for the tanh factor:

* "consistent": 1 - tanh(z)^2 with tanh(z) = Output - Input, the exact
  derivative of the nonlinear branch. Finite-difference checks pass in this
  mode.
* "paper_literal": 1 - Output^2, i.e. the shortcut sum fed back through the
  derivative. Kept selectable for comparison; not gradient-exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from . import nncore
from .lwbp import ModuleMetrics
from .validation import check_X, check_X_y, check_rng, onehot_encode

GRADIENT_MODES = ("consistent", "paper_literal")


@dataclass
class BioTrace:
    """Values recorded by one forward pass."""

    input: np.ndarray     # [B, in_dim]
    output: np.ndarray    # [B, D]
    out_mean: np.ndarray  # [B, K] blockwise means
    pred: np.ndarray      # [B, K] sigmoid readouts


class BioModule:
    """One block of D units pooled into K readout groups of rho = D // K."""

    def __init__(self, rng, in_dim, width, n_groups, kind="hidden"):
        if width % n_groups != 0:
            raise ValueError(f"width {width} not divisible by {n_groups} readout units")
        if kind not in ("hidden", "compress"):
            raise ValueError(f"kind must be 'hidden' or 'compress', got {kind!r}")
        if kind == "hidden" and in_dim != width:
            raise ValueError("hidden block needs in_dim == width for the shortcut")
        self.kind = kind
        self.in_dim = in_dim
        self.width = width
        self.n_groups = n_groups
        self.rho = width // n_groups
        self.W = nncore.Param(nncore.init_weight(rng, in_dim, width))
        self.b = nncore.Param(np.zeros(width))
        self.alpha = nncore.Param(rng.uniform(-1.0, 1.0, size=n_groups))
        self.b_pred = nncore.Param(np.zeros(n_groups))

    def params(self):
        return [self.W, self.b, self.alpha, self.b_pred]

    def forward(self, X: np.ndarray) -> BioTrace:
        X = check_X(X, self.in_dim)
        z = X @ self.W.value + self.b.value
        if self.kind == "hidden":
            output = X + np.tanh(z)
        else:
            output = z
        batch = X.shape[0]
        out_mean = output.reshape(batch, self.n_groups, self.rho).mean(axis=2)
        pred = nncore.activate(self.alpha.value * out_mean + self.b_pred.value, "sigmoid")
        return BioTrace(X, output, out_mean, pred)

    @staticmethod
    def loss(pred: np.ndarray, onehot: np.ndarray) -> float:
        """Squared error averaged over readout units and batch."""
        if pred.shape != np.asarray(onehot).shape:
            raise ValueError(f"pred {pred.shape} vs label {np.asarray(onehot).shape}")
        return nncore.mean_squared_error(pred, onehot)

    def deltas(self, trace: BioTrace, onehot: np.ndarray, lr: float,
               mode: str = "consistent") -> dict:
        """Batch-averaged closed-form updates; add them to the parameters.

        Each delta equals -lr times the gradient of loss() in "consistent"
        mode. common = 2 (label - pred) pred (1 - pred) / K is the shared
        readout-error factor.
        """
        if mode not in GRADIENT_MODES:
            raise ValueError(f"mode must be one of {GRADIENT_MODES}")
        onehot = np.asarray(onehot, dtype=np.float64)
        batch = trace.input.shape[0]
        err = onehot - trace.pred
        common = 2.0 * err / self.n_groups * trace.pred * (1.0 - trace.pred)  # [B, K]

        d_alpha = lr * (common * trace.out_mean).mean(axis=0)
        d_b_pred = lr * common.mean(axis=0)

        if self.kind == "hidden":
            if mode == "consistent":
                t = trace.output - trace.input
                tanh_factor = 1.0 - t * t
            else:
                tanh_factor = 1.0 - trace.output * trace.output
        else:
            tanh_factor = np.ones_like(trace.output)

        # per-column factor: the owning unit's error times its gain, spread 1/rho
        unit_of = np.repeat(np.arange(self.n_groups), self.rho)
        col = common[:, unit_of] * self.alpha.value[unit_of] / self.rho * tanh_factor
        d_W = lr * (trace.input.T @ col) / batch
        d_b = lr * col.mean(axis=0)
        return {"W": d_W, "b": d_b, "alpha": d_alpha, "b_pred": d_b_pred}

    def apply_deltas(self, deltas: dict, lr: float, use_rmsprop: bool = False) -> None:
        pairs = [(self.W, deltas["W"]), (self.b, deltas["b"]),
                 (self.alpha, deltas["alpha"]), (self.b_pred, deltas["b_pred"])]
        if use_rmsprop:
            for p, d in pairs:
                p.grad[...] = -d / lr
                nncore.rmsprop_step(p, lr)
        else:
            for p, d in pairs:
                p.value += d

    def train_step_module(self, X, onehot, lr, mode="consistent", use_rmsprop=False):
        """Forward, closed-form update, hand the pre-update output downstream."""
        trace = self.forward(X)
        self.apply_deltas(self.deltas(trace, onehot, lr, mode), lr, use_rmsprop)
        loss = self.loss(trace.pred, onehot)
        acc = float((trace.pred.argmax(axis=1) == np.asarray(onehot).argmax(axis=1)).mean())
        return trace.output, loss, acc


class BioNetwork:
    """Chained blocks; the first compresses the input width, the rest carry
    shortcuts. Same layer-by-layer schedule as the graph-based network."""

    def __init__(self, modules):
        self.modules = list(modules)

    @classmethod
    def build(cls, rng, in_dim, width, n_modules, n_groups):
        modules = [BioModule(rng, in_dim, width, n_groups, kind="compress")]
        for _ in range(1, n_modules):
            modules.append(BioModule(rng, width, width, n_groups, kind="hidden"))
        return cls(modules)

    @property
    def in_dim(self):
        return self.modules[0].in_dim

    def train_step(self, X, onehot, lr, mode="consistent", use_rmsprop=False) -> ModuleMetrics:
        losses = np.empty(len(self.modules))
        accs = np.empty(len(self.modules))
        x = X
        for k, m in enumerate(self.modules):
            x, losses[k], accs[k] = m.train_step_module(x, onehot, lr, mode, use_rmsprop)
        return ModuleMetrics(losses, accs)

    def layerwise_accuracy(self, X, onehot) -> np.ndarray:
        accs = []
        x = check_X(X, self.in_dim)
        for m in self.modules:
            trace = m.forward(x)
            accs.append(
                float((trace.pred.argmax(axis=1) == np.asarray(onehot).argmax(axis=1)).mean())
            )
            x = trace.output
        return np.array(accs)


class BioLwbpClassifier(ClassifierMixin, BaseEstimator):
    """Classifier of stacked closed-form blocks, one readout unit per class.

    width must be divisible by the number of classes; each class's readout
    unit pools width / n_classes units. use_rmsprop=False applies the plain
    deltas exactly as derived.
    """

    def __init__(self, n_modules=3, width=900, gradient_mode="consistent",
                 use_rmsprop=False, learning_rate=1e-4, batch_size=256,
                 n_steps=2000, random_state=0):
        self.n_modules = n_modules
        self.width = width
        self.gradient_mode = gradient_mode
        self.use_rmsprop = use_rmsprop
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.n_steps = n_steps
        self.random_state = random_state

    def _init_net(self, n_features, n_classes):
        if self.width % n_classes != 0:
            raise ValueError(f"width {self.width} not divisible by {n_classes} classes")
        self._rng = check_rng(self.random_state)
        self.network_ = BioNetwork.build(
            self._rng, n_features, self.width, self.n_modules, n_classes)
        self.n_features_in_ = n_features
        self.history_ = []

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y)
        self._init_net(X.shape[1], len(self.classes_))
        onehot = onehot_encode(np.searchsorted(self.classes_, y), len(self.classes_))
        n = X.shape[0]
        for _ in range(self.n_steps):
            idx = self._rng.integers(0, n, self.batch_size)
            self.history_.append(
                self.network_.train_step(X[idx], onehot[idx], self.learning_rate,
                                         self.gradient_mode, self.use_rmsprop))
        return self

    def partial_fit(self, X, y, classes=None):
        X, y = check_X_y(X, y)
        if not hasattr(self, "classes_"):
            if classes is None:
                raise ValueError("partial_fit needs classes= on the first call")
            self.classes_ = np.asarray(classes)
            self._init_net(X.shape[1], len(self.classes_))
        onehot = onehot_encode(np.searchsorted(self.classes_, y), len(self.classes_))
        self.history_.append(
            self.network_.train_step(X, onehot, self.learning_rate,
                                     self.gradient_mode, self.use_rmsprop))
        return self

    def predict(self, X):
        X = check_X(X, self.n_features_in_)
        x = X
        for m in self.network_.modules:
            trace = m.forward(x)
            x = trace.output
        return self.classes_[trace.pred.argmax(axis=1)]

    def per_module_accuracy(self, X, y) -> np.ndarray:
        X, y = check_X_y(X, y, self.n_features_in_)
        onehot = onehot_encode(np.searchsorted(self.classes_, y), len(self.classes_))
        return self.network_.layerwise_accuracy(X, onehot)
