"""Layer-wise locally supervised networks and an end-to-end baseline.

A LwbpModule is one nonlinear block (optionally with an additive shortcut)
plus its own linear prediction head. Training a module never sends gradient
upstream: the module's input enters its graph as a constant. A LwbpNetwork
chains modules; every module sees the same labels and updates itself from its
own local loss. BpNetwork is the comparison baseline: the same stack trained
end to end through a single final head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from . import autodiff as ad
from . import nncore
from .validation import check_X, check_X_y, check_rng, onehot_encode


class DenseBlock:
    """One weight/bias pair with an activation and optional shortcut."""

    def __init__(self, rng, in_dim, out_dim, activation="identity", use_shortcut=False):
        if use_shortcut and in_dim != out_dim:
            raise ValueError(
                f"shortcut needs matching dims, got {in_dim} -> {out_dim}"
            )
        if activation not in nncore.ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self.use_shortcut = use_shortcut
        self.W = nncore.Param(nncore.init_weight(rng, in_dim, out_dim))
        self.b = nncore.Param(np.zeros(out_dim))

    def params(self):
        return [self.W, self.b]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if self.use_shortcut:
            return nncore.shortcut_forward(x, self.W.value, self.b.value, self.activation)
        return nncore.activate(
            nncore.linear_forward(x, self.W.value, self.b.value), self.activation
        )

    def forward_node(self, x: ad.Node) -> ad.Node:
        out = nncore.activate_node(
            ad.add_bias(ad.matmul(x, ad.leaf(self.W)), ad.leaf(self.b)), self.activation
        )
        if self.use_shortcut:
            out = ad.add(out, x)
        return out


class LossHead:
    """Linear prediction head with a cross-entropy or MSE loss."""

    def __init__(self, rng, in_dim, n_out, loss="cross_entropy"):
        if loss not in nncore.LOSSES:
            raise ValueError(f"unknown loss {loss!r}")
        self.loss = loss
        self.W = nncore.Param(nncore.init_weight(rng, in_dim, n_out))
        self.b = nncore.Param(np.zeros(n_out))

    def params(self):
        return [self.W, self.b]

    def logits(self, x: np.ndarray) -> np.ndarray:
        return nncore.linear_forward(x, self.W.value, self.b.value)

    def loss_node(self, x: ad.Node, onehot: np.ndarray):
        logits = ad.add_bias(ad.matmul(x, ad.leaf(self.W)), ad.leaf(self.b))
        if self.loss == "cross_entropy":
            return ad.softmax_cross_entropy(logits, onehot), logits
        return ad.mean_squared_error(logits, onehot), logits


class LwbpModule:
    """A locally supervised block: main path, optional shortcut, loss head."""

    def __init__(self, rng, in_dim, out_dim, n_out, activation, use_shortcut,
                 loss="cross_entropy"):
        self.main = DenseBlock(rng, in_dim, out_dim, activation, use_shortcut)
        self.head = LossHead(rng, out_dim, n_out, loss)

    def params(self):
        return self.main.params() + self.head.params()

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Pure forward of the main path; the head is never forwarded."""
        return self.main.forward(x)

    def head_logits(self, x: np.ndarray) -> np.ndarray:
        return self.head.logits(self.main.forward(x))

    def train_step_module(self, x: np.ndarray, onehot: np.ndarray, lr: float):
        """One local update. Returns (output, loss, batch accuracy).

        The returned output is computed with the pre-update parameters, so a
        downstream consumer sees the activation from the same forward pass
        that produced this module's loss.
        """
        xn = ad.constant(x)
        out = self.main.forward_node(xn)
        loss, logits = self.head.loss_node(out, onehot)
        ad.backward(loss)
        for p in self.params():
            nncore.rmsprop_step(p, lr)
        acc = top1_accuracy(logits.data, onehot)
        return out.data, loss.item(), acc


@dataclass
class ModuleMetrics:
    losses: np.ndarray      # local loss per module
    accuracies: np.ndarray  # top-1 train-batch accuracy per module


def top1_accuracy(logits: np.ndarray, onehot: np.ndarray) -> float:
    # np.argmax breaks ties toward the lowest index
    return float((logits.argmax(axis=1) == np.asarray(onehot).argmax(axis=1)).mean())


class LwbpNetwork:
    """Modules chained input-to-output, each trained by its own loss head."""

    def __init__(self, modules):
        if not modules:
            raise ValueError("network needs at least one module")
        self.modules = list(modules)

    @classmethod
    def build(cls, rng, in_dim, hidden_dim, n_modules, n_out,
              activation="leakyrelu", use_shortcut=True, loss="cross_entropy"):
        """First module is a plain linear resize (no shortcut, no activation);
        the rest keep the working width and may use the shortcut."""
        modules = [LwbpModule(rng, in_dim, hidden_dim, n_out, "identity", False, loss)]
        for _ in range(1, n_modules):
            modules.append(
                LwbpModule(rng, hidden_dim, hidden_dim, n_out, activation, use_shortcut, loss)
            )
        return cls(modules)

    @property
    def in_dim(self):
        return self.modules[0].main.in_dim

    def params(self):
        return [p for m in self.modules for p in m.params()]

    def forward_all(self, x: np.ndarray):
        """Activations entering each module (index k feeds module k)."""
        xs = [np.asarray(x, dtype=np.float64)]
        for m in self.modules:
            xs.append(m.forward(xs[-1]))
        return xs

    def train_step(self, x: np.ndarray, onehot: np.ndarray, lr: float) -> ModuleMetrics:
        losses = np.empty(len(self.modules))
        accs = np.empty(len(self.modules))
        for k, m in enumerate(self.modules):
            x, losses[k], accs[k] = m.train_step_module(x, onehot, lr)
        return ModuleMetrics(losses, accs)

    def layerwise_logits(self, X: np.ndarray):
        """Head logits of every module for the given inputs."""
        X = check_X(X, self.in_dim)
        out = []
        x = X
        for m in self.modules:
            y = m.forward(x)
            out.append(m.head.logits(y))
            x = y
        return out

    def layerwise_accuracy(self, X: np.ndarray, onehot: np.ndarray) -> np.ndarray:
        if len(np.asarray(X)) == 0:
            raise ValueError("empty evaluation set")
        return np.array(
            [top1_accuracy(lg, onehot) for lg in self.layerwise_logits(X)]
        )


def unit_grid(grid_n: int) -> np.ndarray:
    """grid_n x grid_n points at equal intervals over the unit square,
    row index = y, column index = x."""
    axis = np.linspace(0.0, 1.0, grid_n)
    gx, gy = np.meshgrid(axis, axis)
    return np.column_stack([gx.ravel(), gy.ravel()])


def predict_class_map(net: LwbpNetwork, grid_n: int = 150) -> np.ndarray:
    """Per-module argmax class over the unit square; shape [n_modules, grid, grid]."""
    if net.in_dim != 2:
        raise ValueError(f"class maps need a 2-input network, got {net.in_dim} inputs")
    pts = unit_grid(grid_n)
    maps = [lg.argmax(axis=1).reshape(grid_n, grid_n) for lg in net.layerwise_logits(pts)]
    return np.stack(maps)


class BpNetwork:
    """Same stack shape as the layer-wise net, trained end to end through a
    single linear head on the last block."""

    def __init__(self, blocks, head):
        self.blocks = list(blocks)
        self.head = head

    @classmethod
    def build(cls, rng, in_dim, hidden_dim, n_layers, n_out,
              activation="tanh", use_shortcut=True, loss="cross_entropy"):
        blocks = [DenseBlock(rng, in_dim, hidden_dim, "identity", False)]
        for _ in range(1, n_layers):
            blocks.append(DenseBlock(rng, hidden_dim, hidden_dim, activation, use_shortcut))
        return cls(blocks, LossHead(rng, hidden_dim, n_out, loss))

    @property
    def in_dim(self):
        return self.blocks[0].in_dim

    def params(self):
        ps = [p for blk in self.blocks for p in blk.params()]
        return ps + self.head.params()

    def forward(self, x: np.ndarray) -> np.ndarray:
        for blk in self.blocks:
            x = blk.forward(x)
        return x

    def logits(self, X: np.ndarray) -> np.ndarray:
        return self.head.logits(self.forward(check_X(X, self.in_dim)))

    def train_step(self, x: np.ndarray, onehot: np.ndarray, lr: float):
        node = ad.constant(x)
        for blk in self.blocks:
            node = blk.forward_node(node)
        loss, logits = self.head.loss_node(node, onehot)
        ad.backward(loss)
        for p in self.params():
            nncore.rmsprop_step(p, lr)
        return loss.item(), top1_accuracy(logits.data, onehot)

    def accuracy(self, X: np.ndarray, onehot: np.ndarray) -> float:
        return top1_accuracy(self.logits(X), onehot)


# ---------------------------------------------------------------------------
# estimator front ends


class _BatchTrainerMixin:
    """Shared fit/partial_fit plumbing for the classifier front ends."""

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y)
        self._init_net(X.shape[1], len(self.classes_))
        onehot = onehot_encode(np.searchsorted(self.classes_, y), len(self.classes_))
        n = X.shape[0]
        for _ in range(self.n_steps):
            idx = self._rng.integers(0, n, self.batch_size)
            self._record(self._train_batch(X[idx], onehot[idx]))
        return self

    def partial_fit(self, X, y, classes=None):
        X, y = check_X_y(X, y)
        if not hasattr(self, "classes_"):
            if classes is None:
                raise ValueError("partial_fit needs classes= on the first call")
            self.classes_ = np.asarray(classes)
            self._init_net(X.shape[1], len(self.classes_))
        onehot = onehot_encode(np.searchsorted(self.classes_, y), len(self.classes_))
        self._record(self._train_batch(X, onehot))
        return self


class LwbpClassifier(_BatchTrainerMixin, ClassifierMixin, BaseEstimator):
    """Classifier trained layer by layer, each block under its own loss head.

    Parameters
    ----------
    n_modules : number of stacked blocks (the first resizes, without
        shortcut or activation).
    hidden_dim : working width of every block after the first.
    activation : 'tanh' | 'sigmoid' | 'leakyrelu' | 'identity'.
    use_shortcut : add the identity path around each nonlinear block.
    loss : local loss of every head, 'cross_entropy' or 'mse'.
    learning_rate, batch_size, n_steps : RMSprop training schedule for fit().
    random_state : seed; identical seeds give bit-identical runs.
    """

    def __init__(self, n_modules=5, hidden_dim=16, activation="leakyrelu",
                 use_shortcut=True, loss="cross_entropy", learning_rate=1e-4,
                 batch_size=256, n_steps=2000, random_state=0):
        self.n_modules = n_modules
        self.hidden_dim = hidden_dim
        self.activation = activation
        self.use_shortcut = use_shortcut
        self.loss = loss
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.n_steps = n_steps
        self.random_state = random_state

    def _init_net(self, n_features, n_classes):
        self._rng = check_rng(self.random_state)
        self.network_ = LwbpNetwork.build(
            self._rng, n_features, self.hidden_dim, self.n_modules, n_classes,
            self.activation, self.use_shortcut, self.loss)
        self.n_features_in_ = n_features
        self.history_ = []

    def _train_batch(self, X, onehot):
        return self.network_.train_step(X, onehot, self.learning_rate)

    def _record(self, metrics):
        self.history_.append(metrics)

    def predict_proba(self, X):
        X = check_X(X, self.n_features_in_)
        return nncore.softmax(self.network_.layerwise_logits(X)[-1])

    def predict(self, X):
        return self.classes_[self.predict_proba(X).argmax(axis=1)]

    def per_module_accuracy(self, X, y) -> np.ndarray:
        X, y = check_X_y(X, y, self.n_features_in_)
        onehot = onehot_encode(np.searchsorted(self.classes_, y), len(self.classes_))
        return self.network_.layerwise_accuracy(X, onehot)

    def class_maps(self, grid_n=150) -> np.ndarray:
        return predict_class_map(self.network_, grid_n)


class BpClassifier(_BatchTrainerMixin, ClassifierMixin, BaseEstimator):
    """End-to-end trained baseline with the same stack shape.

    Shortcut blocks plus a final linear head; one global loss, gradients flow
    through the whole depth.
    """

    def __init__(self, n_layers=5, hidden_dim=16, activation="leakyrelu",
                 use_shortcut=True, loss="cross_entropy", learning_rate=1e-4,
                 batch_size=256, n_steps=2000, random_state=0):
        self.n_layers = n_layers
        self.hidden_dim = hidden_dim
        self.activation = activation
        self.use_shortcut = use_shortcut
        self.loss = loss
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.n_steps = n_steps
        self.random_state = random_state

    def _init_net(self, n_features, n_classes):
        self._rng = check_rng(self.random_state)
        self.network_ = BpNetwork.build(
            self._rng, n_features, self.hidden_dim, self.n_layers, n_classes,
            self.activation, self.use_shortcut, self.loss)
        self.n_features_in_ = n_features
        self.history_ = []

    def _train_batch(self, X, onehot):
        return self.network_.train_step(X, onehot, self.learning_rate)

    def _record(self, metrics):
        self.history_.append(metrics)

    def predict_proba(self, X):
        return nncore.softmax(self.network_.logits(check_X(X, self.n_features_in_)))

    def predict(self, X):
        return self.classes_[self.predict_proba(X).argmax(axis=1)]
