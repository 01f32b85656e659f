"""Sparse ensemble coding autoencoder.

A stack of dense layers feeds a wide sigmoid coding layer whose activity is
pushed toward a binary pattern: for any input, about a fraction eta of the
coding units should sit near 1 and the rest near 0, and over time every unit
should be active for about the same share of inputs. Reconstruction reads the
code back out through a mapping matrix whose rows are the units'
characteristic points in input space; the decoded value is the
activation-weighted mean of those rows, so a one-hot code returns exactly the
corresponding row and well-trained rows live at input scale.

Three loss terms drive this:

* reconstruction: squared error between input and decoded output;
* per-input sparsity: |sum h^2 - eta N| + |sum (1-h)^2 - (1-eta) N|, zero
  exactly when eta N units are at 1 and the rest at 0;
* time sparsity: a control signal (-eta/avg + (1-eta)/(1-avg)) per unit,
  taken from slow/fast moving averages of activity (weighted 0.9/0.1) and
  applied to h as a constant coefficient, pushing overused units down and
  idle units up.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import autodiff as ad
from . import io as ckio
from . import nncore
from .lwbp import DenseBlock
from .validation import check_X, check_rng

AVG_CLAMP = 1e-4      # keep the control signal's divisors away from 0 and 1
DECODE_SUM_EPS = 1e-12
INHIBITED_BELOW = 0.01
EXTREME_ABOVE = 0.99


class EmaTracker:
    """Exponential moving average of mean unit activity."""

    def __init__(self, n: int, lam: float, init: float):
        self.lam = lam
        self.avg = np.full(n, float(init))

    def update(self, mean_h: np.ndarray) -> None:
        self.avg = self.avg * self.lam + (1.0 - self.lam) * mean_h

    def clamped(self) -> np.ndarray:
        return np.clip(self.avg, AVG_CLAMP, 1.0 - AVG_CLAMP)


def sparsity_control_coeff(avg: np.ndarray, eta: float) -> np.ndarray:
    """Per-unit pressure: positive (push down) when avg > eta, zero at eta."""
    return -eta / avg + (1.0 - eta) / (1.0 - avg)


def engram_sparse_loss(h: np.ndarray, eta: float) -> float:
    """Per-row binarity/count penalty, averaged over the batch."""
    h = np.asarray(h, dtype=np.float64)
    n = h.shape[1]
    active = np.abs((h * h).sum(axis=1) - eta * n)
    inactive = np.abs(((1.0 - h) ** 2).sum(axis=1) - (1.0 - eta) * n)
    return float((active + inactive).mean())


def time_sparse_loss(h: np.ndarray, avg: np.ndarray, eta: float) -> float:
    """Control pressure applied to the batch, averaging over units and rows."""
    coeff = sparsity_control_coeff(np.clip(avg, AVG_CLAMP, 1.0 - AVG_CLAMP), eta)
    return float((np.asarray(h) @ coeff).mean() / h.shape[1])


def reconstruction_loss(x: np.ndarray, x_re: np.ndarray) -> float:
    return nncore.mean_squared_error(x_re, x)


@dataclass
class SparsityStats:
    """Fractions of (input, unit) activation pairs by regime."""

    frac_inhibited: float  # h < 0.01
    frac_mid: float        # 0.01 <= h <= 0.99
    frac_extreme: float    # h > 0.99

    @classmethod
    def from_activations(cls, h: np.ndarray) -> "SparsityStats":
        h = np.asarray(h)
        inhibited = float((h < INHIBITED_BELOW).mean())
        extreme = float((h > EXTREME_ABOVE).mean())
        return cls(inhibited, 1.0 - inhibited - extreme, extreme)


class EngramCore:
    """The network and its training step; shared by both estimators."""

    def __init__(self, rng, in_dim, n_neurons, eta, encoder_widths,
                 k1, k2, k3, ema_long, ema_short):
        self.in_dim = in_dim
        self.n_neurons = n_neurons
        self.eta = eta
        self.k1, self.k2, self.k3 = k1, k2, k3
        self.encoder = []
        width_in = in_dim
        for w in encoder_widths:
            self.encoder.append(DenseBlock(rng, width_in, w, "leakyrelu", False))
            width_in = w
        self.coding = DenseBlock(rng, width_in, n_neurons, "sigmoid", False)
        self.mapping = nncore.Param(nncore.init_weight(rng, n_neurons, in_dim))
        self.tracker_long = EmaTracker(n_neurons, ema_long, eta)
        self.tracker_short = EmaTracker(n_neurons, ema_short, eta)

    def params(self):
        ps = [p for blk in self.encoder for p in blk.params()]
        return ps + self.coding.params() + [self.mapping]

    def encode(self, X: np.ndarray) -> np.ndarray:
        x = check_X(X, self.in_dim)
        for blk in self.encoder:
            x = blk.forward(x)
        return self.coding.forward(x)

    def decode(self, h: np.ndarray) -> np.ndarray:
        """Activation-weighted mean of mapping rows; a one-hot code returns
        its row exactly and an all-zero code returns the origin."""
        h = check_X(h, self.n_neurons)
        sums = np.maximum(h.sum(axis=1, keepdims=True), DECODE_SUM_EPS)
        return (h @ self.mapping.value) / sums

    def code_nodes(self, x: ad.Node):
        """(h, reconstruction) nodes of the recorded graph."""
        node = x
        for blk in self.encoder:
            node = blk.forward_node(node)
        h = self.coding.forward_node(node)
        sums = ad.clip_min(ad.row_sum(h), DECODE_SUM_EPS)
        recon = ad.div_rows(ad.matmul(h, ad.leaf(self.mapping)), sums)
        return h, recon

    def loss_nodes(self, h: ad.Node, recon: ad.Node, target, update_trackers=True):
        """Component nodes for one batch, after refreshing the trackers.

        The moving averages consume the batch-mean activation first; the
        control coefficients then enter the graph as constants (the slow
        statistic is a control signal, not a differentiated path).
        update_trackers=False freezes them, e.g. to evaluate the loss as a
        pure function of the parameters.
        """
        if update_trackers:
            mean_h = h.data.mean(axis=0)
            self.tracker_long.update(mean_h)
            self.tracker_short.update(mean_h)

        if isinstance(target, ad.Node):
            rec = ad.mean_all(ad.square(ad.sub(recon, target)))
        else:
            rec = ad.mean_squared_error(recon, target)

        n = self.n_neurons
        active = ad.absval(ad.add_const(ad.row_sum(ad.square(h)), -self.eta * n))
        inactive = ad.absval(
            ad.add_const(ad.row_sum(ad.square(ad.rsub_const(1.0, h))), -(1.0 - self.eta) * n))
        eng = ad.mean_all(ad.add(active, inactive))

        def time_term(tracker):
            coeff = sparsity_control_coeff(tracker.clamped(), self.eta)
            return ad.scale(ad.mean_all(ad.matmul(h, ad.constant(coeff[:, None]))), 1.0 / n)

        time = ad.add(ad.scale(time_term(self.tracker_long), 0.9),
                      ad.scale(time_term(self.tracker_short), 0.1))
        total = ad.add(ad.add(ad.scale(rec, self.k1), ad.scale(eng, self.k2)),
                       ad.scale(time, self.k3))
        return total, {"reconstruction": rec.item(), "engram_sparse": eng.item(),
                       "time_sparse": time.item(), "total": total.item()}

    def train_step(self, X: np.ndarray, lr: float) -> dict:
        xn = ad.constant(check_X(X, self.in_dim))
        h, recon = self.code_nodes(xn)
        total, components = self.loss_nodes(h, recon, xn.data)
        ad.backward(total)
        for p in self.params():
            nncore.rmsprop_step(p, lr)
        return components

    def state_arrays(self) -> dict:
        arrays = {}
        for i, blk in enumerate(self.encoder):
            arrays[f"encoder{i}.W"] = blk.W.value
            arrays[f"encoder{i}.b"] = blk.b.value
        arrays["coding.W"] = self.coding.W.value
        arrays["coding.b"] = self.coding.b.value
        arrays["mapping"] = self.mapping.value
        arrays["avg_long"] = self.tracker_long.avg
        arrays["avg_short"] = self.tracker_short.avg
        return arrays

    def load_state_arrays(self, arrays: dict) -> None:
        for i, blk in enumerate(self.encoder):
            blk.W.value[...] = arrays[f"encoder{i}.W"]
            blk.b.value[...] = arrays[f"encoder{i}.b"]
        self.coding.W.value[...] = arrays["coding.W"]
        self.coding.b.value[...] = arrays["coding.b"]
        self.mapping.value[...] = arrays["mapping"]
        self.tracker_long.avg[...] = arrays["avg_long"]
        self.tracker_short.avg[...] = arrays["avg_short"]


def density_heatmap(points: np.ndarray, bins: int = 25, extent=((0.0, 1.0), (0.0, 1.0))):
    """2-D histogram of points normalized to a probability mass.

    Points outside the extent are dropped; the returned mass sums to 1 over
    whatever landed inside (all zeros if nothing did).
    """
    points = np.asarray(points, dtype=np.float64)
    hist, xedges, yedges = np.histogram2d(
        points[:, 0], points[:, 1], bins=bins, range=extent)
    total = hist.sum()
    if total > 0:
        hist = hist / total
    return hist, xedges, yedges


class EngramAutoencoder(TransformerMixin, BaseEstimator):
    """Autoencoder that assigns each input a sparse near-binary code.

    transform() returns the code (values in (0,1), about eta of them near 1
    after training); inverse_transform() decodes a code back to input space.
    Rows of mapping_matrix_ are the units' characteristic points.

    Parameters
    ----------
    n_neurons : width of the coding layer.
    eta : target fraction of simultaneously active units.
    encoder_widths : dense stack between input and coding layer.
    k1, k2, k3 : weights of reconstruction / per-input sparsity / time
        sparsity in the training loss.
    ema_long, ema_short : discount factors of the slow and fast activity
        averages (combined 0.9/0.1 in the time-sparsity term).
    learning_rate, batch_size, n_steps : RMSprop schedule used by fit().
    random_state : seed; fixed seeds reproduce runs bit for bit.
    """

    def __init__(self, n_neurons=1000, eta=0.05,
                 encoder_widths=(64, 64, 256, 256, 256),
                 k1=1000.0, k2=0.01, k3=10.0, ema_long=0.9999, ema_short=0.99,
                 learning_rate=1e-4, batch_size=256, n_steps=20000,
                 random_state=0):
        self.n_neurons = n_neurons
        self.eta = eta
        self.encoder_widths = encoder_widths
        self.k1 = k1
        self.k2 = k2
        self.k3 = k3
        self.ema_long = ema_long
        self.ema_short = ema_short
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.n_steps = n_steps
        self.random_state = random_state

    def _init_core(self, in_dim):
        self._rng = check_rng(self.random_state)
        self.core_ = EngramCore(self._rng, in_dim, self.n_neurons, self.eta,
                                tuple(self.encoder_widths), self.k1, self.k2,
                                self.k3, self.ema_long, self.ema_short)
        self.n_features_in_ = in_dim
        self.history_ = []

    def fit(self, X, y=None):
        X = check_X(X)
        self._init_core(X.shape[1])
        n = X.shape[0]
        for _ in range(self.n_steps):
            idx = self._rng.integers(0, n, self.batch_size)
            self.history_.append(self.core_.train_step(X[idx], self.learning_rate))
        return self

    def partial_fit(self, X, y=None):
        X = check_X(X)
        if not hasattr(self, "core_"):
            self._init_core(X.shape[1])
        self.history_.append(self.core_.train_step(X, self.learning_rate))
        return self

    @property
    def mapping_matrix_(self) -> np.ndarray:
        return self.core_.mapping.value

    def transform(self, X) -> np.ndarray:
        return self.core_.encode(X)

    def inverse_transform(self, h) -> np.ndarray:
        return self.core_.decode(h)

    def reconstruct(self, X) -> np.ndarray:
        return self.core_.decode(self.core_.encode(X))

    def characteristic_locations(self) -> np.ndarray:
        """One point per coding unit: the rows of the mapping matrix."""
        return self.mapping_matrix_.copy()

    def grid_activations(self, grid_n: int = 101) -> np.ndarray:
        """Codes of the unit-square grid, [grid_n*grid_n, n_neurons]."""
        from .lwbp import unit_grid
        if self.n_features_in_ != 2:
            raise ValueError("grid responses need a 2-D input model")
        return self.core_.encode(unit_grid(grid_n))

    def place_field(self, neuron: int, grid_n: int = 101) -> np.ndarray:
        """Response of one unit over the unit square (row = y, column = x)."""
        if not 0 <= neuron < self.n_neurons:
            raise IndexError(f"neuron {neuron} out of range 0..{self.n_neurons - 1}")
        return self.grid_activations(grid_n)[:, neuron].reshape(grid_n, grid_n)

    def sparsity_statistics(self, X) -> SparsityStats:
        """Activation-regime fractions over the given sample inputs."""
        return SparsityStats.from_activations(self.transform(X))

    def save(self, path) -> None:
        config = {k: (list(v) if isinstance(v, tuple) else v)
                  for k, v in self.get_params().items()}
        config["in_dim"] = self.n_features_in_
        ckio.save_model(path, "engram", config, self.core_.state_arrays())

    @classmethod
    def load(cls, path) -> "EngramAutoencoder":
        kind, config, arrays = ckio.load_model(path)
        if kind != "engram":
            raise ValueError(f"snapshot holds a {kind!r} model, not an autoencoder")
        in_dim = config.pop("in_dim")
        config["encoder_widths"] = tuple(config["encoder_widths"])
        model = cls(**config)
        model._init_core(in_dim)
        model.core_.load_state_arrays(arrays)
        return model


def field_peak(field: np.ndarray):
    """(peak value, (x, y)) of a grid response map (row = y, column = x)."""
    grid_n = field.shape[0]
    flat = int(field.argmax())
    iy, ix = divmod(flat, grid_n)
    axis = np.linspace(0.0, 1.0, grid_n)
    return float(field.max()), (float(axis[ix]), float(axis[iy]))


def field_centroid(field: np.ndarray):
    """Activation-weighted mean position of a grid response map."""
    grid_n = field.shape[0]
    axis = np.linspace(0.0, 1.0, grid_n)
    total = field.sum()
    cx = float((field.sum(axis=0) * axis).sum() / total)
    cy = float((field.sum(axis=1) * axis).sum() / total)
    return cx, cy


class MnistEngramAutoencoder(TransformerMixin, BaseEstimator):
    """Image autoencoder wrapped around the sparse coder.

    A dense encoder compresses each image to a low-dimensional code, the
    sparse coder encodes/reconstructs that code, and the image decoder reads
    the mean of code and decoded code back to pixel space (final layer
    sigmoid, everything else leaky ReLU). Trained jointly: image loss
    (squared error per pixel) weighted by image_weight plus the coder's own
    three-part loss.
    """

    def __init__(self, code_dim=128, hidden_widths=(256, 256, 256),
                 image_weight=100.0, n_neurons=1000, eta=0.05,
                 encoder_widths=(64, 64, 256, 256, 256),
                 k1=1000.0, k2=0.01, k3=10.0, ema_long=0.9999, ema_short=0.99,
                 learning_rate=1e-4, batch_size=256, n_steps=20000,
                 random_state=0):
        self.code_dim = code_dim
        self.hidden_widths = hidden_widths
        self.image_weight = image_weight
        self.n_neurons = n_neurons
        self.eta = eta
        self.encoder_widths = encoder_widths
        self.k1 = k1
        self.k2 = k2
        self.k3 = k3
        self.ema_long = ema_long
        self.ema_short = ema_short
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.n_steps = n_steps
        self.random_state = random_state

    def _init_net(self, img_dim):
        self._rng = check_rng(self.random_state)
        rng = self._rng
        self.image_encoder_ = []
        width_in = img_dim
        for w in tuple(self.hidden_widths) + (self.code_dim,):
            self.image_encoder_.append(DenseBlock(rng, width_in, w, "leakyrelu", False))
            width_in = w
        self.core_ = EngramCore(rng, self.code_dim, self.n_neurons, self.eta,
                                tuple(self.encoder_widths), self.k1, self.k2,
                                self.k3, self.ema_long, self.ema_short)
        self.image_decoder_ = []
        width_in = self.code_dim
        for w in self.hidden_widths:
            self.image_decoder_.append(DenseBlock(rng, width_in, w, "leakyrelu", False))
            width_in = w
        self.image_decoder_.append(DenseBlock(rng, width_in, img_dim, "sigmoid", False))
        self.n_features_in_ = img_dim
        self.history_ = []

    def _params(self):
        ps = [p for blk in self.image_encoder_ for p in blk.params()]
        ps += self.core_.params()
        ps += [p for blk in self.image_decoder_ for p in blk.params()]
        return ps

    def _train_batch(self, images):
        img = ad.constant(images)
        code = img
        for blk in self.image_encoder_:
            code = blk.forward_node(code)
        h, code_re = self.core_.code_nodes(code)
        coder_total, components = self.core_.loss_nodes(h, code_re, code)
        dec = ad.scale(ad.add(code, code_re), 0.5)
        for blk in self.image_decoder_:
            dec = blk.forward_node(dec)
        image_loss = ad.mean_squared_error(dec, images)
        total = ad.add(ad.scale(image_loss, self.image_weight), coder_total)
        ad.backward(total)
        for p in self._params():
            nncore.rmsprop_step(p, self.learning_rate)
        components = dict(components)
        components["image"] = image_loss.item()
        components["total"] = total.item()
        return components

    def fit(self, X, y=None):
        X = check_X(X)
        self._init_net(X.shape[1])
        n = X.shape[0]
        for _ in range(self.n_steps):
            idx = self._rng.integers(0, n, self.batch_size)
            self.history_.append(self._train_batch(X[idx]))
        return self

    def partial_fit(self, X, y=None):
        X = check_X(X)
        if not hasattr(self, "core_"):
            self._init_net(X.shape[1])
        self.history_.append(self._train_batch(X))
        return self

    def codes(self, X) -> np.ndarray:
        """Low-dimensional image codes feeding the sparse coder."""
        x = check_X(X, self.n_features_in_)
        for blk in self.image_encoder_:
            x = blk.forward(x)
        return x

    def transform(self, X) -> np.ndarray:
        """Sparse code of each image."""
        return self.core_.encode(self.codes(X))

    def reconstruct(self, X) -> np.ndarray:
        code = self.codes(X)
        dec = 0.5 * (code + self.core_.decode(self.core_.encode(code)))
        for blk in self.image_decoder_:
            dec = blk.forward(dec)
        return dec

    def save(self, path) -> None:
        config = {k: (list(v) if isinstance(v, tuple) else v)
                  for k, v in self.get_params().items()}
        config["in_dim"] = self.n_features_in_
        arrays = self.core_.state_arrays()
        for i, blk in enumerate(self.image_encoder_):
            arrays[f"img_enc{i}.W"] = blk.W.value
            arrays[f"img_enc{i}.b"] = blk.b.value
        for i, blk in enumerate(self.image_decoder_):
            arrays[f"img_dec{i}.W"] = blk.W.value
            arrays[f"img_dec{i}.b"] = blk.b.value
        ckio.save_model(path, "engram_image", config, arrays)

    @classmethod
    def load(cls, path) -> "MnistEngramAutoencoder":
        kind, config, arrays = ckio.load_model(path)
        if kind != "engram_image":
            raise ValueError(f"snapshot holds a {kind!r} model, not an image coder")
        in_dim = config.pop("in_dim")
        config["hidden_widths"] = tuple(config["hidden_widths"])
        config["encoder_widths"] = tuple(config["encoder_widths"])
        model = cls(**config)
        model._init_net(in_dim)
        model.core_.load_state_arrays(arrays)
        for i, blk in enumerate(model.image_encoder_):
            blk.W.value[...] = arrays[f"img_enc{i}.W"]
            blk.b.value[...] = arrays[f"img_enc{i}.b"]
        for i, blk in enumerate(model.image_decoder_):
            blk.W.value[...] = arrays[f"img_dec{i}.W"]
            blk.b.value[...] = arrays[f"img_dec{i}.b"]
        return model
