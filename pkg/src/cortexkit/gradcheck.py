"""Central finite-difference verification of every analytic gradient path.

Each suite builds a small randomized instance, collects the analytic
gradients (recorded-graph backward or closed-form deltas), and compares them
against central differences of the scalar loss. The error of one parameter
array is max|a - n| / max(max|a|, max|n|, 1e-8): normalizing by the array's
gradient scale keeps the check meaningful where the difference quotient
bottoms out at its float64 cancellation floor (~1e-16 |loss| / eps), while a
wrong term in any formula still shows up at order 1.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import nncore
from .biolwbp import BioModule
from .engram import EngramCore
from .lwbp import BpNetwork, LwbpModule
from .validation import onehot_encode

FD_EPS = 1e-5
PASS_BELOW = 1e-6


def rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-8)
    return float(np.abs(analytic - numeric).max() / scale)


def fd_gradients(params, scalar_fn, eps: float = FD_EPS):
    """Central differences of scalar_fn w.r.t. every element of params."""
    grads = []
    for p in params:
        g = np.zeros_like(p.value)
        flat_v = p.value.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_v.size):
            saved = flat_v[i]
            flat_v[i] = saved + eps
            up = scalar_fn()
            flat_v[i] = saved - eps
            down = scalar_fn()
            flat_v[i] = saved
            flat_g[i] = (up - down) / (2.0 * eps)
        grads.append(g)
    return grads


def check_params(params, scalar_fn, analytic) -> float:
    numeric = fd_gradients(params, scalar_fn)
    return max(rel_err(a, n) for a, n in zip(analytic, numeric))


def _graph_suite(module_fn, loss_fn, params) -> float:
    """Backward once for analytic grads, then FD the same scalar."""

    def scalar():
        return loss_fn().item()

    loss = loss_fn()
    ad.backward(loss)
    analytic = [p.grad.copy() for p in params]
    return check_params(params, scalar, analytic)


def _lwbp_module_suite(rng, activation, use_shortcut, loss_kind) -> float:
    module = LwbpModule(rng, 4, 4, 3, activation, use_shortcut, loss_kind)
    x = rng.normal(0.4, 1.0, size=(5, 4))
    onehot = onehot_encode(rng.integers(0, 3, 5), 3)

    def loss_fn():
        out = module.main.forward_node(ad.constant(x))
        return module.head.loss_node(out, onehot)[0]

    return _graph_suite(module, loss_fn, module.params())


def _linear_head_suite(rng, loss_kind) -> float:
    from .lwbp import LossHead

    head = LossHead(rng, 6, 4, loss_kind)
    x = rng.normal(0.0, 1.0, size=(5, 6))
    onehot = onehot_encode(rng.integers(0, 4, 5), 4)

    def loss_fn():
        return head.loss_node(ad.constant(x), onehot)[0]

    return _graph_suite(head, loss_fn, head.params())


def _bp_stack_suite(rng) -> float:
    net = BpNetwork.build(rng, 4, 5, 3, 3, activation="tanh")
    x = rng.normal(0.0, 1.0, size=(6, 4))
    onehot = onehot_encode(rng.integers(0, 3, 6), 3)

    def loss_fn():
        node = ad.constant(x)
        for blk in net.blocks:
            node = blk.forward_node(node)
        return net.head.loss_node(node, onehot)[0]

    return _graph_suite(net, loss_fn, net.params())


def _bio_suite(rng, kind) -> float:
    in_dim = 6 if kind == "hidden" else 8
    module = BioModule(rng, in_dim, 6, 2, kind=kind)
    x = rng.normal(0.2, 0.8, size=(4, in_dim))
    onehot = onehot_encode(rng.integers(0, 2, 4), 2)
    lr = 1e-3

    trace = module.forward(x)
    deltas = module.deltas(trace, onehot, lr, mode="consistent")
    analytic = [-deltas[k] / lr for k in ("W", "b", "alpha", "b_pred")]
    params = module.params()

    def scalar():
        return module.loss(module.forward(x).pred, onehot)

    return check_params(params, scalar, analytic)


def _engram_suite(rng) -> float:
    core = EngramCore(rng, 2, 12, 0.05, (6, 8), 1000.0, 0.01, 10.0, 0.9999, 0.99)
    # move the trackers off their neutral start so the time term has teeth
    core.tracker_long.avg = rng.uniform(0.02, 0.2, 12)
    core.tracker_short.avg = rng.uniform(0.02, 0.2, 12)
    x = rng.uniform(0.0, 1.0, size=(4, 2))

    def loss_fn():
        xn = ad.constant(x)
        h, recon = core.code_nodes(xn)
        return core.loss_nodes(h, recon, xn.data, update_trackers=False)[0]

    return _graph_suite(core, loss_fn, core.params())


def _image_joint_suite(rng) -> float:
    from .engram import MnistEngramAutoencoder

    model = MnistEngramAutoencoder(
        code_dim=5, hidden_widths=(7, 7), n_neurons=10, encoder_widths=(6, 8),
        random_state=rng)
    model._init_net(9)
    images = rng.uniform(0.0, 1.0, size=(3, 9))
    model.core_.tracker_long.avg = rng.uniform(0.02, 0.2, 10)
    model.core_.tracker_short.avg = rng.uniform(0.02, 0.2, 10)

    def loss_fn():
        img = ad.constant(images)
        code = img
        for blk in model.image_encoder_:
            code = blk.forward_node(code)
        h, code_re = model.core_.code_nodes(code)
        coder_total, _ = model.core_.loss_nodes(h, code_re, code, update_trackers=False)
        dec = ad.scale(ad.add(code, code_re), 0.5)
        for blk in model.image_decoder_:
            dec = blk.forward_node(dec)
        return ad.add(ad.scale(ad.mean_squared_error(dec, images), model.image_weight),
                      coder_total)

    return _graph_suite(model, loss_fn, model._params())


def run_suites(seed: int = 0) -> dict:
    """Every gradient suite's max relative error, by name."""
    rng = np.random.default_rng(seed)
    return {
        "linear_cross_entropy": _linear_head_suite(rng, "cross_entropy"),
        "linear_mse": _linear_head_suite(rng, "mse"),
        "module_tanh_shortcut_ce": _lwbp_module_suite(rng, "tanh", True, "cross_entropy"),
        "module_leakyrelu_shortcut_ce": _lwbp_module_suite(rng, "leakyrelu", True, "cross_entropy"),
        "module_sigmoid_mse": _lwbp_module_suite(rng, "sigmoid", False, "mse"),
        "bp_stack_tanh_ce": _bp_stack_suite(rng),
        "bio_deltas_compress": _bio_suite(rng, "compress"),
        "bio_deltas_hidden": _bio_suite(rng, "hidden"),
        "engram_total_loss": _engram_suite(rng),
        "image_joint_total_loss": _image_joint_suite(rng),
    }


def all_pass(results: dict) -> bool:
    return all(v < PASS_BELOW for v in results.values())
