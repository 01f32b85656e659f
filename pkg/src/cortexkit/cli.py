"""Experiment driver.

Every command seeds all randomness from --seed, writes its outputs plus a
manifest.json into --out-dir, and resolves options as flags > JSON config
file > built-in defaults. Exit codes: 0 success, 1 validation failure,
2 I/O error. Dataset files are looked up under --data-dir or the
CORTEXKIT_DATA_DIR environment variable.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import datasets, gradcheck, memory, nncore, pipeline
from . import io as ckio
from .biolwbp import BioNetwork
from .cerebellum import GranulePurkinje, apply_plan, effective_weight, plan_adjustment
from .engram import (EngramAutoencoder, MnistEngramAutoencoder, SparsityStats,
                     density_heatmap)
from .lwbp import BpNetwork, LwbpNetwork, predict_class_map, unit_grid
from .validation import onehot_encode

EXIT_VALIDATION = 1
EXIT_IO = 2


def _load_config(path):
    if not path:
        return {}
    try:
        with open(path) as f:
            return json.load(f)
    except OSError as exc:
        click.echo(f"cannot read config: {exc}", err=True)
        sys.exit(EXIT_IO)


def _resolve(flags: dict, config: dict, section: str, defaults: dict) -> dict:
    """flags beat the config file section, which beats built-in defaults."""
    out = dict(defaults)
    for key, value in config.get(section, {}).items():
        if key in out:
            out[key] = value
    for key, value in flags.items():
        if value is not None:
            out[key] = value
    return out


def _out_dir(path, default_name) -> Path:
    out = Path(path) if path else Path("runs") / default_name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _data_dir(flag_value) -> Path:
    return Path(flag_value or os.environ.get("CORTEXKIT_DATA_DIR", "data"))


def _fail_validation(message):
    click.echo(message, err=True)
    sys.exit(EXIT_VALIDATION)


def _fail_io(message):
    click.echo(message, err=True)
    sys.exit(EXIT_IO)


def _load_image_dataset(name: str, data_dir: Path, subset: int, rng,
                        normalize=True):
    """(X, y) for training; subset > 0 keeps a random slice.

    normalize=True applies the per-sample mean/stddev transform used by the
    classifiers; autoencoding against a sigmoid output layer wants the raw
    [0, 1] pixels instead.
    """
    if name == "mnist":
        images = data_dir / "train-images-idx3-ubyte"
        labels = data_dir / "train-labels-idx1-ubyte"
        if not images.exists() or not labels.exists():
            _fail_io(f"MNIST IDX files not found under {data_dir}")
        X, y = datasets.load_mnist(images, labels)
    elif name == "cifar10":
        batch_dir = data_dir / "cifar-10-batches-bin"
        if not batch_dir.exists():
            batch_dir = data_dir
        paths = sorted(batch_dir.glob("data_batch_*.bin"))
        if not paths:
            _fail_io(f"no CIFAR-10 batch files under {data_dir}")
        X, y = datasets.load_cifar10(paths)
    elif name == "digits":
        # bundled offline stand-in: 8x8 handwritten digits from scikit-learn
        from sklearn.datasets import load_digits

        bunch = load_digits()
        X = bunch.data / 16.0
        y = bunch.target.astype(np.int64)
    else:
        _fail_validation(f"unknown dataset {name!r}")
    if subset and subset < X.shape[0]:
        keep = rng.permutation(X.shape[0])[:subset]
        X, y = X[keep], y[keep]
    if normalize:
        X = np.stack([nncore.normalize_sample(row) for row in X])
    return X, y


@click.group()
def main():
    """Desk-scale experiment runner for the cortexkit library."""


# ---------------------------------------------------------------------------
# gradcheck


@main.command("gradcheck")
@click.option("--seed", type=int, default=0, show_default=True)
def cmd_gradcheck(seed):
    """Verify every analytic gradient against central finite differences."""
    results = gradcheck.run_suites(seed)
    for name, err in results.items():
        status = "ok" if err < gradcheck.PASS_BELOW else "FAIL"
        click.echo(f"{name:32s} max rel err {err:.3e}  {status}")
    if not gradcheck.all_pass(results):
        sys.exit(EXIT_VALIDATION)


# ---------------------------------------------------------------------------
# 2-D point task


@main.command("train-lwbp-2d")
@click.option("--modules", type=int, default=None, help="stacked modules [5]")
@click.option("--width", type=int, default=None, help="module width [16]")
@click.option("--act", type=str, default=None, help="activation [leakyrelu]")
@click.option("--steps", type=int, default=None, help="training batches [30000]")
@click.option("--batch", type=int, default=None, help="batch size [256]")
@click.option("--lr", type=float, default=None, help="learning rate [1e-4]")
@click.option("--grid", type=int, default=None, help="class-map resolution [150]")
@click.option("--log-every", type=int, default=None, help="metrics cadence [100]")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", type=click.Path(), default=None)
@click.option("--config", type=click.Path(), default=None)
def cmd_train_lwbp_2d(**flags):
    """Train the layer-wise net on the sine-boundary point task."""
    cfg = _resolve(
        {k: flags[k] for k in ("modules", "width", "act", "steps", "batch",
                               "lr", "grid", "log_every")},
        _load_config(flags["config"]), "train-lwbp-2d",
        {"modules": 5, "width": 16, "act": "leakyrelu", "steps": 30000,
         "batch": 256, "lr": 1e-4, "grid": 150, "log_every": 100})
    seed = flags["seed"]
    out = _out_dir(flags["out_dir"], "lwbp2d")
    manifest = ckio.RunManifest("train-lwbp-2d", seed, cfg)

    with ckio.ManifestTimer(manifest):
        rng = np.random.default_rng(seed)
        net = LwbpNetwork.build(rng, 2, cfg["width"], cfg["modules"], 2,
                                cfg["act"], True, "cross_entropy")
        rows = []
        for step in range(cfg["steps"]):
            pts, labels = datasets.sample_labeled_points(rng, cfg["batch"])
            metrics = net.train_step(pts, onehot_encode(labels, 2), cfg["lr"])
            if step % cfg["log_every"] == 0 or step == cfg["steps"] - 1:
                rows.append([step, *metrics.losses, *metrics.accuracies])

        n_mod = cfg["modules"]
        header = (["step"] + [f"loss_{k}" for k in range(n_mod)]
                  + [f"acc_{k}" for k in range(n_mod)])
        ckio.write_csv(out / "metrics.csv", header, rows)
        manifest.outputs.append("metrics.csv")

        maps = predict_class_map(net, cfg["grid"])
        truth = datasets.label_points(unit_grid(cfg["grid"])).reshape(
            cfg["grid"], cfg["grid"])
        grid_rows = []
        for k in range(n_mod):
            name = f"module_{k}_map.pgm"
            ckio.write_pgm(out / name, maps[k], lo=0, hi=1)
            manifest.outputs.append(name)
            grid_rows.append([k, float((maps[k] == truth).mean())])
        ckio.write_csv(out / "grid_accuracy.csv", ["module", "grid_accuracy"], grid_rows)
        manifest.outputs.append("grid_accuracy.csv")

    manifest.write(out / "manifest.json")
    for k, acc in grid_rows:
        click.echo(f"module {k}: grid accuracy {acc:.4f}")


# ---------------------------------------------------------------------------
# image classification comparison


@main.command("train-lwbp-img")
@click.option("--dataset", "dataset_name",
              type=click.Choice(["cifar10", "mnist", "digits"]), default=None,
              help="image source [cifar10]")
@click.option("--algo", type=click.Choice(["lwbp", "lwbp-noshortcut", "bp"]),
              default=None, help="training scheme [lwbp]")
@click.option("--layers", type=int, default=None, help="depth [12]")
@click.option("--width", type=int, default=None, help="layer width [300]")
@click.option("--subset", type=int, default=None, help="training subset size, 0=all [5000]")
@click.option("--epochs", type=int, default=None, help="training epochs [20]")
@click.option("--batch", type=int, default=None, help="batch size [256]")
@click.option("--lr", type=float, default=None, help="learning rate [1e-4]")
@click.option("--act", type=str, default=None, help="activation [tanh]")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--data-dir", type=click.Path(), default=None)
@click.option("--out-dir", type=click.Path(), default=None)
@click.option("--config", type=click.Path(), default=None)
def cmd_train_lwbp_img(**flags):
    """Compare layer-wise and end-to-end training on an image set."""
    cfg = _resolve(
        {k: flags[k] for k in ("dataset_name", "algo", "layers", "width",
                               "subset", "epochs", "batch", "lr", "act")},
        _load_config(flags["config"]), "train-lwbp-img",
        {"dataset_name": "cifar10", "algo": "lwbp", "layers": 12, "width": 300,
         "subset": 5000, "epochs": 20, "batch": 256, "lr": 1e-4, "act": "tanh"})
    seed = flags["seed"]
    out = _out_dir(flags["out_dir"], f"lwbp_img_{cfg['algo']}")
    manifest = ckio.RunManifest("train-lwbp-img", seed, cfg)

    with ckio.ManifestTimer(manifest):
        rng = np.random.default_rng(seed)
        X, y = _load_image_dataset(cfg["dataset_name"], _data_dir(flags["data_dir"]),
                                   cfg["subset"], rng)
        classes = np.unique(y)
        onehot = onehot_encode(np.searchsorted(classes, y), len(classes))

        if cfg["algo"] == "bp":
            net = BpNetwork.build(rng, X.shape[1], cfg["width"], cfg["layers"],
                                  len(classes), cfg["act"], True)
        else:
            net = LwbpNetwork.build(rng, X.shape[1], cfg["width"], cfg["layers"],
                                    len(classes), cfg["act"],
                                    cfg["algo"] == "lwbp")

        n = X.shape[0]
        rows = []
        for epoch in range(cfg["epochs"]):
            order = rng.permutation(n)
            for lo in range(0, n - cfg["batch"] + 1, cfg["batch"]):
                idx = order[lo:lo + cfg["batch"]]
                net.train_step(X[idx], onehot[idx], cfg["lr"])
            if cfg["algo"] == "bp":
                rows.append([epoch, net.accuracy(X, onehot)])
            else:
                rows.append([epoch, *net.layerwise_accuracy(X, onehot)])

        if cfg["algo"] == "bp":
            header = ["epoch", "net"]
        else:
            header = ["epoch"] + [f"module_{k}" for k in range(cfg["layers"])]
        ckio.write_csv(out / "accuracy.csv", header, rows)
        manifest.outputs.append("accuracy.csv")

    manifest.write(out / "manifest.json")
    click.echo(f"final training accuracy: {float(rows[-1][-1]):.4f}")


# ---------------------------------------------------------------------------
# closed-form module network


@main.command("train-bio-lwbp")
@click.option("--width", type=int, default=None, help="units per module [900]")
@click.option("--loss-neurons", type=int, default=None, help="readout units [10]")
@click.option("--modules", type=int, default=None, help="stacked modules [3]")
@click.option("--dataset", "dataset_name",
              type=click.Choice(["cifar10", "mnist", "digits"]), default=None)
@click.option("--subset", type=int, default=None, help="subset size, 0=all [5000]")
@click.option("--epochs", type=int, default=None, help="training epochs [20]")
@click.option("--batch", type=int, default=None)
@click.option("--lr", type=float, default=None, help="learning rate [0.05]")
@click.option("--gradient-mode", type=click.Choice(["consistent", "paper-literal"]),
              default=None, help="tanh-derivative convention [consistent]")
@click.option("--rmsprop/--no-rmsprop", "use_rmsprop", default=None,
              help="route deltas through RMSprop [off]")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--data-dir", type=click.Path(), default=None)
@click.option("--out-dir", type=click.Path(), default=None)
@click.option("--config", type=click.Path(), default=None)
def cmd_train_bio(**flags):
    """Train the closed-form update network on an image set."""
    cfg = _resolve(
        {k: flags[k] for k in ("width", "loss_neurons", "modules", "dataset_name",
                               "subset", "epochs", "batch", "lr", "gradient_mode",
                               "use_rmsprop")},
        _load_config(flags["config"]), "train-bio-lwbp",
        {"width": 900, "loss_neurons": 10, "modules": 3, "dataset_name": "cifar10",
         "subset": 5000, "epochs": 20, "batch": 256, "lr": 0.05,
         "gradient_mode": "consistent", "use_rmsprop": False})
    if cfg["width"] % cfg["loss_neurons"] != 0:
        _fail_validation(
            f"width {cfg['width']} is not divisible by {cfg['loss_neurons']} loss neurons")
    mode = cfg["gradient_mode"].replace("-", "_")
    seed = flags["seed"]
    out = _out_dir(flags["out_dir"], "bio_lwbp")
    manifest = ckio.RunManifest("train-bio-lwbp", seed, cfg)

    with ckio.ManifestTimer(manifest):
        rng = np.random.default_rng(seed)
        X, y = _load_image_dataset(cfg["dataset_name"], _data_dir(flags["data_dir"]),
                                   cfg["subset"], rng)
        classes = np.unique(y)
        if len(classes) != cfg["loss_neurons"]:
            _fail_validation(
                f"dataset has {len(classes)} classes but --loss-neurons is "
                f"{cfg['loss_neurons']}")
        onehot = onehot_encode(np.searchsorted(classes, y), len(classes))
        click.echo(f"units per readout: {cfg['width'] // cfg['loss_neurons']}")

        net = BioNetwork.build(rng, X.shape[1], cfg["width"], cfg["modules"],
                               cfg["loss_neurons"])
        n = X.shape[0]
        rows = []
        for epoch in range(cfg["epochs"]):
            order = rng.permutation(n)
            for lo in range(0, n - cfg["batch"] + 1, cfg["batch"]):
                idx = order[lo:lo + cfg["batch"]]
                net.train_step(X[idx], onehot[idx], cfg["lr"], mode, cfg["use_rmsprop"])
            rows.append([epoch, *net.layerwise_accuracy(X, onehot)])

        header = ["epoch"] + [f"module_{k}" for k in range(cfg["modules"])]
        ckio.write_csv(out / "accuracy_curve.csv", header, rows)
        final = net.layerwise_accuracy(X, onehot)
        ckio.write_csv(out / "final_accuracy.csv", ["module", "accuracy"],
                       [[k, a] for k, a in enumerate(final)])
        manifest.outputs += ["accuracy_curve.csv", "final_accuracy.csv"]

    manifest.write(out / "manifest.json")
    click.echo(f"final module accuracies: {np.round(final, 4)}")


# ---------------------------------------------------------------------------
# sparse coding autoencoder


def _make_source(name, seed, data_dir, subset, rng):
    if name == "walk":
        return datasets.RandomWalk(seed)
    if name == "uniform":
        return datasets.UniformBoxSampler(seed)
    if name == "gaussian2":
        return datasets.BimodalGaussianSampler(seed)
    _fail_validation(f"unknown source {name!r}")


@main.command("train-engram")
@click.option("--source", type=click.Choice(["walk", "uniform", "gaussian2", "mnist"]),
              default=None, help="training distribution [walk]")
@click.option("--neurons", type=int, default=None, help="coding units [1000]")
@click.option("--eta", type=float, default=None, help="target active fraction [0.05]")
@click.option("--steps", type=int, default=None, help="training batches [20000]")
@click.option("--batch", type=int, default=None, help="batch size [256]")
@click.option("--lr", type=float, default=None, help="learning rate [1e-4]")
@click.option("--fields", type=int, default=None, help="place-field maps to export [4]")
@click.option("--subset", type=int, default=None, help="image subset for mnist [5000]")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--data-dir", type=click.Path(), default=None)
@click.option("--out-dir", type=click.Path(), default=None)
@click.option("--config", type=click.Path(), default=None)
def cmd_train_engram(**flags):
    """Train the sparse coder and export its analysis maps."""
    cfg = _resolve(
        {k: flags[k] for k in ("source", "neurons", "eta", "steps", "batch",
                               "lr", "fields", "subset")},
        _load_config(flags["config"]), "train-engram",
        {"source": "walk", "neurons": 1000, "eta": 0.05, "steps": 20000,
         "batch": 256, "lr": 1e-4, "fields": 4, "subset": 5000})
    seed = flags["seed"]
    out = _out_dir(flags["out_dir"], f"engram_{cfg['source']}")
    manifest = ckio.RunManifest("train-engram", seed, cfg)

    with ckio.ManifestTimer(manifest):
        rng = np.random.default_rng(seed)
        if cfg["source"] == "mnist":
            X, _ = _load_image_dataset("mnist", _data_dir(flags["data_dir"]),
                                       cfg["subset"], rng, normalize=False)
            model = MnistEngramAutoencoder(
                n_neurons=cfg["neurons"], eta=cfg["eta"],
                learning_rate=cfg["lr"], batch_size=cfg["batch"],
                n_steps=cfg["steps"], random_state=seed)
            model.fit(X)
            sample = X[rng.integers(0, X.shape[0], min(10000, X.shape[0]))]
            stats = SparsityStats.from_activations(model.transform(sample))
        else:
            source = _make_source(cfg["source"], seed, None, None, rng)
            model = EngramAutoencoder(
                n_neurons=cfg["neurons"], eta=cfg["eta"],
                learning_rate=cfg["lr"], batch_size=cfg["batch"],
                n_steps=cfg["steps"], random_state=seed)
            for _ in range(cfg["steps"]):
                model.partial_fit(source.sample(cfg["batch"]))
            stats = model.sparsity_statistics(source.sample(10000))

        model.save(out / "model.ckpt")
        manifest.outputs.append("model.ckpt")

        ckio.write_csv(out / "sparsity.csv",
                       ["frac_inhibited", "frac_mid", "frac_extreme"],
                       [[stats.frac_inhibited, stats.frac_mid, stats.frac_extreme]])
        manifest.outputs.append("sparsity.csv")

        loss_keys = sorted(model.history_[0])
        ckio.write_csv(out / "losses.csv", ["step"] + loss_keys,
                       [[i] + [h[k] for k in loss_keys]
                        for i, h in enumerate(model.history_)
                        if i % 100 == 0 or i == len(model.history_) - 1])
        manifest.outputs.append("losses.csv")

        if cfg["source"] != "mnist":
            points = model.characteristic_locations()
            ckio.write_csv(out / "characteristic_locations.csv", ["neuron", "x", "y"],
                           [[i, p[0], p[1]] for i, p in enumerate(points)])
            hist, xe, ye = density_heatmap(points)
            centers_x = (xe[:-1] + xe[1:]) / 2
            centers_y = (ye[:-1] + ye[1:]) / 2
            ckio.write_csv(out / "density.csv", ["x", "y", "value"],
                           [[centers_x[i], centers_y[j], hist[i, j]]
                            for i in range(len(centers_x))
                            for j in range(len(centers_y))])
            ckio.write_pgm(out / "density.pgm", hist.T[::-1])
            manifest.outputs += ["characteristic_locations.csv", "density.csv",
                                 "density.pgm"]
            # strongest responders get their response maps exported
            h_grid = model.grid_activations(101)
            order = np.argsort(h_grid.max(axis=0))[::-1][: cfg["fields"]]
            for i in order:
                name = f"field_{i}.pgm"
                ckio.write_pgm(out / name, model.place_field(int(i))[::-1], lo=0, hi=1)
                manifest.outputs.append(name)

    manifest.write(out / "manifest.json")
    click.echo(f"sparsity: inhibited {stats.frac_inhibited:.3f} "
               f"mid {stats.frac_mid:.3f} extreme {stats.frac_extreme:.3f}")


# ---------------------------------------------------------------------------
# associative recall


def _parse_site(text):
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        _fail_validation(f"bad site {text!r}; expected 'x,y'")
    return x, y


@main.command("memory-map")
@click.option("--model", "model_path", type=click.Path(), required=True,
              help="trained 2-D sparse-coder snapshot")
@click.option("--site", type=str, default=None, help="association site [0.8,0.2]")
@click.option("--probe1", type=str, default=None, help="first probe site [0.8,0.2]")
@click.option("--probe2", type=str, default=None, help="second probe site [0.75,0.2]")
@click.option("--grid", type=int, default=None, help="heatmap resolution [101]")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", type=click.Path(), default=None)
@click.option("--config", type=click.Path(), default=None)
def cmd_memory_map(**flags):
    """Form a one-shot association at a site and map its recall."""
    cfg = _resolve(
        {k: flags[k] for k in ("site", "probe1", "probe2", "grid")},
        _load_config(flags["config"]), "memory-map",
        {"site": "0.8,0.2", "probe1": "0.8,0.2", "probe2": "0.75,0.2", "grid": 101})
    if not Path(flags["model_path"]).exists():
        _fail_io(f"snapshot {flags['model_path']} not found")
    out = _out_dir(flags["out_dir"], "memory_map")
    manifest = ckio.RunManifest("memory-map", flags["seed"],
                                {**cfg, "model": str(flags["model_path"])})

    with ckio.ManifestTimer(manifest):
        model = EngramAutoencoder.load(flags["model_path"])
        site = _parse_site(cfg["site"])
        syn = memory.form_ltp(model, site)
        click.echo(f"engram size at {site}: {syn.size} units")

        grid_n = cfg["grid"]
        heat = memory.memory_heatmap(model, syn, grid_n)
        axis = np.linspace(0.0, 1.0, grid_n)
        ckio.write_csv(out / "recall.csv", ["x", "y", "recall"],
                       [[axis[ix], axis[iy], heat[iy, ix]]
                        for iy in range(grid_n) for ix in range(grid_n)])
        ckio.write_pgm(out / "recall.pgm", heat[::-1], lo=0, hi=1)
        manifest.outputs += ["recall.csv", "recall.pgm"]

        iy, ix = np.unravel_index(int(heat.argmax()), heat.shape)
        peak = (float(axis[ix]), float(axis[iy]))
        dist = float(np.hypot(peak[0] - site[0], peak[1] - site[1]))
        click.echo(f"recall argmax at {peak}, distance to site {dist:.4f}")

        p1, p2 = _parse_site(cfg["probe1"]), _parse_site(cfg["probe2"])
        only1, only2, both = memory.shared_engram(model, p1, p2)
        click.echo(f"probes {p1} vs {p2}: only-first {len(only1)}, "
                   f"only-second {len(only2)}, shared {len(both)}")

    manifest.write(out / "manifest.json")


# ---------------------------------------------------------------------------
# effective-weight demo


@main.command("cerebellum-demo")
@click.option("--out-dir", type=click.Path(), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
def cmd_cerebellum_demo(out_dir, seed):
    """Print the 10-synapse adjustment scenario and a precision table."""
    out = _out_dir(out_dir, "cerebellum")
    manifest = ckio.RunManifest("cerebellum-demo", seed, {})

    with ckio.ManifestTimer(manifest):
        gp = GranulePurkinje(10)
        click.echo(f"start: {gp.n_enabled} of 10 synapses on, "
                   f"effective weight {effective_weight(gp):.1f}")
        plan = plan_adjustment(gp, 0.7)
        apply_plan(gp, plan)
        click.echo(f"target 0.7: depress {len(plan.disable)} synapses -> "
                   f"effective weight {effective_weight(gp):.1f} "
                   f"(residual {plan.residual:.3f})")
        click.echo("")
        click.echo(f"{'granule cells':>13s} {'step':>10s} {'worst residual':>15s}")
        for n in (10, 100, 1000, 2991):
            gp_n = GranulePurkinje(n)
            click.echo(f"{n:13d} {gp_n.per_synapse:10.6f} {gp_n.per_synapse / 2:15.6f}")

    manifest.write(out / "manifest.json")


# ---------------------------------------------------------------------------
# pipeline benchmark


@main.command("pipeline-bench")
@click.option("--mode", type=click.Choice(["sync", "async"]), default=None,
              help="executor mode [sync]")
@click.option("--capacity", type=int, default=None, help="async queue depth [4]")
@click.option("--steps", type=int, default=None, help="batches to stream [100]")
@click.option("--modules", type=int, default=None, help="stages [5]")
@click.option("--width", type=int, default=None, help="module width [16]")
@click.option("--batch", type=int, default=None, help="batch size [256]")
@click.option("--lr", type=float, default=None, help="learning rate [1e-4]")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", type=click.Path(), default=None)
@click.option("--config", type=click.Path(), default=None)
def cmd_pipeline_bench(**flags):
    """Run the point task through the stage-parallel executor."""
    cfg = _resolve(
        {k: flags[k] for k in ("mode", "capacity", "steps", "modules", "width",
                               "batch", "lr")},
        _load_config(flags["config"]), "pipeline-bench",
        {"mode": "sync", "capacity": 4, "steps": 100, "modules": 5, "width": 16,
         "batch": 256, "lr": 1e-4})
    seed = flags["seed"]
    out = _out_dir(flags["out_dir"], f"pipeline_{cfg['mode']}")
    manifest = ckio.RunManifest("pipeline-bench", seed, cfg,
                                deterministic=cfg["mode"] == "sync")

    with ckio.ManifestTimer(manifest):
        data_rng = np.random.default_rng(seed)
        batches = []
        for _ in range(cfg["steps"]):
            pts, labels = datasets.sample_labeled_points(data_rng, cfg["batch"])
            batches.append((pts, onehot_encode(labels, 2)))

        def fresh_net():
            return LwbpNetwork.build(np.random.default_rng(seed + 1), 2,
                                     cfg["width"], cfg["modules"], 2,
                                     "leakyrelu", True, "cross_entropy")

        net = fresh_net()
        config = pipeline.PipelineConfig(cfg["mode"], cfg["capacity"])
        result = pipeline.run_pipeline(net, batches, cfg["lr"], config)

        header, rows = pipeline.throughput_report(result)
        ckio.write_csv(out / "throughput.csv", header, rows)
        # busy/idle columns are measured wall time, never byte-reproducible
        manifest.timing_outputs.append("throughput.csv")
        click.echo(f"{result.steps} batches in {result.wall_s:.2f}s "
                   f"({result.batches_per_s:.1f} batches/s)")

        if cfg["mode"] == "sync":
            reference = fresh_net()
            for pts, onehot in batches:
                reference.train_step(pts, onehot, cfg["lr"])
            same = all(
                np.array_equal(p.value, q.value)
                for p, q in zip(net.params(), reference.params()))
            click.echo("sync vs sequential parameters: "
                       + ("IDENTICAL" if same else "DIVERGED"))
            if not same:
                sys.exit(EXIT_VALIDATION)
        else:
            click.echo(f"max staleness {result.max_staleness} "
                       f"(capacity {cfg['capacity']}), "
                       f"mean {result.mean_staleness:.2f}")

    manifest.write(out / "manifest.json")


if __name__ == "__main__":
    main()
