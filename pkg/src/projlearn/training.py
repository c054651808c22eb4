"""Epoch/batch orchestration, seeding, and model persistence.

A training run is deterministic given its seed. The seed feeds separate
random streams for initialization, batch shuffling, and train-time noise
(dropout masks, bottleneck samples), so architectural variants can share
what they should share and nothing else. For PR the two networks are
trained as genuinely independent loops over the same batch order, each
with its own noise stream.
"""

import time
from dataclasses import dataclass, replace

import numpy as np

from . import nn_core
from .architectures import (
    AEL,
    PR,
    VAEL,
    ArchitectureSpec,
    ael_step,
    decode_standardized,
    encode_standardized,
    init_architecture,
    net_names,
    vael_step,
)
from .data import (
    SplitIndices,
    Standardizer,
    apply_standardizer,
    fit_standardizer,
    invert_standardizer,
    split,
)
from .errors import DataError, ModelFormatError, NumericalError
from .fileio import atomic_write_json
from .nn_core import AdamState, Affine, BatchNorm, Dropout, ReLU, adam_step, backward, forward
from .projection import ProjectionPair

MODEL_FORMAT_VERSION = 1

# random-stream ids under the run seed
_STREAM_SHUFFLE = 2
_STREAM_NOISE = 3


@dataclass
class TrainingConfig:
    architecture: ArchitectureSpec
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 0.001
    seed: int = 0
    test_fraction: float = 0.2

    def __post_init__(self):
        if self.epochs < 1:
            raise DataError("epochs must be >= 1")
        if self.batch_size < 2:
            raise DataError("batch_size must be >= 2")
        if self.learning_rate <= 0:
            raise DataError("learning_rate must be positive")
        if not 0.0 < self.test_fraction < 1.0:
            raise DataError("test_fraction must lie in (0, 1)")


@dataclass
class TrainedModel:
    spec: ArchitectureSpec
    nets: dict
    data_standardizer: Standardizer
    projection_standardizer: Standardizer
    loss_history: list
    config: TrainingConfig
    seed: int
    train_seconds: float = 0.0

    def encode(self, x):
        """Original data units in, original projection units out."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xz = apply_standardizer(self.data_standardizer, np.atleast_2d(x))
        yz = encode_standardized(self.spec, self.nets, xz)
        y = invert_standardizer(self.projection_standardizer, yz)
        return y[0] if single else y

    def decode(self, y):
        """Original projection units in, original data units out."""
        y = np.asarray(y, dtype=np.float64)
        single = y.ndim == 1
        yz = apply_standardizer(self.projection_standardizer, np.atleast_2d(y))
        xz = decode_standardized(self.spec, self.nets, yz)
        x = invert_standardizer(self.data_standardizer, xz)
        return x[0] if single else x

    def encode_standardized(self, xz):
        return encode_standardized(self.spec, self.nets, np.atleast_2d(xz))

    def decode_standardized(self, yz):
        return decode_standardized(self.spec, self.nets, np.atleast_2d(yz))


def _batches(n, batch_size, order):
    """Yield index batches; a trailing batch of one is dropped because
    batchnorm cannot normalize it."""
    for start in range(0, n, batch_size):
        batch = order[start:start + batch_size]
        if len(batch) >= 2:
            yield batch


def _check_finite(total, epoch, batch_index):
    if not np.isfinite(total):
        raise NumericalError(
            f"non-finite loss at epoch {epoch}, batch {batch_index}")


def _train_single_network(net, inputs, targets, cfg, shuffle_seed, noise_rng):
    """Plain supervised regression loop used for each PR network.

    The shuffle generator is reconstructed from the given seed so that two
    networks trained separately still see identical batch orders.
    """
    shuffle_rng = np.random.default_rng(shuffle_seed)
    state = AdamState(net, lr=cfg.learning_rate)
    history = []
    n = inputs.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        total, seen = 0.0, 0
        for bi, batch in enumerate(_batches(n, cfg.batch_size, order), start=1):
            xb, yb = inputs[batch], targets[batch]
            out, tape = forward(net, xb, mode=nn_core.TRAIN, rng=noise_rng)
            diff = out - yb
            loss = float(np.mean(np.sum(diff ** 2, axis=1)))
            _check_finite(loss, epoch, bi)
            _, grads = backward(net, tape, 2.0 * diff / len(batch))
            adam_step(state, net, grads)
            total += loss * len(batch)
            seen += len(batch)
        history.append(total / seen)
    return history


def _train_joint(spec, nets, xz, yz, cfg, shuffle_seed, noise_rng):
    """End-to-end loop for AEL and VAEL."""
    step = ael_step if spec.tag == AEL else vael_step
    shuffle_rng = np.random.default_rng(shuffle_seed)
    states = {name: AdamState(nets[name] if isinstance(nets[name], list)
                              else [nets[name]], lr=cfg.learning_rate)
              for name in net_names(spec.tag)}
    history = []
    n = xz.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        sums, seen = {}, 0
        for bi, batch in enumerate(_batches(n, cfg.batch_size, order), start=1):
            components, grads = step(spec, nets, xz[batch], yz[batch], rng=noise_rng)
            _check_finite(components["total"], epoch, bi)
            for name in net_names(spec.tag):
                part = nets[name]
                layers = part if isinstance(part, list) else [part]
                adam_step(states[name], layers, grads[name])
            for key, value in components.items():
                sums[key] = sums.get(key, 0.0) + value * len(batch)
            seen += len(batch)
        history.append({key: value / seen for key, value in sums.items()})
    return history


def train(pair: ProjectionPair, indices: SplitIndices, cfg: TrainingConfig) -> TrainedModel:
    """Fit one model against a reference projection.

    Standardizers for both spaces are fit on the training rows only and
    applied to everything downstream, so test rows never leak into
    preprocessing.
    """
    spec = cfg.architecture
    if spec.input_dim != pair.data.d:
        raise DataError(
            f"architecture expects {spec.input_dim} input dims, dataset has {pair.data.d}")
    if len(indices.train) == 0:
        raise DataError("training split is empty")

    x_train = pair.data.values[indices.train]
    y_train = pair.coords[indices.train]
    st_x = fit_standardizer(x_train)
    st_y = fit_standardizer(y_train)
    xz = apply_standardizer(st_x, x_train)
    yz = apply_standardizer(st_y, y_train)

    nets = init_architecture(spec, cfg.seed)
    noise_rng = np.random.default_rng([cfg.seed, _STREAM_NOISE])
    started = time.perf_counter()

    if spec.tag == PR:
        # independent noise streams, shared batch order
        proj_rng = np.random.default_rng([cfg.seed, _STREAM_NOISE, 0])
        rec_rng = np.random.default_rng([cfg.seed, _STREAM_NOISE, 1])
        shuffle_seed = [cfg.seed, _STREAM_SHUFFLE]
        p_hist = _train_single_network(nets["projector"], xz, yz, cfg,
                                       shuffle_seed, proj_rng)
        r_hist = _train_single_network(nets["reconstructor"], yz, xz, cfg,
                                       shuffle_seed, rec_rng)
        history = [{"projector": p, "reconstructor": r, "total": p + r}
                   for p, r in zip(p_hist, r_hist)]
    else:
        history = _train_joint(spec, nets, xz, yz, cfg,
                               [cfg.seed, _STREAM_SHUFFLE], noise_rng)

    elapsed = time.perf_counter() - started
    return TrainedModel(spec=spec, nets=nets, data_standardizer=st_x,
                        projection_standardizer=st_y, loss_history=history,
                        config=cfg, seed=cfg.seed, train_seconds=elapsed)


def train_ensemble(pair: ProjectionPair, cfg: TrainingConfig, runs: int = 10):
    """Train ``runs`` models, run k seeded with base seed + k for both the
    train/test assignment and the network; returns (model, indices) pairs."""
    if runs < 1:
        raise DataError("runs must be >= 1")
    out = []
    for k in range(runs):
        run_seed = cfg.seed + k
        idx = split(pair.data.n, cfg.test_fraction, seed=run_seed)
        model = train(pair, idx, replace(cfg, seed=run_seed))
        out.append((model, idx))
    return out


def _layer_record(layer):
    if isinstance(layer, Affine):
        return {"kind": "affine",
                "shape": list(layer.weights.shape),
                "weights": layer.weights.reshape(-1).tolist(),
                "bias": layer.bias.tolist()}
    if isinstance(layer, BatchNorm):
        return {"kind": "batchnorm", "width": layer.width,
                "gamma": layer.gamma.tolist(), "beta": layer.beta.tolist(),
                "running_mean": layer.running_mean.tolist(),
                "running_var": layer.running_var.tolist(),
                "momentum": layer.momentum, "eps": layer.eps}
    if isinstance(layer, ReLU):
        return {"kind": "relu"}
    if isinstance(layer, Dropout):
        return {"kind": "dropout", "rate": layer.rate}
    raise ModelFormatError(f"cannot serialize layer kind {type(layer).__name__}")


def _layer_from_record(rec):
    try:
        kind = rec["kind"]
        if kind == "affine":
            out_w, in_w = rec["shape"]
            w = np.array(rec["weights"], dtype=np.float64).reshape(out_w, in_w)
            return Affine(w, np.array(rec["bias"], dtype=np.float64))
        if kind == "batchnorm":
            return BatchNorm(rec["width"], gamma=rec["gamma"], beta=rec["beta"],
                             running_mean=rec["running_mean"],
                             running_var=rec["running_var"],
                             momentum=rec["momentum"], eps=rec["eps"])
        if kind == "relu":
            return ReLU()
        if kind == "dropout":
            return Dropout(rec["rate"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"corrupt layer record: {exc}") from exc
    raise ModelFormatError(f"unknown layer kind {kind!r}")


def save_model(model: TrainedModel, path):
    spec = model.spec
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "architecture": {
            "tag": spec.tag, "input_dim": spec.input_dim,
            "encoder_hidden": list(spec.encoder_hidden),
            "decoder_hidden": list(spec.decoder_hidden),
            "latent_dim": spec.latent_dim, "dropout_rate": spec.dropout_rate,
            "omega": spec.omega, "alpha": spec.alpha, "beta": spec.beta,
        },
        "config": {
            "epochs": model.config.epochs, "batch_size": model.config.batch_size,
            "learning_rate": model.config.learning_rate,
            "test_fraction": model.config.test_fraction,
        },
        "seed": model.seed,
        "train_seconds": model.train_seconds,
        "data_standardizer": {"mean": model.data_standardizer.mean.tolist(),
                              "scale": model.data_standardizer.scale.tolist()},
        "projection_standardizer": {"mean": model.projection_standardizer.mean.tolist(),
                                    "scale": model.projection_standardizer.scale.tolist()},
        "loss_history": model.loss_history,
        "nets": {
            name: [_layer_record(l) for l in
                   (model.nets[name] if isinstance(model.nets[name], list)
                    else [model.nets[name]])]
            for name in net_names(spec.tag)
        },
    }
    atomic_write_json(path, payload)


def load_model(path) -> TrainedModel:
    import json
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise ModelFormatError(f"cannot read model file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"corrupt model file: {exc}") from exc
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise ModelFormatError("corrupt model file: missing format_version")
    version = payload["format_version"]
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"model format version {version} unsupported "
            f"(this build reads version {MODEL_FORMAT_VERSION})")
    try:
        arch = payload["architecture"]
        spec = ArchitectureSpec(
            tag=arch["tag"], input_dim=arch["input_dim"],
            encoder_hidden=tuple(arch["encoder_hidden"]),
            decoder_hidden=tuple(arch["decoder_hidden"]),
            latent_dim=arch["latent_dim"], dropout_rate=arch["dropout_rate"],
            omega=arch["omega"], alpha=arch["alpha"], beta=arch["beta"])
        cfg = TrainingConfig(
            architecture=spec, epochs=payload["config"]["epochs"],
            batch_size=payload["config"]["batch_size"],
            learning_rate=payload["config"]["learning_rate"],
            seed=payload["seed"],
            test_fraction=payload["config"]["test_fraction"])
        nets = {}
        for name in net_names(spec.tag):
            layers = [_layer_from_record(r) for r in payload["nets"][name]]
            # heads are stored singly in the live dict
            nets[name] = layers if (name not in ("mu_head", "logvar_head")) else layers[0]
        st_x = Standardizer(mean=np.array(payload["data_standardizer"]["mean"]),
                            scale=np.array(payload["data_standardizer"]["scale"]))
        st_y = Standardizer(mean=np.array(payload["projection_standardizer"]["mean"]),
                            scale=np.array(payload["projection_standardizer"]["scale"]))
        return TrainedModel(spec=spec, nets=nets, data_standardizer=st_x,
                            projection_standardizer=st_y,
                            loss_history=payload["loss_history"], config=cfg,
                            seed=payload["seed"],
                            train_seconds=payload["train_seconds"])
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"corrupt model file: {exc}") from exc
