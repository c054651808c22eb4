"""Dense neural-network substrate with exact analytic gradients.

Layers operate on float64 batches shaped (batch, features). A network is a
plain list of layer objects; ``forward`` returns the output together with a
tape of cached intermediates that ``backward`` consumes. The Adam optimizer
updates parameters in place.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError

TRAIN = "train"
INFERENCE = "inference"


class Affine:
    """y = x @ W.T + b with W shaped (out, in)."""

    kind = "affine"

    def __init__(self, weights, bias):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise DataError("affine weights must be (out, in) with bias (out,)")

    @property
    def in_width(self):
        return self.weights.shape[1]

    @property
    def out_width(self):
        return self.weights.shape[0]

    def params(self):
        return {"weights": self.weights, "bias": self.bias}

    def forward(self, x, mode, rng):
        if x.shape[1] != self.in_width:
            raise DataError(
                f"affine layer expects width {self.in_width}, got {x.shape[1]}"
            )
        return x @ self.weights.T + self.bias, x

    def backward(self, dout, cache):
        x = cache
        grads = {"weights": dout.T @ x, "bias": dout.sum(axis=0)}
        return dout @ self.weights, grads


class BatchNorm:
    """Per-feature batch normalization.

    Train mode normalizes by batch statistics (population variance) and
    folds them into the running estimates as
    ``running = (1 - momentum) * running + momentum * batch``; inference
    mode uses the running estimates only.
    """

    kind = "batchnorm"

    def __init__(self, width, gamma=None, beta=None, running_mean=None,
                 running_var=None, momentum=0.1, eps=1e-5):
        self.width = width
        self.gamma = np.ones(width) if gamma is None else np.asarray(gamma, dtype=np.float64)
        self.beta = np.zeros(width) if beta is None else np.asarray(beta, dtype=np.float64)
        self.running_mean = (np.zeros(width) if running_mean is None
                             else np.asarray(running_mean, dtype=np.float64))
        self.running_var = (np.ones(width) if running_var is None
                            else np.asarray(running_var, dtype=np.float64))
        self.momentum = momentum
        self.eps = eps

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def forward(self, x, mode, rng):
        if x.shape[1] != self.width:
            raise DataError(f"batchnorm expects width {self.width}, got {x.shape[1]}")
        if mode == INFERENCE:
            inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
            return self.gamma * (x - self.running_mean) * inv_std + self.beta, None
        if x.shape[0] < 2:
            raise DataError("batchnorm requires batch size >= 2 in train mode")
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self.running_mean = (1.0 - self.momentum) * self.running_mean + self.momentum * mean
        self.running_var = (1.0 - self.momentum) * self.running_var + self.momentum * var
        return self.gamma * xhat + self.beta, (xhat, inv_std)

    def backward(self, dout, cache):
        xhat, inv_std = cache
        n = dout.shape[0]
        grads = {"gamma": (dout * xhat).sum(axis=0), "beta": dout.sum(axis=0)}
        dxhat = dout * self.gamma
        dx = (inv_std / n) * (
            n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
        )
        return dx, grads


class ReLU:
    kind = "relu"

    def params(self):
        return {}

    def forward(self, x, mode, rng):
        return np.maximum(x, 0.0), x > 0

    def backward(self, dout, cache):
        return dout * cache, {}


class Dropout:
    """Inverted dropout: survivors are scaled by 1/(1-rate) at train time so
    inference is a plain identity."""

    kind = "dropout"

    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise DataError("dropout rate must lie in [0, 1)")
        self.rate = rate

    def params(self):
        return {}

    def forward(self, x, mode, rng):
        if mode == INFERENCE or self.rate == 0.0:
            return x, None
        if rng is None:
            raise DataError("dropout in train mode needs an rng")
        keep = rng.random(x.shape) >= self.rate
        scale = 1.0 / (1.0 - self.rate)
        return x * keep * scale, keep * scale

    def backward(self, dout, cache):
        if cache is None:
            return dout, {}
        return dout * cache, {}


@dataclass
class ForwardTape:
    mode: str
    caches: list


def forward(net, batch, mode=TRAIN, rng=None):
    """Run a batch through a layer list; returns (output, tape)."""
    if mode not in (TRAIN, INFERENCE):
        raise DataError(f"unknown forward mode {mode!r}")
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2:
        raise DataError("batch must be 2D (batch, features)")
    caches = []
    for layer in net:
        x, cache = layer.forward(x, mode, rng)
        caches.append(cache)
    return x, ForwardTape(mode=mode, caches=caches)


def backward(net, tape, output_gradient):
    """Backpropagate an output gradient through the tape.

    Returns the gradient w.r.t. the input batch and one parameter-gradient
    dict per layer (empty for parameterless layers).
    """
    if tape.mode != TRAIN:
        raise DataError("backward needs a tape recorded in train mode")
    if len(tape.caches) != len(net):
        raise DataError("tape does not match network layer count")
    d = np.asarray(output_gradient, dtype=np.float64)
    grads = [None] * len(net)
    for i in range(len(net) - 1, -1, -1):
        d, grads[i] = net[i].backward(d, tape.caches[i])
    return d, grads


def inference(net, batch):
    """Deterministic forward pass using running statistics; no tape."""
    out, _ = forward(net, batch, mode=INFERENCE, rng=None)
    return out


class AdamState:
    """Adam moments for every parameter tensor of a network."""

    def __init__(self, net, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.moments = [
            {name: (np.zeros_like(p), np.zeros_like(p)) for name, p in layer.params().items()}
            for layer in net
        ]


def adam_step(state: AdamState, net, grads):
    """One bias-corrected Adam update, in place over the network parameters."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for i, layer in enumerate(net):
        params = layer.params()
        for name, p in params.items():
            g = grads[i][name]
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite gradient for layer {i} ({layer.kind}) {name}")
            m, v = state.moments[i][name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return net, state


def he_affine(in_width, out_width, rng):
    """Affine layer with He-uniform weights, bound sqrt(6 / fan_in)."""
    bound = np.sqrt(6.0 / in_width)
    w = rng.uniform(-bound, bound, size=(out_width, in_width))
    return Affine(w, np.zeros(out_width))


def glorot_affine(in_width, out_width, rng):
    """Affine layer with Glorot-uniform weights, bound sqrt(6 / (fan_in + fan_out))."""
    bound = np.sqrt(6.0 / (in_width + out_width))
    w = rng.uniform(-bound, bound, size=(out_width, in_width))
    return Affine(w, np.zeros(out_width))


def hidden_blocks(input_width, hidden_widths, dropout_rate, rng):
    """Stack of affine -> batchnorm -> ReLU -> dropout blocks."""
    layers = []
    width = input_width
    for h in hidden_widths:
        if h < 1:
            raise DataError("layer widths must be >= 1")
        layers.append(he_affine(width, h, rng))
        layers.append(BatchNorm(h))
        layers.append(ReLU())
        layers.append(Dropout(dropout_rate))
        width = h
    return layers, width


def init_network(input_width, hidden_widths, output_width, dropout_rate, seed):
    """Standard trunk of hidden blocks followed by a plain linear output.

    Hidden affines use He-uniform initialization (they feed ReLU); the
    linear output head uses Glorot-uniform. Biases start at zero; the
    result is deterministic for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    layers, width = hidden_blocks(input_width, hidden_widths, dropout_rate, rng)
    layers.append(glorot_affine(width, output_width, rng))
    return layers
