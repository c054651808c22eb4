"""The three projection architectures and their losses.

PR trains two unrelated networks, one per direction. AEL is an autoencoder
whose bottleneck is pulled toward the reference projection by a weighted
latent term. VAEL replaces the bottleneck with a diagonal Gaussian trained
under an ELBO-style loss; at inference time its mean is the projection.

All losses use the same reduction: squared L2 norm per sample, mean over
the batch. Step functions return both the loss components and exact
parameter gradients so the training loop stays architecture-agnostic.
"""

from dataclasses import dataclass

import numpy as np

from . import nn_core
from .errors import DataError
from .nn_core import backward, forward, glorot_affine, hidden_blocks, inference

PR = "pr"
AEL = "ael"
VAEL = "vael"
TAGS = (PR, AEL, VAEL)

LOGVAR_MIN = -10.0
LOGVAR_MAX = 10.0


@dataclass
class ArchitectureSpec:
    tag: str
    input_dim: int
    encoder_hidden: tuple = (256, 128, 64)
    decoder_hidden: tuple = (64, 128, 256)
    latent_dim: int = 2
    dropout_rate: float = 0.25
    omega: float = 0.5
    alpha: float = 1.0
    beta: float = 0.1

    def __post_init__(self):
        if self.tag not in TAGS:
            raise DataError(f"unknown architecture tag {self.tag!r}")
        if self.latent_dim != 2:
            raise DataError("latent dimension is fixed at 2")
        if self.input_dim < 1:
            raise DataError("input dimension must be >= 1")
        if self.omega < 0 or self.alpha < 0 or self.beta < 0:
            raise DataError("loss weights must be nonnegative")
        self.encoder_hidden = tuple(int(w) for w in self.encoder_hidden)
        self.decoder_hidden = tuple(int(w) for w in self.decoder_hidden)


@dataclass
class VaelHead:
    """Gaussian bottleneck parameters for a batch: both arrays are (batch, 2)."""

    mu: np.ndarray
    log_var: np.ndarray


def mse(a, b):
    """Squared L2 norm of the difference per sample, averaged over the batch.

    A single vector counts as a batch of one, so mse([0,0],[1,1]) is 2.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape != b.shape:
        raise DataError(f"mse shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.sum((a - b) ** 2, axis=1)))


def loss_pr_projector(x, y_ref, net, mode=nn_core.INFERENCE, rng=None):
    out, _ = forward(net, x, mode=mode, rng=rng)
    return mse(y_ref, out)


def loss_pr_reconstructor(y_ref, x, net, mode=nn_core.INFERENCE, rng=None):
    out, _ = forward(net, y_ref, mode=mode, rng=rng)
    return mse(x, out)


def loss_ael(x, x_hat, y_ref, y_hat, omega):
    return mse(x, x_hat) + omega * mse(y_ref, y_hat)


def kl_diag_gaussian(mu, log_var):
    """KL divergence from N(mu, diag(exp(log_var))) to the standard normal.

    Closed form per sample: 0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2).
    Batches reduce by the mean, matching ``mse``.
    """
    mu = np.atleast_2d(np.asarray(mu, dtype=np.float64))
    log_var = np.atleast_2d(np.asarray(log_var, dtype=np.float64))
    if mu.shape != log_var.shape:
        raise DataError("kl shape mismatch")
    per_sample = 0.5 * np.sum(mu ** 2 + np.exp(log_var) - 1.0 - log_var, axis=1)
    return float(np.mean(per_sample))


def reparameterize(head: VaelHead, epsilon):
    """y = mu + sigma * epsilon with sigma = exp(log_var / 2)."""
    return head.mu + np.exp(0.5 * head.log_var) * epsilon


def loss_vael(x, x_hat, y_ref, y_sampled, head, alpha, beta):
    return (mse(x, x_hat)
            + alpha * mse(y_ref, y_sampled)
            + beta * kl_diag_gaussian(head.mu, head.log_var))


def init_architecture(spec: ArchitectureSpec, seed):
    """Build the parameter-bearing networks for an architecture.

    The encode side draws from stream [seed, 0] and the decode side from
    [seed, 1], so the two PR networks are independently initialized while
    everything stays reproducible.
    """
    enc_rng = np.random.default_rng([seed, 0])
    dec_rng = np.random.default_rng([seed, 1])
    d = spec.input_dim
    q = spec.latent_dim

    def decoder():
        layers, width = hidden_blocks(q, spec.decoder_hidden, spec.dropout_rate, dec_rng)
        layers.append(glorot_affine(width, d, dec_rng))
        return layers

    if spec.tag == PR:
        enc, width = hidden_blocks(d, spec.encoder_hidden, spec.dropout_rate, enc_rng)
        enc.append(glorot_affine(width, q, enc_rng))
        return {"projector": enc, "reconstructor": decoder()}
    if spec.tag == AEL:
        enc, width = hidden_blocks(d, spec.encoder_hidden, spec.dropout_rate, enc_rng)
        enc.append(glorot_affine(width, q, enc_rng))
        return {"encoder": enc, "decoder": decoder()}
    trunk, width = hidden_blocks(d, spec.encoder_hidden, spec.dropout_rate, enc_rng)
    mu_head = glorot_affine(width, q, enc_rng)
    logvar_head = glorot_affine(width, q, enc_rng)
    return {"trunk": trunk, "mu_head": mu_head,
            "logvar_head": logvar_head, "decoder": decoder()}


def net_names(tag):
    if tag == PR:
        return ("projector", "reconstructor")
    if tag == AEL:
        return ("encoder", "decoder")
    return ("trunk", "mu_head", "logvar_head", "decoder")


def _as_net(part):
    # heads are stored as single layers; backward expects a list
    return part if isinstance(part, list) else [part]


def encode_standardized(spec, nets, xz):
    """Encoder pass on already-standardized inputs, inference mode."""
    if spec.tag == PR:
        return inference(nets["projector"], xz)
    if spec.tag == AEL:
        return inference(nets["encoder"], xz)
    hidden = inference(nets["trunk"], xz)
    return inference([nets["mu_head"]], hidden)


def decode_standardized(spec, nets, yz):
    """Decoder pass on standardized latent coordinates, inference mode."""
    name = "reconstructor" if spec.tag == PR else "decoder"
    return inference(nets[name], yz)


def pr_step(spec, nets, xz, yz, rng):
    """Train-mode losses and gradients for both PR networks."""
    p_out, p_tape = forward(nets["projector"], xz, mode=nn_core.TRAIN, rng=rng)
    r_out, r_tape = forward(nets["reconstructor"], yz, mode=nn_core.TRAIN, rng=rng)
    n = xz.shape[0]
    _, p_grads = backward(nets["projector"], p_tape, 2.0 * (p_out - yz) / n)
    _, r_grads = backward(nets["reconstructor"], r_tape, 2.0 * (r_out - xz) / n)
    components = {
        "projector": mse(yz, p_out),
        "reconstructor": mse(xz, r_out),
    }
    components["total"] = components["projector"] + components["reconstructor"]
    return components, {"projector": p_grads, "reconstructor": r_grads}


def ael_step(spec, nets, xz, yz, rng):
    """One AEL pass: x -> encoder -> latent -> decoder -> x_hat.

    The latent gradient is the sum of the decoder's input gradient and the
    direct omega-weighted pull toward the reference coordinates.
    """
    latent, enc_tape = forward(nets["encoder"], xz, mode=nn_core.TRAIN, rng=rng)
    x_hat, dec_tape = forward(nets["decoder"], latent, mode=nn_core.TRAIN, rng=rng)
    n = xz.shape[0]
    d_latent, dec_grads = backward(nets["decoder"], dec_tape, 2.0 * (x_hat - xz) / n)
    d_latent = d_latent + spec.omega * 2.0 * (latent - yz) / n
    _, enc_grads = backward(nets["encoder"], enc_tape, d_latent)
    rec = mse(xz, x_hat)
    lat = mse(yz, latent)
    components = {"reconstruction": rec, "latent": lat,
                  "total": rec + spec.omega * lat}
    return components, {"encoder": enc_grads, "decoder": dec_grads}


def vael_forward(spec, nets, xz, rng, epsilon=None, mode=nn_core.TRAIN):
    """Shared VAEL forward pass; epsilon is injectable for tests."""
    hidden, trunk_tape = forward(nets["trunk"], xz, mode=mode, rng=rng)
    mu, mu_tape = forward(_as_net(nets["mu_head"]), hidden, mode=mode, rng=rng)
    raw_lv, lv_tape = forward(_as_net(nets["logvar_head"]), hidden, mode=mode, rng=rng)
    log_var = np.clip(raw_lv, LOGVAR_MIN, LOGVAR_MAX)
    lv_open = (raw_lv > LOGVAR_MIN) & (raw_lv < LOGVAR_MAX)
    if epsilon is None:
        epsilon = rng.standard_normal(mu.shape)
    head = VaelHead(mu=mu, log_var=log_var)
    sample = reparameterize(head, epsilon)
    x_hat, dec_tape = forward(nets["decoder"], sample, mode=mode, rng=rng)
    tapes = {"trunk": trunk_tape, "mu": mu_tape, "lv": lv_tape, "dec": dec_tape,
             "lv_open": lv_open, "epsilon": epsilon}
    return head, sample, x_hat, tapes


def vael_step(spec, nets, xz, yz, rng, epsilon=None):
    """Train-mode VAEL losses and gradients.

    Gradient sketch, with s = mu + sigma * eps and batch size n:
      d/ds    = decoder input gradient + 2 alpha (s - y) / n
      d/dmu   = d/ds + beta * mu / n
      d/dlv   = d/ds * eps * sigma / 2 + beta * (sigma^2 - 1) / (2 n)
    The log-variance path is gated where the clamp saturates.
    """
    head, sample, x_hat, tapes = vael_forward(spec, nets, xz, rng, epsilon=epsilon)
    n = xz.shape[0]
    sigma = np.exp(0.5 * head.log_var)

    d_sample, dec_grads = backward(nets["decoder"], tapes["dec"], 2.0 * (x_hat - xz) / n)
    d_sample = d_sample + spec.alpha * 2.0 * (sample - yz) / n

    d_mu = d_sample + spec.beta * head.mu / n
    d_lv = d_sample * tapes["epsilon"] * sigma * 0.5
    d_lv = d_lv + spec.beta * (sigma ** 2 - 1.0) / (2.0 * n)
    d_lv = d_lv * tapes["lv_open"]

    d_hidden_mu, mu_grads = backward(_as_net(nets["mu_head"]), tapes["mu"], d_mu)
    d_hidden_lv, lv_grads = backward(_as_net(nets["logvar_head"]), tapes["lv"], d_lv)
    _, trunk_grads = backward(nets["trunk"], tapes["trunk"], d_hidden_mu + d_hidden_lv)

    rec = mse(xz, x_hat)
    lat = mse(yz, sample)
    kl = kl_diag_gaussian(head.mu, head.log_var)
    components = {"reconstruction": rec, "latent": lat, "kl": kl,
                  "total": rec + spec.alpha * lat + spec.beta * kl}
    grads = {"trunk": trunk_grads, "mu_head": mu_grads,
             "logvar_head": lv_grads, "decoder": dec_grads}
    return components, grads


def architecture_step(spec, nets, xz, yz, rng, epsilon=None):
    """Dispatch to the right step function; returns (components, grads)."""
    if spec.tag == PR:
        return pr_step(spec, nets, xz, yz, rng)
    if spec.tag == AEL:
        return ael_step(spec, nets, xz, yz, rng)
    return vael_step(spec, nets, xz, yz, rng, epsilon=epsilon)
