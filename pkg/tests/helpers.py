"""Shared numeric oracles for the test suite.

The gradient checker here is deliberately independent of the library's own
backward passes: it only ever calls a black-box scalar function, so it can
arbitrate disagreements.
"""

import numpy as np


def numeric_gradient(f, x, h=1e-5):
    """Central-difference gradient of scalar f at array x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(analytic, numeric):
    """Max elementwise |a - n| / max(|a|, |n|, 1)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1.0)
    return float(np.max(np.abs(a - n) / denom))


def check_param_gradients(build_loss, net, analytic_grads, h=1e-5):
    """Compare analytic parameter gradients against central differences.

    ``build_loss`` must recompute the scalar loss from the network's current
    parameter values (re-seeding any stochastic layers itself). Returns the
    worst relative error over every parameter tensor.
    """
    worst = 0.0
    for i, layer in enumerate(net):
        for name, p in layer.params().items():
            numeric = numeric_gradient(lambda _: build_loss(), p, h=h)
            worst = max(worst, relative_error(analytic_grads[i][name], numeric))
    return worst
