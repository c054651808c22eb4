"""Reference 2D projections: exact t-SNE plus ingestion of external coords.

The t-SNE here is the plain O(n^2) algorithm: per-row bandwidth search to
hit a perplexity target, symmetrized affinities, Student-t low-dimensional
kernel, gradient descent with gains, early exaggeration and a momentum
switch. Good for desk-scale datasets; anything larger should come in
through ``load_projection``.
"""

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, apply_standardizer, fit_standardizer, load_csv
from .errors import DataError, NumericalError

PERPLEXITY_TOL = 1e-3
SEARCH_ITERS = 200


@dataclass
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    early_exaggeration_factor: float = 12.0
    early_exaggeration_iters: int = 250
    momentum_initial: float = 0.5
    momentum_final: float = 0.8
    momentum_switch_iter: int = 250
    seed: int = 0

    def __post_init__(self):
        if self.perplexity < 2:
            raise DataError("perplexity must be >= 2")
        if self.iterations < 1:
            raise DataError("iterations must be >= 1")


@dataclass
class ProjectionPair:
    data: Dataset
    coords: np.ndarray
    method_tag: str
    kl_history: list = field(default_factory=list)  # (iteration, kl) samples

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise DataError("projection coords must be n x 2")
        if self.coords.shape[0] != self.data.n:
            raise DataError(
                f"projection has {self.coords.shape[0]} rows "
                f"but dataset has {self.data.n}"
            )
        if not np.all(np.isfinite(self.coords)):
            raise DataError("projection coords contain non-finite values")


def _squared_distances(values):
    sq = np.sum(values ** 2, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (values @ values.T)
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def _row_affinities(dist_row, beta):
    # shift by the smallest distance so exp never overflows for large beta
    shifted = dist_row - dist_row.min()
    p = np.exp(-beta * shifted)
    return p / p.sum()


def _perplexity_of(p):
    nz = p[p > 0]
    entropy = -np.sum(nz * np.log2(nz))
    return 2.0 ** entropy


def conditional_affinities(values, perplexity):
    """Row-stochastic conditional affinities p_{j|i} with zero diagonal.

    Each row's Gaussian bandwidth is found by binary search on the
    precision until the achieved perplexity is within 1e-3 of the target.
    Rows whose entropy does not respond to the bandwidth at all (for
    example a row equidistant from everything) keep their natural uniform
    affinities instead of failing.
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    if n < 2:
        raise DataError("affinities need at least 2 points")
    distances = _squared_distances(values)
    mask = ~np.eye(n, dtype=bool)
    cond = np.zeros((n, n))
    for i in range(n):
        row = distances[i][mask[i]]
        beta, lo, hi = 1.0, -np.inf, np.inf
        p = _row_affinities(row, beta)
        for _ in range(SEARCH_ITERS):
            achieved = _perplexity_of(p)
            if abs(achieved - perplexity) <= PERPLEXITY_TOL:
                break
            if achieved > perplexity:
                lo = beta
                beta = beta * 2.0 if np.isinf(hi) else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = beta * 0.5 if np.isinf(lo) else 0.5 * (beta + lo)
            p = _row_affinities(row, beta)
        else:
            flat = abs(_perplexity_of(_row_affinities(row, beta * 2.0))
                       - _perplexity_of(p)) < 1e-9
            if not flat:
                raise NumericalError(
                    f"perplexity search did not converge for row {i}")
        cond[i][mask[i]] = p
    return cond


def tsne_affinities(data, perplexity):
    """Symmetrized joint affinities p_ij = (p_{j|i} + p_{i|j}) / 2n."""
    values = data.values if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    n = values.shape[0]
    if n < 3 * perplexity:
        raise DataError(
            f"perplexity {perplexity} needs at least {3 * perplexity:.0f} points, got {n}")
    cond = conditional_affinities(values, perplexity)
    p = (cond + cond.T) / (2.0 * n)
    return p


def _kl_divergence(p, q):
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / q[nz])))


def tsne_embed(data: Dataset, cfg: TsneConfig = None) -> ProjectionPair:
    """Run exact t-SNE on a dataset; deterministic for a fixed config seed.

    Inputs are standardized internally before distances are taken. The KL
    objective against the plain (un-exaggerated) affinities is sampled at
    iteration 1, every 50th iteration, and the last iteration.
    """
    cfg = cfg or TsneConfig()
    n = data.n
    if cfg.perplexity >= n / 3:
        raise DataError(
            f"perplexity {cfg.perplexity} too large for {n} points (needs < n/3)")
    st = fit_standardizer(data)
    values = apply_standardizer(st, data.values)
    p = tsne_affinities(values, cfg.perplexity)
    p = np.maximum(p, 1e-12)

    rng = np.random.default_rng(cfg.seed)
    y = rng.normal(scale=1e-2, size=(n, 2))
    velocity = np.zeros_like(y)
    gains = np.ones_like(y)
    history = []

    for t in range(1, cfg.iterations + 1):
        exaggerate = t <= cfg.early_exaggeration_iters
        p_eff = p * cfg.early_exaggeration_factor if exaggerate else p
        if t == cfg.early_exaggeration_iters + 1:
            # fresh optimizer state for the plain phase, as in the reference
            # implementation; carrying exaggeration-scale velocity over
            # overshoots badly once the attractive forces drop
            velocity[:] = 0.0
            gains[:] = 1.0

        num = 1.0 / (1.0 + _squared_distances(y))
        np.fill_diagonal(num, 0.0)
        q = np.maximum(num / num.sum(), 1e-12)

        pq_num = (p_eff - q) * num
        grad = 4.0 * (pq_num.sum(axis=1)[:, None] * y - pq_num @ y)

        momentum = (cfg.momentum_initial if t <= cfg.momentum_switch_iter
                    else cfg.momentum_final)
        same_sign = np.sign(grad) == np.sign(velocity)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        velocity = momentum * velocity - cfg.learning_rate * gains * grad
        y = y + velocity
        y = y - y.mean(axis=0)

        # the magnitude bound trips before squared distances can overflow
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > 1e150:
            raise NumericalError(f"t-SNE diverged at iteration {t}")
        if t == 1 or t % 50 == 0 or t == cfg.iterations:
            history.append((t, _kl_divergence(p, q)))

    return ProjectionPair(data=data, coords=y, method_tag="tsne",
                          kl_history=history)


def load_projection(data: Dataset, path) -> ProjectionPair:
    """Read externally computed coordinates, row-aligned with the dataset."""
    loaded = load_csv(path)
    if loaded.values.shape[1] != 2:
        raise DataError(
            f"projection file must have 2 columns, got {loaded.values.shape[1]}")
    if loaded.values.shape[0] != data.n:
        raise DataError(
            f"projection file has {loaded.values.shape[0]} rows "
            f"but dataset has {data.n}")
    return ProjectionPair(data=data, coords=loaded.values, method_tag="external")
