"""Quantitative evaluation of trained models.

Measures how faithfully a model reproduces its reference projection
(parametric error) and reconstructs data from reference coordinates
(inverse error), aggregates those metrics over ensembles, rasterizes the
smoothness of the decoder as a gradient map, samples the decoder along
straight lines in projection space, and sweeps loss weights.

Errors are reported per sample as the squared Euclidean norm of the
residual, averaged over the test rows, in standardized units by default
(pass ``standardized=False`` for original units). Gradient-map pixels
depend only on pure decoder calls, so the grid is evaluated in large
vectorized batches; ensemble evaluation is an independent loop over runs.
"""

import time
from dataclasses import dataclass, replace

import numpy as np

from .data import apply_standardizer
from .errors import DataError
from .projection import ProjectionPair
from .training import TrainingConfig, train_ensemble

_AGG_TOL = 1e-12

# grid points decoded per batch while filling a gradient map; bounds peak
# memory without affecting results
_GRID_CHUNK = 8192


def _test_rows(test_indices):
    idx = np.asarray(getattr(test_indices, "test", test_indices), dtype=np.int64)
    if idx.size == 0:
        raise DataError("test set is empty")
    return idx


def parametric_mse(model, pair: ProjectionPair, test_indices, standardized: bool = True):
    """Mean squared residual between the model's projection of the test
    rows and the reference coordinates, per sample ‖·‖², averaged."""
    idx = _test_rows(test_indices)
    x = pair.data.values[idx]
    y = pair.coords[idx]
    if standardized:
        xz = apply_standardizer(model.data_standardizer, x)
        predicted = model.encode_standardized(xz)
        target = apply_standardizer(model.projection_standardizer, y)
    else:
        predicted = np.atleast_2d(model.encode(x))
        target = y
    return float(np.mean(np.sum((predicted - target) ** 2, axis=1)))


def inverse_mse(model, pair: ProjectionPair, test_indices, standardized: bool = True):
    """Mean squared residual between the decoder's output at the
    reference coordinates of the test rows and the rows themselves."""
    idx = _test_rows(test_indices)
    x = pair.data.values[idx]
    y = pair.coords[idx]
    if standardized:
        yz = apply_standardizer(model.projection_standardizer, y)
        reconstructed = model.decode_standardized(yz)
        target = apply_standardizer(model.data_standardizer, x)
    else:
        reconstructed = np.atleast_2d(model.decode(y))
        target = x
    return float(np.mean(np.sum((reconstructed - target) ** 2, axis=1)))


@dataclass
class GradientMap:
    """Rasterized decoder-smoothness field over a projection-space grid.

    ``values[r, c]`` holds the gradient magnitude at the pixel center in
    row r (row 0 at the bottom of the y range) and column c; image
    writers flip rows for top-down formats. Ranges are the outer edges of
    the grid in projection units.
    """

    width: int
    height: int
    values: np.ndarray
    x_range: tuple
    y_range: tuple
    max_gradient: float
    avg_gradient: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.height, self.width):
            raise DataError(
                f"gradient grid shape {self.values.shape} does not match "
                f"height x width ({self.height}, {self.width})")
        if not np.all(np.isfinite(self.values)):
            raise DataError("gradient grid contains non-finite values")
        if np.any(self.values < 0):
            raise DataError("gradient magnitudes must be non-negative")
        for name, stored, actual in (
            ("max_gradient", self.max_gradient, float(self.values.max())),
            ("avg_gradient", self.avg_gradient, float(self.values.mean())),
        ):
            if abs(stored - actual) > _AGG_TOL * max(1.0, abs(actual)):
                raise DataError(f"{name} disagrees with the grid")


def _expanded_box(coords, margin_fraction):
    x_lo, y_lo = coords.min(axis=0)
    x_hi, y_hi = coords.max(axis=0)
    if x_hi - x_lo == 0.0 or y_hi - y_lo == 0.0:
        raise DataError("projection bounding box has zero extent")
    mx = margin_fraction * (x_hi - x_lo)
    my = margin_fraction * (y_hi - y_lo)
    return x_lo - mx, x_hi + mx, y_lo - my, y_hi + my


def gradient_map(model, pair: ProjectionPair, width: int = 256, height: int = 256,
                 margin_fraction: float = 0.05) -> GradientMap:
    """Evaluate the decoder's local rate of change on a regular grid.

    The grid spans the projection's bounding box expanded by
    ``margin_fraction`` per side. Each pixel decodes the centers of its
    four axis neighbors and combines the horizontal and vertical
    difference norms,

        G = sqrt(‖left − right‖² + ‖down − up‖²),

    so interior pixels see central differences over two pixel pitches.
    Border pixels reuse the same formula with the pixel's own center
    standing in for the missing neighbor (a one-sided difference).
    """
    if width < 3 or height < 3:
        raise DataError("gradient map needs width and height >= 3")
    x_lo, x_hi, y_lo, y_hi = _expanded_box(pair.coords, margin_fraction)

    # pixel centers, row 0 at y_lo
    xs = x_lo + (np.arange(width) + 0.5) * (x_hi - x_lo) / width
    ys = y_lo + (np.arange(height) + 0.5) * (y_hi - y_lo) / height
    gx, gy = np.meshgrid(xs, ys)
    points = np.column_stack([gx.ravel(), gy.ravel()])

    decoded = []
    for start in range(0, points.shape[0], _GRID_CHUNK):
        decoded.append(np.atleast_2d(model.decode(points[start:start + _GRID_CHUNK])))
    grid = np.concatenate(decoded, axis=0).reshape(height, width, -1)

    cols = np.arange(width)
    rows = np.arange(height)
    horiz = grid[:, np.minimum(cols + 1, width - 1), :] - grid[:, np.maximum(cols - 1, 0), :]
    vert = grid[np.minimum(rows + 1, height - 1), :, :] - grid[np.maximum(rows - 1, 0), :, :]
    values = np.sqrt(np.sum(horiz ** 2, axis=2) + np.sum(vert ** 2, axis=2))

    return GradientMap(
        width=width, height=height, values=values,
        x_range=(float(x_lo), float(x_hi)), y_range=(float(y_lo), float(y_hi)),
        max_gradient=float(values.max()), avg_gradient=float(values.mean()),
    )


def interpolation_strip(model, a, b, k: int = 10):
    """Decode k points spaced at equal intervals on the segment from a to
    b (both endpoints included); returns a (k, d) array of data vectors."""
    if k < 2:
        raise DataError("interpolation needs at least two samples")
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != (2,) or b.shape != (2,):
        raise DataError("interpolation endpoints must be 2D points")
    t = (np.arange(k) / (k - 1))[:, None]
    points = a + t * (b - a)
    points[-1] = b  # land on b exactly despite rounding in the lerp
    return np.atleast_2d(model.decode(points))


@dataclass
class MetricsReport:
    """Per-run errors and wall times for an ensemble, with aggregates.

    The aggregate standard deviations use the population (1/N)
    convention, recorded in ``sd_convention`` so readers of serialized
    reports can tell. ``standardized`` records the unit system of the
    per-run errors.
    """

    arch: str
    dataset: str
    parametric: np.ndarray
    inverse: np.ndarray
    train_seconds: np.ndarray
    infer_seconds: np.ndarray
    parametric_mean: float
    parametric_sd: float
    inverse_mean: float
    inverse_sd: float
    standardized: bool = True
    sd_convention: str = "population"

    def __post_init__(self):
        for name in ("parametric", "inverse", "train_seconds", "infer_seconds"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        n = self.parametric.size
        if n == 0:
            raise DataError("metrics report needs at least one run")
        for name in ("inverse", "train_seconds", "infer_seconds"):
            if getattr(self, name).size != n:
                raise DataError("per-run metric arrays must have equal length")
        for name, stored, actual in (
            ("parametric_mean", self.parametric_mean, float(self.parametric.mean())),
            ("parametric_sd", self.parametric_sd, float(self.parametric.std())),
            ("inverse_mean", self.inverse_mean, float(self.inverse.mean())),
            ("inverse_sd", self.inverse_sd, float(self.inverse.std())),
        ):
            if abs(stored - actual) > _AGG_TOL * max(1.0, abs(actual)):
                raise DataError(f"{name} is not recomputable from the per-run values")

    @property
    def runs(self):
        return self.parametric.size


def evaluate_ensemble(runs, pair: ProjectionPair, standardized: bool = True) -> MetricsReport:
    """Score a list of (model, split) pairs, as produced by
    ``train_ensemble``, against their reference projection."""
    runs = list(runs)
    if not runs:
        raise DataError("ensemble evaluation needs at least one run")
    par, inv, t_train, t_infer = [], [], [], []
    for model, idx in runs:
        t0 = time.perf_counter()
        par.append(parametric_mse(model, pair, idx, standardized))
        inv.append(inverse_mse(model, pair, idx, standardized))
        t_infer.append(time.perf_counter() - t0)
        t_train.append(model.train_seconds)
    par = np.array(par)
    inv = np.array(inv)
    return MetricsReport(
        arch=runs[0][0].spec.tag, dataset=pair.data.name,
        parametric=par, inverse=inv,
        train_seconds=np.array(t_train), infer_seconds=np.array(t_infer),
        parametric_mean=float(par.mean()), parametric_sd=float(par.std()),
        inverse_mean=float(inv.mean()), inverse_sd=float(inv.std()),
        standardized=standardized,
    )


def report_json(report: MetricsReport) -> dict:
    """Plain-dict form of a report, suitable for JSON serialization."""
    return {
        "arch": report.arch,
        "dataset": report.dataset,
        "runs": report.runs,
        "standardized": report.standardized,
        "sd_convention": report.sd_convention,
        "parametric_mse": [float(v) for v in report.parametric],
        "inverse_mse": [float(v) for v in report.inverse],
        "train_s": [float(v) for v in report.train_seconds],
        "infer_s": [float(v) for v in report.infer_seconds],
        "parametric_mean": report.parametric_mean,
        "parametric_sd": report.parametric_sd,
        "inverse_mean": report.inverse_mean,
        "inverse_sd": report.inverse_sd,
    }


def report_csv(report: MetricsReport, timing: bool = True) -> str:
    """Flat per-run table. With ``timing=False`` the wall-time columns
    are dropped so repeated runs of a deterministic pipeline produce
    byte-identical files."""
    header = "run,arch,dataset,parametric_mse,inverse_mse"
    if timing:
        header += ",train_s,infer_s"
    lines = [header]
    for k in range(report.runs):
        row = (f"{k},{report.arch},{report.dataset},"
               f"{float(report.parametric[k])!r},{float(report.inverse[k])!r}")
        if timing:
            row += (f",{float(report.train_seconds[k])!r}"
                    f",{float(report.infer_seconds[k])!r}")
        lines.append(row)
    return "\n".join(lines) + "\n"


_WEIGHT_FIELDS = ("omega", "alpha", "beta")


@dataclass
class ScanPoint:
    """One grid point of a weight sweep: the weights and the ensemble
    report measured with them."""

    weights: dict
    report: MetricsReport


def parameter_scan(pair: ProjectionPair, cfg: TrainingConfig, grid,
                   runs_per_point: int = 3):
    """Train and evaluate an ensemble at every loss-weight combination.

    ``grid`` is a sequence of dicts over the weight fields (omega, alpha,
    beta); all entries must sweep the same fields. Results come back
    sorted by the swept values so tables read monotonically regardless of
    the order the grid was given in.
    """
    grid = [dict(point) for point in grid]
    if not grid:
        raise DataError("parameter scan needs a non-empty grid")
    if runs_per_point < 1:
        raise DataError("runs_per_point must be >= 1")
    keys = sorted(grid[0])
    for point in grid:
        if sorted(point) != keys:
            raise DataError("every grid point must set the same weight fields")
        for name in point:
            if name not in _WEIGHT_FIELDS:
                raise DataError(
                    f"unknown weight field {name!r}; expected one of {_WEIGHT_FIELDS}")
    if not keys:
        raise DataError("grid points must set at least one weight field")

    points = []
    for weights in grid:
        spec = replace(cfg.architecture, **weights)
        runs = train_ensemble(pair, replace(cfg, architecture=spec), runs=runs_per_point)
        points.append(ScanPoint(weights=weights, report=evaluate_ensemble(runs, pair)))
    points.sort(key=lambda p: tuple(p.weights[k] for k in keys))
    return points
