"""Dataset handling: synthetic rings, CSV/IDX ingestion, per-dimension
standardization and train/test splitting.

All matrices are float64 with one sample per row. Constructed records are
frozen (numpy write flag cleared) so they can be shared freely.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .fileio import atomic_write_text

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass
class Dataset:
    """A real-valued data matrix (n samples x d dimensions) with optional
    integer labels."""

    values: np.ndarray
    labels: np.ndarray | None = None
    name: str = "dataset"
    image_shape: tuple[int, int] | None = None  # set for image data (rows, cols)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError(f"dataset must be a non-empty 2D matrix, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataError("dataset contains non-finite values")
        self.values = _frozen(values)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (values.shape[0],):
                raise DataError(
                    f"labels length {labels.shape} does not match sample count {values.shape[0]}"
                )
            self.labels = _frozen(labels)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def d(self):
        return self.values.shape[1]


@dataclass
class Standardizer:
    """Per-dimension affine transform z = (x - mean) / scale with scale > 0."""

    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        self.mean = _frozen(np.asarray(self.mean, dtype=np.float64).ravel())
        self.scale = _frozen(np.asarray(self.scale, dtype=np.float64).ravel())
        if self.mean.shape != self.scale.shape:
            raise DataError("standardizer mean and scale must have equal length")
        if not np.all(self.scale > 0):
            raise DataError("standardizer scale entries must be strictly positive")


@dataclass
class SplitIndices:
    """Disjoint train/test row indices covering 0..n-1."""

    train: np.ndarray
    test: np.ndarray
    seed: int

    def __post_init__(self):
        self.train = _frozen(np.asarray(self.train, dtype=np.int64))
        self.test = _frozen(np.asarray(self.test, dtype=np.int64))


def generate_rings(points_per_ring: int, seed: int = 0) -> Dataset:
    """Three interlocked unit circles in mutually orthogonal planes.

    Ring 0 lies in the xy-plane centered at the origin, ring 1 in the
    xz-plane centered at (1, 0, 0), ring 2 in the yz-plane centered at
    (2, 0, 0); adjacent rings pass through each other like the links of a
    chain, while rings 0 and 2 stay clear of each other. Each ring carries
    ``points_per_ring`` noise-free points at equal angular spacing; the
    seed only picks a random phase per ring.
    """
    if points_per_ring < 3:
        raise DataError("points_per_ring must be at least 3")
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=3)
    m = points_per_ring
    theta = 2.0 * np.pi * np.arange(m) / m

    rings = np.empty((3, m, 3))
    t0 = theta + phases[0]
    rings[0] = np.column_stack([np.cos(t0), np.sin(t0), np.zeros(m)])
    t1 = theta + phases[1]
    rings[1] = np.column_stack([1.0 + np.cos(t1), np.zeros(m), np.sin(t1)])
    t2 = theta + phases[2]
    rings[2] = np.column_stack([2.0 * np.ones(m), np.cos(t2), np.sin(t2)])

    values = rings.reshape(3 * m, 3)
    labels = np.repeat(np.arange(3), m)
    return Dataset(values=values, labels=labels, name="rings")


def _parse_cell(cell, row_number, col_number):
    try:
        return float(cell)
    except ValueError:
        raise DataError(
            f"non-numeric value {cell!r} at row {row_number}, column {col_number}"
        ) from None


def load_csv(path, has_labels: bool = False, skip_header: bool = False,
             name: str | None = None) -> Dataset:
    """Load a rectangular comma-separated numeric file, one sample per line.

    With ``has_labels`` the last column is read as an integer class label.
    Row/column positions in error messages are 1-based and refer to the
    file, including any skipped header line.
    """
    rows = []
    labels = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if lineno == 1 and skip_header:
                continue
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
                if has_labels and width < 2:
                    raise DataError("labelled CSV needs at least two columns")
            elif len(cells) != width:
                raise DataError(
                    f"row {lineno} has {len(cells)} fields, expected {width}"
                )
            parsed = [_parse_cell(c, lineno, j + 1) for j, c in enumerate(cells)]
            if has_labels:
                lab = parsed[-1]
                if lab != int(lab):
                    raise DataError(
                        f"non-integer label {cells[-1]!r} at row {lineno}"
                    )
                labels.append(int(lab))
                parsed = parsed[:-1]
            rows.append(parsed)
    if not rows:
        raise DataError(f"no data rows in {path}")
    return Dataset(
        values=np.array(rows, dtype=np.float64),
        labels=np.array(labels, dtype=np.int64) if has_labels else None,
        name=name or str(path),
    )


def _read_idx_header(blob, expected_magic, path, n_dims):
    if len(blob) < 4 * (1 + n_dims):
        raise DataError(f"{path}: truncated IDX header")
    magic = struct.unpack(">I", blob[:4])[0]
    if magic != expected_magic:
        raise DataError(
            f"{path}: IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
        )
    dims = struct.unpack(f">{n_dims}I", blob[4:4 + 4 * n_dims])
    return dims, blob[4 + 4 * n_dims:]


def load_idx(images_path, labels_path, name: str | None = None) -> Dataset:
    """Load an IDX image/label file pair (big-endian, one byte per pixel).

    Images are flattened row-major and scaled to [0, 1] by division by 255.
    """
    with open(images_path, "rb") as fh:
        blob = fh.read()
    (count, rows, cols), pixels = _read_idx_header(blob, IDX_IMAGES_MAGIC, images_path, 3)
    d = rows * cols
    if len(pixels) < count * d:
        raise DataError(f"{images_path}: expected {count * d} pixel bytes, found {len(pixels)}")
    values = np.frombuffer(pixels[:count * d], dtype=np.uint8).astype(np.float64)
    values = values.reshape(count, d) / 255.0

    with open(labels_path, "rb") as fh:
        blob = fh.read()
    (label_count,), label_bytes = _read_idx_header(blob, IDX_LABELS_MAGIC, labels_path, 1)
    if label_count != count:
        raise DataError(
            f"image count {count} does not match label count {label_count}"
        )
    if len(label_bytes) < label_count:
        raise DataError(f"{labels_path}: truncated label data")
    labels = np.frombuffer(label_bytes[:label_count], dtype=np.uint8).astype(np.int64)

    return Dataset(values=values, labels=labels, name=name or "idx",
                   image_shape=(int(rows), int(cols)))


def fit_standardizer(data, epsilon: float = 1e-12) -> Standardizer:
    """Column means and population standard deviations of a matrix (or
    Dataset). Columns with deviation below ``epsilon`` get scale 1 so the
    transform stays invertible on constant columns."""
    m = data.values if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    if m.shape[0] < 2:
        raise DataError("standardizer needs at least two samples")
    mean = m.mean(axis=0)
    scale = m.std(axis=0)  # population (1/n)
    scale = np.where(scale < epsilon, 1.0, scale)
    return Standardizer(mean=mean, scale=scale)


def _check_width(s: Standardizer, m):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] != s.mean.shape[0]:
        raise DataError(
            f"matrix width {m.shape} does not match standardizer dimension {s.mean.shape[0]}"
        )
    return m


def apply_standardizer(s: Standardizer, m):
    return (_check_width(s, m) - s.mean) / s.scale


def invert_standardizer(s: Standardizer, m):
    return _check_width(s, m) * s.scale + s.mean


def split(n: int, fraction_test: float, seed: int) -> SplitIndices:
    """Uniformly random train/test partition; |test| = round(fraction * n)."""
    if not 0.0 < fraction_test < 1.0:
        raise DataError("fraction_test must lie strictly between 0 and 1")
    if n < 2:
        raise DataError("need at least two samples to split")
    n_test = int(round(fraction_test * n))
    perm = np.random.default_rng(seed).permutation(n)
    return SplitIndices(
        train=np.sort(perm[n_test:]),
        test=np.sort(perm[:n_test]),
        seed=seed,
    )


def format_float(v) -> str:
    # repr of a Python float is the shortest exact round-trip form
    return repr(float(v))


def write_matrix_csv(path, matrix):
    m = np.asarray(matrix, dtype=np.float64)
    lines = [",".join(format_float(v) for v in row) for row in m]
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_labels_csv(path, labels):
    atomic_write_text(path, "\n".join(str(int(v)) for v in labels) + "\n")
