"""Dependency-free binary image writers.

Scatter plots go to 24-bit portable pixmaps (PPM, P6), gradient maps to
16-bit portable graymaps (PGM, P5) with a JSON sidecar carrying the
projection-space ranges and raw statistics, and interpolation strips to
8-bit graymaps of side-by-side tiles. The formats are trivially
parseable, so tests can assert on exact bytes.

Raster rows run top-down (row 0 at the highest y), the usual image
convention; grid-valued inputs stored bottom-up are flipped on write.
"""

import re

import numpy as np

from .errors import DataError
from .evaluation import GradientMap
from .fileio import atomic_write_bytes, atomic_write_json

# fixed 10-color palette (the familiar "category 10" colors); labels
# index it modulo 10
PALETTE = np.array([
    (0x1f, 0x77, 0xb4), (0xff, 0x7f, 0x0e), (0x2c, 0xa0, 0x2c),
    (0xd6, 0x27, 0x28), (0x94, 0x67, 0xbd), (0x8c, 0x56, 0x4b),
    (0xe3, 0x77, 0xc2), (0x7f, 0x7f, 0x7f), (0xbc, 0xbd, 0x22),
    (0x17, 0xbe, 0xcf),
], dtype=np.uint8)

_MARGIN = 0.05


def _axis_to_pixels(v, n_pixels):
    """Min-max fit of one coordinate axis onto pixel indices 0..n-1 with
    a 5% margin; a zero-extent axis maps everything to the center."""
    lo, hi = float(v.min()), float(v.max())
    if hi - lo == 0.0:
        return np.full(v.shape, (n_pixels - 1) // 2, dtype=np.int64)
    m = _MARGIN * (hi - lo)
    lo, hi = lo - m, hi + m
    return np.clip(np.rint((v - lo) / (hi - lo) * (n_pixels - 1)).astype(np.int64),
                   0, n_pixels - 1)


def scatter_centers(coords, size):
    """Pixel centers (row, col) for each point under the scatter fit."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2 or coords.shape[0] == 0:
        raise DataError("scatter needs a non-empty n x 2 coordinate array")
    cols = _axis_to_pixels(coords[:, 0], size)
    rows = (size - 1) - _axis_to_pixels(coords[:, 1], size)
    return np.column_stack([rows, cols])


def render_scatter(coords, labels=None, size: int = 400):
    """Draw one filled disc per point on a white square canvas.

    Colors come from the fixed palette via ``label % 10`` (all points get
    the first color when labels are omitted). The fit is a per-axis
    min-max map with a 5% margin, so translating every point leaves the
    image unchanged. Returns a (size, size, 3) uint8 array.
    """
    centers = scatter_centers(coords, size)
    n = centers.shape[0]
    if labels is None:
        labels = np.zeros(n, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise DataError("labels must match the number of points")

    radius = max(2, size // 100)
    dy, dx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    disc = (dy ** 2 + dx ** 2) <= radius ** 2
    offsets = np.column_stack([dy[disc], dx[disc]])

    image = np.full((size, size, 3), 255, dtype=np.uint8)
    for (row, col), label in zip(centers, labels):
        px = offsets + (row, col)
        keep = ((px[:, 0] >= 0) & (px[:, 0] < size)
                & (px[:, 1] >= 0) & (px[:, 1] < size))
        image[px[keep, 0], px[keep, 1]] = PALETTE[label % 10]
    return image


def tile_strip(vectors, image_shape, pad: int = 1):
    """Lay decoded vectors out as one horizontal strip of image tiles.

    Each d-vector is reshaped to ``image_shape`` (rows, cols), clamped to
    [0, 1], and quantized to 8 bits; tiles are separated by white padding
    columns. Returns a (rows, k*cols + (k-1)*pad) uint8 array.
    """
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    rows, cols = int(image_shape[0]), int(image_shape[1])
    if rows * cols != vectors.shape[1]:
        raise DataError(
            f"cannot reshape {vectors.shape[1]}-dimensional vectors to "
            f"{rows}x{cols} tiles")
    k = vectors.shape[0]
    tiles = np.rint(np.clip(vectors, 0.0, 1.0) * 255.0).astype(np.uint8)
    strip = np.full((rows, k * cols + (k - 1) * pad), 255, dtype=np.uint8)
    for i in range(k):
        start = i * (cols + pad)
        strip[:, start:start + cols] = tiles[i].reshape(rows, cols)
    return strip


def _pnm_header(magic, width, height, maxval):
    return f"{magic}\n{width} {height}\n{maxval}\n".encode("ascii")


def write_ppm(path, pixels):
    """Binary PPM (P6, maxval 255) from a (h, w, 3) uint8 array."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise DataError("PPM writer needs an h x w x 3 array")
    h, w = pixels.shape[:2]
    atomic_write_bytes(path, _pnm_header("P6", w, h, 255) + pixels.tobytes())


def write_pgm8(path, pixels):
    """Binary PGM (P5, maxval 255) from a (h, w) uint8 array."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    if pixels.ndim != 2:
        raise DataError("PGM writer needs an h x w array")
    h, w = pixels.shape
    atomic_write_bytes(path, _pnm_header("P5", w, h, 255) + pixels.tobytes())


def write_gradient_map(path, gm: GradientMap):
    """16-bit PGM of a gradient map plus a JSON sidecar at ``path + '.json'``.

    Gray levels are a per-map linear min-max normalization (a flat map
    renders black); the sidecar keeps the raw statistics and ranges so
    nothing is lost to the rendering."""
    values = gm.values[::-1]  # stored bottom-up, rendered top-down
    lo, hi = float(values.min()), float(values.max())
    if hi - lo == 0.0:
        levels = np.zeros(values.shape, dtype=np.uint16)
    else:
        levels = np.rint((values - lo) / (hi - lo) * 65535.0).astype(np.uint16)
    body = levels.astype(">u2").tobytes()  # PGM maxval > 255: big-endian pairs
    atomic_write_bytes(path, _pnm_header("P5", gm.width, gm.height, 65535) + body)
    atomic_write_json(str(path) + ".json", {
        "width": gm.width,
        "height": gm.height,
        "x_range": [gm.x_range[0], gm.x_range[1]],
        "y_range": [gm.y_range[0], gm.y_range[1]],
        "max_gradient": gm.max_gradient,
        "avg_gradient": gm.avg_gradient,
        "gray_min": lo,
        "gray_max": hi,
        "orientation": "row 0 at the top (highest y)",
    })


def _read_pnm(path, magic):
    with open(path, "rb") as fh:
        data = fh.read()
    header = re.match(rf"{magic}\s+(\d+)\s+(\d+)\s+(\d+)\s".encode("ascii"), data)
    if header is None:
        raise DataError(f"not a {magic} file: {path}")
    width, height, maxval = (int(header.group(i)) for i in (1, 2, 3))
    return width, height, maxval, data[header.end():]


def read_ppm(path):
    """Inverse of write_ppm; returns a (h, w, 3) uint8 array."""
    width, height, maxval, body = _read_pnm(path, "P6")
    if maxval != 255:
        raise DataError("only maxval 255 PPM is supported")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3).copy()


def read_pgm(path):
    """Inverse of the PGM writers; returns uint8 or uint16 (h, w)."""
    width, height, maxval, body = _read_pnm(path, "P5")
    dtype = np.uint8 if maxval < 256 else ">u2"
    grid = np.frombuffer(body, dtype=dtype).reshape(height, width)
    return grid.astype(np.uint16).copy() if maxval >= 256 else grid.copy()
