"""Parametric, invertible 2D projections trained against a reference embedding.

The package trains small dense networks to reproduce a fixed 2D projection
of a dataset and to map 2D points back to data space, then measures and
renders the quality of both directions.
"""

import importlib
import os

__version__ = "0.1.0"

_SUBMODULES = {
    "architectures",
    "cli",
    "data",
    "errors",
    "evaluation",
    "figures",
    "fileio",
    "nn_core",
    "projection",
    "rasters",
    "training",
}


def _cap_threads():
    # PROJLEARN_THREADS caps BLAS parallelism; it only works if the env vars
    # are in place before numpy is first imported, which is why submodules
    # load lazily below.
    want = os.environ.get("PROJLEARN_THREADS", "").strip()
    if not want.isdigit() or int(want) < 1:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, want)


_cap_threads()


def __getattr__(name):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(set(globals()) | _SUBMODULES)
