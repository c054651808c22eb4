"""Command-line pipeline around the library.

Five subcommands share one artifact directory. ``prepare`` writes the
dataset, its reference projection, and a manifest; ``train`` fits model
ensembles against that projection; ``evaluate`` measures them and renders
report images next to the delimited metrics; ``scan`` sweeps loss
weights; ``render`` redraws images from existing artifacts. The manifest
carries all state between stages, so later commands only need ``--out``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
All artifacts are written atomically. Set ``PROJLEARN_THREADS`` to cap
the numeric library's thread pool (it must be set before startup).
"""

import argparse
import json
import os
import re
import sys
import time

from .errors import DataError, NumericalError, UsageError

MANIFEST_NAME = "manifest.json"
DEFAULT_OMEGA_GRID = "0.1,0.5,1.0,5.0"


class _Parser(argparse.ArgumentParser):
    """Argument errors raise instead of exiting, so main() can map every
    failure mode onto the documented exit codes. Values like ``-2,-2``
    (negative projection coordinates) count as arguments, not options."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._negative_number_matcher = re.compile(r"^-[\d.][\d.,+\-eE]*$")

    def error(self, message):
        raise UsageError(message)


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise ValueError("must be >= 1")
    return value


def _batch_size(text):
    value = int(text)
    if value < 2:
        raise ValueError("must be >= 2")
    return value


def _positive_float(text):
    value = float(text)
    if value <= 0:
        raise ValueError("must be positive")
    return value


def _nonneg_float(text):
    value = float(text)
    if value < 0:
        raise ValueError("must be nonnegative")
    return value


def _size_pair(text):
    try:
        w, h = text.lower().split("x")
        width, height = int(w), int(h)
    except ValueError:
        raise ValueError("expected WxH, e.g. 256x256") from None
    if width < 3 or height < 3:
        raise ValueError("gradient map needs width and height >= 3")
    return width, height


def _point(text):
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise ValueError("expected x,y with numeric coordinates") from None
    return x, y


def _float_list(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValueError("expected a comma-separated list of numbers") from None
    if not values or any(v < 0 for v in values):
        raise ValueError("weights must be nonnegative numbers")
    return values


# argparse prints the converter's __name__ in its error messages
for _converter, _label in ((_positive_int, "count"), (_batch_size, "batch size"),
                           (_positive_float, "positive number"),
                           (_nonneg_float, "nonnegative number"),
                           (_size_pair, "WxH size"), (_point, "x,y point"),
                           (_float_list, "number list")):
    _converter.__name__ = _label


def _add_training_flags(sub, default_runs):
    sub.add_argument("--runs", type=_positive_int, default=default_runs,
                     help=f"models per ensemble (default {default_runs})")
    sub.add_argument("--seed", type=int, default=0, help="base random seed")
    sub.add_argument("--epochs", type=_positive_int, default=50)
    sub.add_argument("--batch", type=_batch_size, default=32)
    sub.add_argument("--lr", type=_positive_float, default=0.001)


def build_parser():
    parser = _Parser(prog="projlearn",
                     description="Train, invert, and evaluate 2D projections.")
    commands = parser.add_subparsers(dest="command", metavar="command")

    p = commands.add_parser("prepare", parents=[], add_help=True,
                            help="write dataset, reference projection, and manifest")
    p.add_argument("--rings", action="store_true",
                   help="generate the three-ring synthetic dataset")
    p.add_argument("--points", type=_positive_int, default=60,
                   help="points per ring for --rings (default 60)")
    p.add_argument("--csv", metavar="PATH", help="load samples from a numeric CSV")
    p.add_argument("--labels", action="store_true",
                   help="treat the last CSV column as integer labels")
    p.add_argument("--idx", nargs=2, metavar=("IMAGES", "LABELS"),
                   help="load an IDX image/label file pair")
    p.add_argument("--subset", type=_positive_int, metavar="N",
                   help="keep a seeded random subset of N samples")
    p.add_argument("--dataset", metavar="NAME", help="override the dataset name")
    p.add_argument("--projection", default="tsne", metavar="tsne|PATH",
                   help="compute a fresh embedding (tsne) or load coordinates "
                        "from a CSV file (default tsne)")
    p.add_argument("--perplexity", type=_positive_float, default=30.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, metavar="DIR")

    p = commands.add_parser("train", help="fit model ensembles per the manifest")
    p.add_argument("--arch", choices=("pr", "ael", "vael", "all"), default="all")
    _add_training_flags(p, default_runs=10)
    p.add_argument("--omega", type=_nonneg_float, help="latent-conformance weight")
    p.add_argument("--alpha", type=_nonneg_float, help="sampled-latent weight")
    p.add_argument("--beta", type=_nonneg_float, help="prior-divergence weight")
    p.add_argument("--out", default=".", metavar="DIR")

    p = commands.add_parser("evaluate",
                            help="score trained ensembles and render reports")
    p.add_argument("--arch", choices=("pr", "ael", "vael", "all"), default="all")
    p.add_argument("--gradient-map", type=_size_pair, default=(256, 256),
                   metavar="WxH", help="gradient raster size (default 256x256)")
    p.add_argument("--interpolate", nargs=2, type=_point,
                   metavar=("X0,Y0", "X1,Y1"),
                   help="decode along the segment between two projection points")
    p.add_argument("--samples", type=_positive_int, default=10,
                   help="samples along the interpolation segment (default 10)")
    p.add_argument("--original-units", action="store_true",
                   help="report errors in original data/projection units "
                        "instead of standardized units")
    p.add_argument("--no-timing", action="store_true",
                   help="omit wall-time columns so the CSV is byte-reproducible")
    p.add_argument("--out", default=".", metavar="DIR")

    p = commands.add_parser("scan", help="sweep loss weights and tabulate errors")
    p.add_argument("--arch", choices=("ael", "vael"), required=True)
    _add_training_flags(p, default_runs=3)
    p.add_argument("--omega", type=_float_list, metavar="LIST",
                   help=f"comma-separated grid (ael default {DEFAULT_OMEGA_GRID})")
    p.add_argument("--alpha", type=_float_list, metavar="LIST",
                   help="comma-separated grid (vael default 1.0)")
    p.add_argument("--beta", type=_float_list, metavar="LIST",
                   help="comma-separated grid (vael default 0.1)")
    p.add_argument("--out", default=".", metavar="DIR")

    p = commands.add_parser("render", help="redraw images from existing artifacts")
    p.add_argument("--arch", choices=("pr", "ael", "vael", "all"), default="all")
    p.add_argument("--size", type=_positive_int, default=400,
                   help="scatter raster side length (default 400)")
    p.add_argument("--out", default=".", metavar="DIR")

    return parser


# ---------------------------------------------------------------- shared


def _manifest_file(out_dir):
    return os.path.join(out_dir, MANIFEST_NAME)


def _load_manifest(out_dir):
    path = _manifest_file(out_dir)
    if not os.path.exists(path):
        raise DataError(f"no {MANIFEST_NAME} in {out_dir!r}; run prepare first")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt manifest {path}: {exc}") from exc
    for key in ("dataset", "projection"):
        if key not in manifest:
            raise DataError(f"manifest {path} is missing the {key!r} section")
    return manifest


def _referenced(out_dir, relative):
    path = os.path.join(out_dir, relative)
    if not os.path.exists(path):
        raise DataError(f"manifest references missing file {relative!r} in {out_dir!r}")
    return path


def _read_labels(path):
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                labels.append(int(line))
            except ValueError:
                raise DataError(
                    f"non-integer label {line!r} at {path}:{lineno}") from None
    return labels


def _load_pair(out_dir, manifest):
    from .data import Dataset, load_csv
    from .projection import ProjectionPair

    info = manifest["dataset"]
    values = load_csv(_referenced(out_dir, info["values"]), name=info["name"]).values
    labels = _read_labels(_referenced(out_dir, info["labels"])) if info.get("labels") else None
    shape = tuple(info["image_shape"]) if info.get("image_shape") else None
    data = Dataset(values=values, labels=labels, name=info["name"], image_shape=shape)

    proj = manifest["projection"]
    coords = load_csv(_referenced(out_dir, proj["coords"]), name="projection")
    if coords.values.shape[1] != 2:
        raise DataError(
            f"projection file must have 2 columns, got {coords.values.shape[1]}")
    if coords.values.shape[0] != data.n:
        raise DataError(
            f"projection file has {coords.values.shape[0]} rows "
            f"but dataset has {data.n}")
    return ProjectionPair(data=data, coords=coords.values,
                          method_tag=proj.get("method", "external"))


def _out_path(out_dir, name):
    return os.path.join(out_dir, name)


# ---------------------------------------------------------------- prepare


def cmd_prepare(args):
    import numpy as np

    from .data import generate_rings, load_csv, load_idx, write_labels_csv, write_matrix_csv
    from .fileio import atomic_write_json
    from .projection import TsneConfig, load_projection, tsne_embed

    sources = [bool(args.rings), args.csv is not None, args.idx is not None]
    if sum(sources) != 1:
        raise UsageError("choose exactly one dataset source: --rings, --csv, or --idx")

    if args.rings:
        data = generate_rings(args.points, seed=args.seed)
    elif args.csv:
        data = load_csv(args.csv, has_labels=args.labels,
                        name=os.path.splitext(os.path.basename(args.csv))[0])
    else:
        data = load_idx(args.idx[0], args.idx[1],
                        name=os.path.splitext(os.path.basename(args.idx[0]))[0])

    if args.subset is not None:
        if args.subset > data.n:
            raise DataError(
                f"subset of {args.subset} exceeds the {data.n} available samples")
        keep = np.sort(np.random.default_rng(args.seed).choice(
            data.n, size=args.subset, replace=False))
        from .data import Dataset
        data = Dataset(values=data.values[keep],
                       labels=None if data.labels is None else data.labels[keep],
                       name=data.name, image_shape=data.image_shape)
    if args.dataset:
        from .data import Dataset
        data = Dataset(values=data.values, labels=data.labels,
                       name=args.dataset, image_shape=data.image_shape)

    try:
        os.makedirs(args.out, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {args.out!r}: {exc}") from exc

    if args.projection == "tsne":
        pair = tsne_embed(data, TsneConfig(perplexity=args.perplexity, seed=args.seed))
        projection_info = {"method": "tsne", "coords": "projection.csv",
                           "perplexity": args.perplexity, "seed": args.seed}
    else:
        pair = load_projection(data, args.projection)
        projection_info = {"method": "external", "coords": "projection.csv",
                           "source": args.projection}

    write_matrix_csv(_out_path(args.out, "dataset.csv"), data.values)
    if data.labels is not None:
        write_labels_csv(_out_path(args.out, "labels.csv"), data.labels)
    write_matrix_csv(_out_path(args.out, "projection.csv"), pair.coords)

    manifest = {
        "dataset": {
            "name": data.name, "values": "dataset.csv",
            "labels": "labels.csv" if data.labels is not None else None,
            "image_shape": list(data.image_shape) if data.image_shape else None,
            "rows": data.n, "dims": data.d,
        },
        "projection": projection_info,
        "seed": args.seed,
    }
    atomic_write_json(_manifest_file(args.out), manifest)
    print(f"prepared {data.name}: {data.n} rows x {data.d} dims, "
          f"projection via {projection_info['method']} -> {args.out}")
    return 0


# ---------------------------------------------------------------- train


def _loss_log_csv(ensemble):
    from .data import format_float

    components = list(ensemble[0][0].loss_history[0])
    lines = ["run,epoch," + ",".join(components)]
    for run, (model, _) in enumerate(ensemble):
        for epoch, record in enumerate(model.loss_history):
            lines.append(f"{run},{epoch}," +
                         ",".join(format_float(record[c]) for c in components))
    return "\n".join(lines) + "\n"


def cmd_train(args):
    from .architectures import TAGS, ArchitectureSpec
    from .fileio import atomic_write_json, atomic_write_text
    from .training import TrainingConfig, save_model, train_ensemble

    manifest = _load_manifest(args.out)
    pair = _load_pair(args.out, manifest)
    archs = TAGS if args.arch == "all" else (args.arch,)
    overrides = {name: getattr(args, name)
                 for name in ("omega", "alpha", "beta")
                 if getattr(args, name) is not None}

    os.makedirs(os.path.join(args.out, "models"), exist_ok=True)
    os.makedirs(os.path.join(args.out, "logs"), exist_ok=True)
    manifest.setdefault("models", {})
    for tag in archs:
        spec = ArchitectureSpec(tag=tag, input_dim=pair.data.d, **overrides)
        cfg = TrainingConfig(architecture=spec, epochs=args.epochs,
                             batch_size=args.batch, learning_rate=args.lr,
                             seed=args.seed)
        started = time.perf_counter()
        ensemble = train_ensemble(pair, cfg, runs=args.runs)
        elapsed = time.perf_counter() - started

        files = []
        for k, (model, _) in enumerate(ensemble):
            relative = f"models/{tag}-run{k:02d}.json"
            save_model(model, _out_path(args.out, relative))
            files.append(relative)
        log_relative = f"logs/{tag}-loss.csv"
        atomic_write_text(_out_path(args.out, log_relative), _loss_log_csv(ensemble))

        manifest["models"][tag] = {
            "files": files, "log": log_relative, "runs": args.runs,
            "seed": args.seed, "epochs": args.epochs, "batch_size": args.batch,
            "learning_rate": args.lr, "test_fraction": cfg.test_fraction,
            "omega": spec.omega, "alpha": spec.alpha, "beta": spec.beta,
        }
        final = ensemble[0][0].loss_history[-1]["total"]
        print(f"trained {tag}: {args.runs} runs x {args.epochs} epochs "
              f"in {elapsed:.1f}s (first-run final loss {final:.4f})")
    atomic_write_json(_manifest_file(args.out), manifest)
    return 0


# ---------------------------------------------------------------- evaluate


def _ordered_archs(manifest, requested):
    from .architectures import TAGS

    trained = manifest.get("models") or {}
    if not trained:
        raise DataError("no trained models in the manifest; run train first")
    if requested == "all":
        return [tag for tag in TAGS if tag in trained]
    if requested not in trained:
        raise DataError(f"no trained models for {requested!r}; run train first")
    return [requested]


def _load_ensemble(out_dir, manifest, tag, n_rows):
    from .data import split
    from .training import load_model

    runs = []
    for relative in manifest["models"][tag]["files"]:
        model = load_model(_referenced(out_dir, relative))
        indices = split(n_rows, model.config.test_fraction, model.seed)
        runs.append((model, indices))
    return runs


def _render_reference(args, pair):
    from .figures import scatter_figure
    from .rasters import render_scatter, write_ppm

    write_ppm(_out_path(args.out, "scatter-reference.ppm"),
              render_scatter(pair.coords, pair.data.labels))
    scatter_figure(pair.coords, _out_path(args.out, "scatter-reference.png"),
                   labels=pair.data.labels,
                   title=f"reference projection ({pair.method_tag})")


def cmd_evaluate(args):
    from .data import write_matrix_csv
    from .evaluation import (evaluate_ensemble, gradient_map, interpolation_strip,
                             report_csv, report_json)
    from .figures import gradient_figure, loss_figure, scatter_figure, strip_figure
    from .fileio import atomic_write_json, atomic_write_text
    from .rasters import render_scatter, tile_strip, write_gradient_map, write_pgm8, write_ppm

    manifest = _load_manifest(args.out)
    pair = _load_pair(args.out, manifest)
    width, height = args.gradient_map
    _render_reference(args, pair)

    for tag in _ordered_archs(manifest, args.arch):
        runs = _load_ensemble(args.out, manifest, tag, pair.data.n)
        report = evaluate_ensemble(runs, pair, standardized=not args.original_units)
        atomic_write_text(_out_path(args.out, f"metrics-{tag}.csv"),
                          report_csv(report, timing=not args.no_timing))
        atomic_write_json(_out_path(args.out, f"metrics-{tag}.json"), report_json(report))

        first = runs[0][0]
        gm = gradient_map(first, pair, width=width, height=height)
        write_gradient_map(_out_path(args.out, f"gradient-{tag}.pgm"), gm)
        gradient_figure(gm, _out_path(args.out, f"gradient-{tag}.png"),
                        title=f"{tag} inverse-map gradient")

        encoded = first.encode(pair.data.values)
        write_ppm(_out_path(args.out, f"scatter-{tag}.ppm"),
                  render_scatter(encoded, pair.data.labels))
        scatter_figure(encoded, _out_path(args.out, f"scatter-{tag}.png"),
                       labels=pair.data.labels, title=f"{tag} parametric projection")
        loss_figure([model.loss_history for model, _ in runs],
                    _out_path(args.out, f"loss-{tag}.png"), title=f"{tag} training loss")

        if args.interpolate:
            a, b = args.interpolate
            strip = interpolation_strip(first, a, b, k=args.samples)
            write_matrix_csv(_out_path(args.out, f"strip-{tag}.csv"), strip)
            if pair.data.image_shape:
                write_pgm8(_out_path(args.out, f"strip-{tag}.pgm"),
                           tile_strip(strip, pair.data.image_shape))
                strip_figure(strip, _out_path(args.out, f"strip-{tag}.png"),
                             image_shape=pair.data.image_shape,
                             title=f"{tag} interpolation")
            else:
                strip_figure(strip, _out_path(args.out, f"strip-{tag}.png"),
                             title=f"{tag} interpolation")

        units = "original" if args.original_units else "standardized"
        print(f"{tag}: parametric {report.parametric_mean:.4f} "
              f"(sd {report.parametric_sd:.4f}), inverse {report.inverse_mean:.4f} "
              f"(sd {report.inverse_sd:.4f}) [{units} units, {report.runs} runs]")
    return 0


# ---------------------------------------------------------------- scan


def _scan_grid(args):
    if args.arch == "ael":
        if args.alpha or args.beta:
            raise UsageError("--alpha/--beta apply to vael scans; use --omega for ael")
        omegas = args.omega or _float_list(DEFAULT_OMEGA_GRID)
        return [{"omega": v} for v in omegas], "omega"
    if args.omega:
        raise UsageError("--omega applies to ael scans; use --alpha/--beta for vael")
    alphas = args.alpha or [1.0]
    betas = args.beta or [0.1]
    return [{"alpha": a, "beta": b} for a in alphas for b in betas], "alpha"


def _scan_csv(points, keys):
    from .data import format_float

    lines = [",".join(keys) + ",parametric_mean,parametric_sd,inverse_mean,inverse_sd"]
    for point in points:
        r = point.report
        lines.append(",".join(
            [format_float(point.weights[k]) for k in keys]
            + [format_float(v) for v in (r.parametric_mean, r.parametric_sd,
                                         r.inverse_mean, r.inverse_sd)]))
    return "\n".join(lines) + "\n"


def cmd_scan(args):
    from .architectures import ArchitectureSpec
    from .evaluation import parameter_scan, report_json
    from .figures import scan_figure
    from .fileio import atomic_write_json, atomic_write_text
    from .training import TrainingConfig

    grid, xkey = _scan_grid(args)
    manifest = _load_manifest(args.out)
    pair = _load_pair(args.out, manifest)
    spec = ArchitectureSpec(tag=args.arch, input_dim=pair.data.d)
    cfg = TrainingConfig(architecture=spec, epochs=args.epochs,
                         batch_size=args.batch, learning_rate=args.lr,
                         seed=args.seed)
    points = parameter_scan(pair, cfg, grid, runs_per_point=args.runs)

    keys = sorted(grid[0])
    atomic_write_text(_out_path(args.out, f"scan-{args.arch}.csv"),
                      _scan_csv(points, keys))
    atomic_write_json(_out_path(args.out, f"scan-{args.arch}.json"),
                      [{"weights": p.weights, "report": report_json(p.report)}
                       for p in points])
    scan_figure(points, _out_path(args.out, f"scan-{args.arch}.png"), xkey,
                title=f"{args.arch} weight sweep")
    for point in points:
        label = ", ".join(f"{k}={point.weights[k]:g}" for k in keys)
        print(f"{label}: parametric {point.report.parametric_mean:.4f}, "
              f"inverse {point.report.inverse_mean:.4f} "
              f"over {args.runs} run{'s' if args.runs != 1 else ''}")
    return 0


# ---------------------------------------------------------------- render


def cmd_render(args):
    from .figures import scatter_figure, strip_figure
    from .rasters import render_scatter, tile_strip, write_pgm8, write_ppm

    manifest = _load_manifest(args.out)
    pair = _load_pair(args.out, manifest)
    write_ppm(_out_path(args.out, "scatter-reference.ppm"),
              render_scatter(pair.coords, pair.data.labels, size=args.size))
    scatter_figure(pair.coords, _out_path(args.out, "scatter-reference.png"),
                   labels=pair.data.labels,
                   title=f"reference projection ({pair.method_tag})")
    written = ["scatter-reference.ppm", "scatter-reference.png"]

    if pair.data.image_shape:
        samples = pair.data.values[:min(10, pair.data.n)]
        write_pgm8(_out_path(args.out, "samples.pgm"),
                   tile_strip(samples, pair.data.image_shape))
        strip_figure(samples, _out_path(args.out, "samples.png"),
                     image_shape=pair.data.image_shape, title="dataset samples")
        written += ["samples.pgm", "samples.png"]

    if manifest.get("models"):
        for tag in _ordered_archs(manifest, args.arch):
            runs = _load_ensemble(args.out, manifest, tag, pair.data.n)
            encoded = runs[0][0].encode(pair.data.values)
            write_ppm(_out_path(args.out, f"scatter-{tag}.ppm"),
                      render_scatter(encoded, pair.data.labels, size=args.size))
            scatter_figure(encoded, _out_path(args.out, f"scatter-{tag}.png"),
                           labels=pair.data.labels,
                           title=f"{tag} parametric projection")
            written += [f"scatter-{tag}.ppm", f"scatter-{tag}.png"]
    print("rendered " + ", ".join(written))
    return 0


# ---------------------------------------------------------------- entry


_COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "scan": cmd_scan,
    "render": cmd_render,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing command (try --help)")
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
