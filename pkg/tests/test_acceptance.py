"""End-to-end acceptance gates for the full toolkit.

Each test records one summary line (replayed after the run by the
terminal-summary hook in conftest) and then asserts its stated bound,
so the log always shows every measured value next to its requirement.
One check is report-only by design and says so in its line; the
directional comparisons depend on the reference-projection regime.
"""

import os
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from helpers import check_param_gradients

from projlearn.architectures import (
    ArchitectureSpec,
    VaelHead,
    architecture_step,
    init_architecture,
    kl_diag_gaussian,
    loss_ael,
    loss_vael,
    net_names,
    reparameterize,
)
from projlearn.cli import main
from projlearn.data import (
    apply_standardizer,
    fit_standardizer,
    generate_rings,
    invert_standardizer,
    load_idx,
    Dataset,
)
from projlearn.evaluation import evaluate_ensemble, gradient_map, parameter_scan
from projlearn.projection import ProjectionPair, TsneConfig, tsne_embed
from projlearn.training import TrainingConfig, train_ensemble


def _report(line):
    print(line)  # shows up in the captured output of a failing test
    ACCEPTANCE_LINES.append(line)


def _verdict(ok):
    return "PASS" if ok else "FAIL"


# ------------------------------------------------------------ criterion 1


def test_criterion_01_gradients_match_finite_differences():
    started = time.perf_counter()
    worst = 0.0
    for tag, seed in (("pr", 1), ("ael", 2), ("vael", 3),
                      ("pr", 11), ("ael", 12), ("vael", 13)):
        spec = ArchitectureSpec(tag=tag, input_dim=5, encoder_hidden=(7, 5),
                                decoder_hidden=(6, 8), dropout_rate=0.25)
        nets = init_architecture(spec, seed=seed)
        rng = np.random.default_rng(seed + 100)
        xz = rng.normal(size=(4, 5))
        yz = rng.normal(size=(4, 2))
        eps = rng.standard_normal((4, 2))

        def total():
            comp, _ = architecture_step(spec, nets, xz, yz,
                                        rng=np.random.default_rng(7), epsilon=eps)
            return comp["total"]

        _, grads = architecture_step(spec, nets, xz, yz,
                                     rng=np.random.default_rng(7), epsilon=eps)
        for name in net_names(tag):
            part = nets[name]
            layers = part if isinstance(part, list) else [part]
            worst = max(worst, check_param_gradients(total, layers, grads[name]))
    elapsed = time.perf_counter() - started
    ok = worst < 1e-4 and elapsed < 30
    _report(f"[{_verdict(ok)}] criterion 1: max relative gradient error {worst:.2e} "
            f"over 6 randomized networks, all losses (require < 1e-4), "
            f"{elapsed:.1f}s (require < 30)")
    assert worst < 1e-4
    assert elapsed < 30


# ------------------------------------------------------------ criterion 2


def test_criterion_02_kl_closed_form_matches_monte_carlo():
    started = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(20):
        mu = rng.uniform(0.5, 2.0, size=2) * rng.choice([-1.0, 1.0], size=2)
        log_var = rng.uniform(0.5, 2.0, size=2) * rng.choice([-1.0, 1.0], size=2)
        exact = kl_diag_gaussian(mu, log_var)
        sigma = np.exp(0.5 * log_var)
        z = mu + sigma * rng.standard_normal((100_000, 2))
        log_q = -0.5 * np.sum((z - mu) ** 2 / sigma ** 2 + log_var
                              + np.log(2 * np.pi), axis=1)
        log_p = -0.5 * np.sum(z ** 2 + np.log(2 * np.pi), axis=1)
        estimate = float(np.mean(log_q - log_p))
        worst = max(worst, abs(estimate - exact) / abs(exact))
    elapsed = time.perf_counter() - started
    ok = worst < 0.01 and elapsed < 10
    _report(f"[{_verdict(ok)}] criterion 2: worst KL Monte-Carlo deviation "
            f"{worst:.2%} over 20 pairs at 1e5 samples (require < 1%), "
            f"{elapsed:.1f}s (require < 10)")
    assert worst < 0.01
    assert elapsed < 10


# ------------------------------------------------------------ criterion 3


def test_criterion_03_standardization_round_trip():
    rng = np.random.default_rng(3)
    worst = 0.0
    for k in range(100):
        rows = int(rng.integers(2, 41))
        cols = int(rng.integers(1, 9))
        matrix = rng.normal(size=(rows, cols)) * 10.0 ** rng.uniform(-2, 3)
        if k % 3 == 0:
            matrix[:, 0] = 3.7  # constant column
        s = fit_standardizer(matrix)
        back = invert_standardizer(s, apply_standardizer(s, matrix))
        worst = max(worst, float(np.max(np.abs(back - matrix))))
    ok = worst < 1e-9
    _report(f"[{_verdict(ok)}] criterion 3: worst standardization round-trip "
            f"error {worst:.2e} over 100 matrices (require < 1e-9)")
    assert worst < 1e-9


# ------------------------------------------------ shared rings ensembles


@pytest.fixture(scope="module")
def rings_tsne():
    started = time.perf_counter()
    pair = tsne_embed(generate_rings(60, seed=0), TsneConfig(seed=0))
    return pair, time.perf_counter() - started


def _rings_cfg(tag):
    return TrainingConfig(architecture=ArchitectureSpec(tag=tag, input_dim=3), seed=0)


@pytest.fixture(scope="module")
def ael_rings(rings_tsne):
    pair, _ = rings_tsne
    started = time.perf_counter()
    runs = train_ensemble(pair, _rings_cfg("ael"), runs=10)
    report = evaluate_ensemble(runs, pair)
    return report, time.perf_counter() - started


@pytest.fixture(scope="module")
def pr_rings(rings_tsne):
    pair, _ = rings_tsne
    started = time.perf_counter()
    runs = train_ensemble(pair, _rings_cfg("pr"), runs=10)
    report = evaluate_ensemble(runs, pair)
    return report, time.perf_counter() - started


# ------------------------------------------------------------ criterion 4


def test_criterion_04_rings_error_bands(rings_tsne, ael_rings):
    _, tsne_seconds = rings_tsne
    report, train_seconds = ael_rings
    elapsed = tsne_seconds + train_seconds
    par, inv = report.parametric_mean, report.inverse_mean
    ok = par <= 0.05 and inv <= 0.10 and elapsed < 300
    _report(f"[{_verdict(ok)}] criterion 4: ael 10-run mean parametric {par:.4f} "
            f"(require <= 0.05), inverse {inv:.4f} (require <= 0.10), "
            f"{elapsed:.0f}s (require < 300)")
    assert elapsed < 300
    assert par <= 0.05, (
        f"10-run mean parametric error {par:.4f} exceeds the 0.05 band; "
        f"at these defaults the latent pull (weight 0.5) stalls against the "
        f"reconstruction gradient within the 50-epoch budget")
    assert inv <= 0.10, (
        f"10-run mean inverse error {inv:.4f} exceeds the 0.10 band; "
        f"the decoder is evaluated at reference coordinates the stalled "
        f"latent never reached during training")


# ------------------------------------------------------------ criterion 5


def test_criterion_05_directional_inverse_claim(ael_rings, pr_rings):
    ael_report, _ = ael_rings
    pr_report, _ = pr_rings
    ael_inv, pr_inv = ael_report.inverse_mean, pr_report.inverse_mean
    holds = ael_inv < pr_inv
    # contract: reported as pass/fail with both values, not hard-asserted
    _report(f"[{_verdict(holds)}] criterion 5: ael mean inverse {ael_inv:.4f} "
            f"vs pr mean inverse {pr_inv:.4f} "
            f"(directional claim, reported not asserted)")


# ------------------------------------------------------------ criterion 6


def _find_idx_file(root, *fragments):
    for name in sorted(os.listdir(root)):
        if all(f in name for f in fragments) and not name.endswith(".gz"):
            return os.path.join(root, name)
    return None


def test_criterion_06_vael_smoothness_on_mnist():
    root = os.environ.get("PROJLEARN_MNIST_DIR", "").strip()
    if not root:
        _report("[SKIP] criterion 6: PROJLEARN_MNIST_DIR not set; the "
                "digit-image smoothness comparison needs the IDX files")
        pytest.skip("PROJLEARN_MNIST_DIR not set")
    images = _find_idx_file(root, "images", "idx3")
    labels = _find_idx_file(root, "labels", "idx1")
    if not images or not labels:
        _report(f"[SKIP] criterion 6: no IDX image/label pair under {root}")
        pytest.skip(f"no IDX image/label pair under {root}")

    started = time.perf_counter()
    full = load_idx(images, labels, name="mnist")
    keep = np.sort(np.random.default_rng(0).choice(full.n, size=2000, replace=False))
    data = Dataset(values=full.values[keep], labels=full.labels[keep],
                   name="mnist-2000", image_shape=full.image_shape)
    pair = tsne_embed(data, TsneConfig(seed=0))

    averages = {}
    for tag in ("vael", "pr"):
        cfg = TrainingConfig(architecture=ArchitectureSpec(
            tag=tag, input_dim=data.d, alpha=1.0, beta=0.1), seed=0)
        runs = train_ensemble(pair, cfg, runs=3)
        averages[tag] = float(np.mean(
            [gradient_map(model, pair).avg_gradient for model, _ in runs]))
    elapsed = time.perf_counter() - started
    ok = averages["vael"] < averages["pr"] and elapsed < 1200
    _report(f"[{_verdict(ok)}] criterion 6: vael avg gradient {averages['vael']:.4f} "
            f"vs pr {averages['pr']:.4f} over 3 runs each (require vael < pr), "
            f"{elapsed:.0f}s (require < 1200)")
    assert elapsed < 1200
    assert averages["vael"] < averages["pr"], (
        f"vael {averages['vael']:.4f} not smoother than pr {averages['pr']:.4f}")


# ------------------------------------------------------------ criterion 7


def test_criterion_07_gradient_map_analytic_oracle():
    rng = np.random.default_rng(7)
    coords = rng.normal(size=(30, 2)) * np.array([2.0, 1.5])
    pair = ProjectionPair(data=Dataset(rng.normal(size=(30, 4)), name="oracle"),
                          coords=coords, method_tag="synthetic")
    a = rng.normal(size=(4, 2))

    class LinearDecoder:
        def decode(self, y):
            return np.atleast_2d(y) @ a.T

    width = height = 33
    margin = 0.05
    gm = gradient_map(LinearDecoder(), pair, width=width, height=height,
                      margin_fraction=margin)
    x_lo, y_lo = coords.min(axis=0)
    x_hi, y_hi = coords.max(axis=0)
    hx = (x_hi - x_lo) * (1 + 2 * margin) / width
    hy = (y_hi - y_lo) * (1 + 2 * margin) / height
    expected = float(np.sqrt(np.sum((a @ [2 * hx, 0.0]) ** 2)
                             + np.sum((a @ [0.0, 2 * hy]) ** 2)))
    interior_dev = float(np.max(np.abs(gm.values[1:-1, 1:-1] - expected)))

    class ConstantDecoder:
        def decode(self, y):
            return np.ones((np.atleast_2d(y).shape[0], 4))

    flat = gradient_map(ConstantDecoder(), pair, width=9, height=9)
    flat_max = float(flat.values.max())
    ok = interior_dev < 1e-9 * max(1.0, expected) and flat_max == 0.0
    _report(f"[{_verdict(ok)}] criterion 7: linear-decoder interior deviation "
            f"{interior_dev:.2e} from closed form {expected:.4f} (require < 1e-9), "
            f"constant-decoder max {flat_max} (require 0)")
    assert interior_dev < 1e-9 * max(1.0, expected)
    assert flat_max == 0.0


# ------------------------------------------------------------ criterion 8


def test_criterion_08_omega_scan_direction(rings_tsne):
    pair, _ = rings_tsne
    grid = [{"omega": w} for w in (0.1, 0.5, 1.0, 5.0)]
    points = parameter_scan(pair, _rings_cfg("ael"), grid, runs_per_point=3)
    by_omega = {p.weights["omega"]: p.report for p in points}
    inv_low, inv_high = by_omega[0.1].inverse_mean, by_omega[5.0].inverse_mean
    par_low, par_high = by_omega[0.1].parametric_mean, by_omega[5.0].parametric_mean
    inv_ok = inv_low <= inv_high
    par_ok = par_low >= par_high
    ok = inv_ok and par_ok
    _report(f"[{_verdict(ok)}] criterion 8: inverse at omega 0.1 vs 5.0 = "
            f"{inv_low:.4f} vs {inv_high:.4f} (require <=), parametric "
            f"{par_low:.4f} vs {par_high:.4f} (require >=), 3 runs per point")
    assert par_ok, (
        f"parametric error should not improve when the latent pull weakens: "
        f"omega 0.1 gives {par_low:.4f}, omega 5.0 gives {par_high:.4f}")
    assert inv_ok, (
        f"inverse error at omega 0.1 ({inv_low:.4f}) is not <= omega 5.0 "
        f"({inv_high:.4f}); in this regime a weak latent pull leaves the "
        f"latent far from the reference coordinates, and decoding at those "
        f"coordinates degrades rather than improves")


# ------------------------------------------------------------ criterion 9


def test_criterion_09_metrics_csv_reproducible(tmp_path):
    out = str(tmp_path / "repro")
    assert main(["prepare", "--rings", "--points", "20", "--perplexity", "12",
                 "--seed", "5", "--out", out]) == 0
    assert main(["train", "--arch", "ael", "--runs", "2", "--epochs", "3",
                 "--out", out]) == 0
    evaluate = ["evaluate", "--arch", "ael", "--gradient-map", "16x16",
                "--no-timing", "--out", out]
    assert main(evaluate) == 0
    first = (tmp_path / "repro" / "metrics-ael.csv").read_bytes()
    assert main(evaluate) == 0
    second = (tmp_path / "repro" / "metrics-ael.csv").read_bytes()
    ok = first == second
    _report(f"[{_verdict(ok)}] criterion 9: two evaluate invocations produced "
            f"{'byte-identical' if ok else 'DIFFERING'} metrics CSV "
            f"({len(first)} bytes, timing columns excluded)")
    assert ok


# ----------------------------------------------------------- criterion 10


def test_criterion_10_vael_degenerates_to_ael():
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(25):
        batch = int(rng.integers(2, 9))
        d = int(rng.integers(2, 7))
        x = rng.normal(size=(batch, d))
        x_hat = rng.normal(size=(batch, d))
        y_ref = rng.normal(size=(batch, 2))
        head = VaelHead(mu=rng.normal(size=(batch, 2)),
                        log_var=rng.uniform(-2, 2, size=(batch, 2)))
        alpha = float(rng.uniform(0.1, 3.0))
        y_sampled = reparameterize(head, np.zeros((batch, 2)))
        vael = loss_vael(x, x_hat, y_ref, y_sampled, head, alpha=alpha, beta=0.0)
        ael = loss_ael(x, x_hat, y_ref, head.mu, omega=alpha)
        worst = max(worst, abs(vael - ael))
    ok = worst <= 1e-12
    _report(f"[{_verdict(ok)}] criterion 10: max |vael(beta=0, eps=0) - "
            f"ael(omega=alpha)| = {worst:.2e} over 25 draws (require <= 1e-12)")
    assert worst <= 1e-12
