"""End-to-end acceptance checks.

Each criterion prints one ``[PASS]``/``[FAIL]`` line. Run with ``pytest -s`` or
directly with ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import contextlib
import io as _stdio
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from fdloss import io
from fdloss.cli import main as cli_main
from fdloss.core import CameraRig, LossWeights
from fdloss.filler import fill_disparity, propagate
from fdloss.grad import gradient_check, grad_fd, grad_lr, grad_recon, grad_smooth, grad_total
from fdloss.losses import (
    PreparedPair,
    filled_disparity_loss,
    image_recon_loss,
    lr_consistency_loss,
    smoothness_loss,
    total_loss,
)
from fdloss.metrics import Sample, bin_metrics, depth_metrics, disp_to_depth
from fdloss.optimize import OptimizerConfig, evaluate_run, optimize_disparity
from fdloss.scenes import RotationSample, fixture, render_stereo, sample_rotation, untextured_wall_spec
from fdloss.texture import texture_mask
from fdloss.warp import LEFT, RIGHT, StereoPair, warp

sys.path.insert(0, str(Path(__file__).parent))
from oracles import depth_metrics_naive, propagate_naive  # noqa: E402

RIG = CameraRig()


def report(number: int, title: str, ok: bool, detail: str) -> bool:
    print(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}", flush=True)
    return ok


def _region_abs_rel(scene, alpha_fd: float, cfg: OptimizerConfig, prep=None):
    trace = optimize_disparity(scene.pair, LossWeights(alpha_fd=alpha_fd), cfg, prepared=prep)
    mask = texture_mask(scene.pair.left)
    return evaluate_run(trace, scene.disparity, RIG, mask, scene.visible)


def check_wall_rescue() -> bool:
    scene = render_stereo(fixture("untextured_wall", 256, 128))
    cfg = OptimizerConfig(steps=1000)
    start = time.perf_counter()
    base = _region_abs_rel(scene, 0.0, cfg).inactive.abs_rel
    mid = time.perf_counter()
    filled = _region_abs_rel(scene, 0.5, cfg).inactive.abs_rel
    slowest = max(mid - start, time.perf_counter() - mid)
    ratio = filled / base
    ok = ratio <= 0.5 and slowest <= 300
    return report(
        1,
        "untextured wall rescue",
        ok,
        f"inactive Abs Rel {base:.4f} -> {filled:.4f} (ratio {ratio:.3f} <= 0.5), slowest run {slowest:.0f}s <= 300s",
    )


def check_textured_preservation() -> bool:
    scene = render_stereo(fixture("textured_shift", 256, 128))
    cfg = OptimizerConfig(steps=1000)
    base = _region_abs_rel(scene, 0.0, cfg).active.abs_rel
    filled = _region_abs_rel(scene, 0.5, cfg).active.abs_rel
    rel = abs(filled - base) / base
    return report(
        2,
        "textured preservation",
        rel <= 0.10,
        f"textured Abs Rel {base:.5f} vs {filled:.5f} (relative difference {rel:.3f} <= 0.10)",
    )


SWEEP_FRACTIONS = np.linspace(0.10, 0.85, 20)
SWEEP_BINS = 4


def _inversions(values) -> int:
    return sum(1 for a, b in zip(values, values[1:]) if b > a)


def check_texturedness_trend() -> bool:
    cfg = OptimizerConfig(steps=600)
    per_alpha = {0.0: [], 0.5: []}
    for k, fraction in enumerate(SWEEP_FRACTIONS):
        scene = render_stereo(untextured_wall_spec(fraction, 128, 64, seed=k))
        mask = texture_mask(scene.pair.left)
        region = scene.visible & ~mask
        prep = PreparedPair(scene.pair)
        for alpha in per_alpha:
            trace = optimize_disparity(scene.pair, LossWeights(alpha_fd=alpha), cfg, prepared=prep)
            per_alpha[alpha].append(
                Sample(mask.mean(), disp_to_depth(trace.d_left, RIG), disp_to_depth(scene.disparity, RIG), region)
            )
    cov = [s.covariate for s in per_alpha[0.0]]
    edges = np.linspace(min(cov), max(cov), SWEEP_BINS + 1)
    reports = {a: bin_metrics(samples, edges, "texturedness") for a, samples in per_alpha.items()}
    gaps = [b0.mean_abs_rel - b5.mean_abs_rel for b0, b5 in zip(reports[0.0].bins, reports[0.5].bins)]
    counts = reports[0.0].counts
    ok = (
        len(SWEEP_FRACTIONS) >= 20
        and all(c > 0 for c in counts)
        and gaps[0] == max(gaps)
        and _inversions(gaps) <= 1
    )
    shown = ", ".join(f"{g:.3f}" for g in gaps)
    return report(
        3,
        "texturedness trend",
        ok,
        f"{len(SWEEP_FRACTIONS)} scenes, gap per texturedness bin (low -> high) [{shown}], "
        f"counts {list(counts)}, inversions {_inversions(gaps)} <= 1",
    )


def check_filler_oracle() -> bool:
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(200):
        h, w = rng.integers(1, 17, size=2)
        mask = rng.random((h, w)) < rng.uniform(0.02, 0.9)
        mask[rng.integers(h), rng.integers(w)] = True
        d = rng.uniform(0, 64, (h, w))
        res = propagate(d, mask)
        expected, iterations = propagate_naive(d, mask)
        if not (np.array_equal(res.filled, expected) and res.iterations == iterations):
            mismatches += 1
    return report(4, "filler oracle equivalence", mismatches == 0, f"{200 - mismatches}/200 grids match exactly")


def _random_instance(seed):
    rng = np.random.default_rng(seed)
    return rng, rng.random((12, 16, 3)), rng.random((12, 16, 3)), rng.uniform(0.3, 4, (12, 16)), rng.uniform(0.3, 4, (12, 16))


def check_gradients() -> bool:
    rng, left, right, dl, dr = _random_instance(77)
    fill_target, _ = fill_disparity(dl + rng.uniform(-0.05, 0.05, dl.shape), left)
    g_lr_self, g_lr_other = grad_lr(dl, dr, LEFT)
    g_rl_self, g_rl_other = grad_lr(dr, dl, RIGHT)
    terms = {
        "recon_left": (lambda x: image_recon_loss(left, warp(right, x, LEFT)), dl, grad_recon(left, right, dl, LEFT)),
        "recon_right": (lambda x: image_recon_loss(right, warp(left, x, RIGHT)), dr, grad_recon(right, left, dr, RIGHT)),
        "smooth": (lambda x: smoothness_loss(x, left), dl, grad_smooth(dl, left)),
        "lr_self_left": (lambda x: lr_consistency_loss(x, dr, LEFT), dl, g_lr_self),
        "lr_other_left": (lambda x: lr_consistency_loss(dl, x, LEFT), dr, g_lr_other),
        "lr_self_right": (lambda x: lr_consistency_loss(x, dl, RIGHT), dr, g_rl_self),
        "lr_other_right": (lambda x: lr_consistency_loss(dr, x, RIGHT), dl, g_rl_other),
        "filled": (lambda x: filled_disparity_loss(x, fill_target), dl, grad_fd(dl, fill_target)),
    }
    worst_term = 0.0
    fewest = math.inf
    for fun, x, analytic in terms.values():
        chk = gradient_check(fun, x, analytic, 50, rng)
        fewest = min(fewest, len(chk.pixels))
        worst_term = max(worst_term, chk.max_rel_error)

    pair = StereoPair(left, right)
    w = LossWeights()
    prep = PreparedPair(pair)
    targets = prep.fill_targets(dl + rng.uniform(-0.05, 0.05, dl.shape), dr + rng.uniform(-0.05, 0.05, dr.shape))
    g = grad_total(pair, dl, dr, w, targets=targets)
    worst_total = 0.0
    for fun, x, analytic in (
        (lambda x: total_loss(pair, x, dr, w, targets=targets).total, dl, g.d_dleft),
        (lambda x: total_loss(pair, dl, x, w, targets=targets).total, dr, g.d_dright),
    ):
        chk = gradient_check(fun, x, analytic, 50, rng)
        fewest = min(fewest, len(chk.pixels))
        worst_total = max(worst_total, chk.max_rel_error)
    ok = fewest >= 50 and worst_term < 1e-3 and worst_total < 1e-2
    return report(
        5,
        "gradient correctness",
        ok,
        f"{len(terms)} terms, max rel error {worst_term:.2e} < 1e-3; total {worst_total:.2e} < 1e-2; "
        f">= {fewest} pixels per check",
    )


def check_metrics() -> bool:
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(100):
        pred, true = rng.uniform(0.5, 80, (16, 16)), rng.uniform(0.5, 80, (16, 16))
        got = np.array(depth_metrics(pred, true).as_tuple()[:7])
        ref = np.array(depth_metrics_naive(pred, true))
        worst = max(worst, float(np.max(np.abs(got - ref) / np.maximum(np.abs(ref), 1.0))))
    two = depth_metrics(np.array([2.0, 8.0]), np.array([4.0, 4.0]))
    exact = two.abs_rel == 0.75 and two.rmse == math.sqrt(10) and two.delta_1 == 0.0
    return report(
        6,
        "metric formula fidelity",
        worst <= 1e-12 and exact,
        f"100 pairs max deviation {worst:.1e} <= 1e-12; 2-pixel case abs_rel {two.abs_rel}, "
        f"rmse {two.rmse:.15f}, delta_1 {two.delta_1}",
    )


def check_identities() -> bool:
    rng = np.random.default_rng(5)
    img = rng.random((16, 16, 3))
    results = {}
    results["warp(I, 0) = I"] = np.array_equal(warp(img, np.zeros((16, 16)), LEFT), img) and np.array_equal(
        warp(img, np.zeros((16, 16)), RIGHT), img
    )
    results["recon(I, I) = 0"] = abs(image_recon_loss(img, img)) < 1e-12
    results["smooth(const) = 0"] = smoothness_loss(np.full((16, 16), 3.0), img) == 0.0
    gray = rng.random((16, 16))
    d = rng.uniform(0, 5, (16, 16))
    filled, mask = fill_disparity(d, gray, threshold=0.0)
    results["fd(fully textured) = 0"] = bool(mask.all()) and filled_disparity_loss(d, filled) == 0.0
    nested = True
    for _ in range(50):
        m = depth_metrics(rng.uniform(0.1, 80, 64), rng.uniform(0.1, 80, 64))
        nested &= m.delta_1 <= m.delta_2 <= m.delta_3
    results["delta nesting"] = nested
    results["D(4) = 5 m"] = float(disp_to_depth(4.0, CameraRig(0.2, 100.0))) == 5.0
    results["D(0) = 80 m"] = float(disp_to_depth(0.0, CameraRig(0.2, 100.0))) == 80.0
    failed = [k for k, v in results.items() if not v]
    return report(
        7,
        "identity/zero suite",
        not failed,
        f"{len(results) - len(failed)}/{len(results)} hold" + (f"; failed: {', '.join(failed)}" if failed else ""),
    )


def check_rotation_sampling() -> bool:
    rng = np.random.default_rng(10_000)
    draws = np.array([(s.pitch_deg, s.roll_deg) for s in (sample_rotation("PR", 10.0, rng) for _ in range(10_000))])
    std = draws.std(axis=0, ddof=1)
    nominal = all(sample_rotation("N", 10.0, rng) == RotationSample(0.0, 0.0) for _ in range(1000))
    ok = bool(np.all(np.abs(std - 10.0) <= 0.5)) and nominal
    return report(
        8,
        "rotation sampling",
        ok,
        f"PR std pitch {std[0]:.3f}, roll {std[1]:.3f} (within 5% of 10); N always (0, 0): {nominal}",
    )


def _tree(root: Path) -> dict[str, bytes]:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _cli_session(root: Path) -> None:
    def run(*argv):
        with contextlib.redirect_stdout(_stdio.StringIO()):
            code = cli_main([str(a) for a in argv])
        if code != 0:
            raise RuntimeError(f"fdloss {' '.join(map(str, argv))} exited {code}")

    data = root / "data"
    run("gen", "--fixture", "untextured_wall", "--dataset", "PR", "--count", "5", "--seed", "7",
        "--width", "64", "--height", "32", "-o", data)
    left, right, disp = data / "left_0000.pgm", data / "right_0000.pgm", data / "disp_0000.pfm"
    run("mask", left, "-o", root / "mask.pgm")
    run("fill", disp, left, "-o", root / "fill.pfm")
    run("loss", left, right, disp, disp, "--alpha-fd", "0.5", "-o", root / "loss.csv")
    noisy = io.read_pfm(disp).astype(np.float64) + np.random.default_rng(1).uniform(0, 1, (32, 64))
    io.write_pfm(noisy, root / "noisy.pfm")
    run("grad-check", left, right, root / "noisy.pfm", root / "noisy.pfm", "--samples", "10", "-o", root / "grad.csv")
    run("optimize", "--left", left, "--right", right, "--truth", disp, "--alpha-fd", "0.5", "--steps", "20",
        "--seed", "3", "-o", root / "run")
    run("metrics", root / "run" / "d_left.pfm", disp, "--baseline", "0.2", "--focal", "100", "-o", root / "metrics.csv")
    io.write_rows(
        ("pred", "true", "texturedness", "pitch_deg", "roll_deg"),
        [("run/d_left.pfm", "data/disp_0000.pfm", 0.3, 0.0, 0.0), ("fill.pfm", "data/disp_0000.pfm", 0.6, 0.0, 0.0)],
        root / "manifest.csv",
    )
    run("bin", "--covariate", "texturedness", "--edges", "0,0.5,1", root / "manifest.csv", "-o", root / "bin.csv")


def check_round_trip_and_determinism() -> bool:
    rng = np.random.default_rng(3)
    exact = True
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        for shape in ((1, 1), (17, 31), (8, 8, 3), (128, 256)):
            field = (rng.standard_normal(shape) * 10.0 ** rng.integers(-30, 30, shape)).astype(np.float32)
            io.write_pfm(field, tmp / "f.pfm")
            exact &= io.read_pfm(tmp / "f.pfm").tobytes() == field.tobytes()
        _cli_session(tmp / "a")
        _cli_session(tmp / "b")
        a, b = _tree(tmp / "a"), _tree(tmp / "b")
    same = a == b
    differing = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    return report(
        9,
        "round trip and determinism",
        exact and same,
        f"PFM bit-exact: {exact}; {len(a)} CLI outputs from 8 subcommands byte-identical: {same}"
        + (f" (differ: {differing})" if differing else ""),
    )


CHECKS = {
    1: check_wall_rescue,
    2: check_textured_preservation,
    3: check_texturedness_trend,
    4: check_filler_oracle,
    5: check_gradients,
    6: check_metrics,
    7: check_identities,
    8: check_rotation_sampling,
    9: check_round_trip_and_determinism,
}


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CHECKS))
def test_criterion(number):
    assert CHECKS[number]()


if __name__ == "__main__":
    outcomes = [CHECKS[n]() for n in sorted(CHECKS)]
    print(f"{sum(outcomes)}/{len(outcomes)} criteria passed")
    sys.exit(0 if all(outcomes) else 1)
