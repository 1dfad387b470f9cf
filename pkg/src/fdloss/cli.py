"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .core import CameraRig, FDLossError, LossWeights, gray_of, validate_disparity
from .filler import fill_disparity
from .grad import gradient_check, loss_and_grad
from .losses import PreparedPair
from .metrics import Sample, bin_metrics, depth_metrics, disp_to_depth
from .optimize import OptimizerConfig, evaluate_run, optimize_disparity
from .scenes import DATASETS, FIXTURES, fixture, render_stereo, sample_rotation, with_seed
from .texture import DEFAULT_THRESHOLD, texture_mask, texturedness
from .warp import StereoPair

log = logging.getLogger("fdloss")

GRAD_TOLERANCE = 1e-2
TARGET_JITTER = 0.05


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"input file not found: {path}")
    return p


def _out_file(path: str) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _out_dir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _weights(args) -> LossWeights:
    return LossWeights(args.alpha_ap, args.alpha_ds, args.alpha_lr, args.alpha_fd, args.ssim_alpha)


def _add_weight_flags(p, alpha_fd_required: bool = False) -> None:
    defaults = LossWeights()
    p.add_argument("--alpha-ap", type=float, default=defaults.alpha_ap)
    p.add_argument("--alpha-ds", type=float, default=defaults.alpha_ds)
    p.add_argument("--alpha-lr", type=float, default=defaults.alpha_lr)
    if alpha_fd_required:
        p.add_argument("--alpha-fd", type=float, required=True)
    else:
        p.add_argument("--alpha-fd", type=float, default=defaults.alpha_fd)
    p.add_argument("--ssim-alpha", type=float, default=defaults.ssim_alpha)


def _add_rig_flags(p, required: bool = False) -> None:
    rig = CameraRig()
    p.add_argument("--baseline", type=float, required=required, default=None if required else rig.baseline_m)
    p.add_argument("--focal", type=float, required=required, default=None if required else rig.focal_px)
    p.add_argument("--min-depth", type=float, default=rig.depth_min_m)
    p.add_argument("--max-depth", type=float, default=rig.depth_max_m)


def _rig(args) -> CameraRig:
    return CameraRig(args.baseline, args.focal, args.min_depth, args.max_depth)


def _read_disp(path) -> np.ndarray:
    return validate_disparity(io.read_pfm(_existing(path)))


def _read_pair(left, right) -> StereoPair:
    return StereoPair(io.read_image(_existing(left)), io.read_image(_existing(right)))


# -- subcommands ------------------------------------------------------------


def cmd_mask(args) -> None:
    img = io.read_image(_existing(args.image))
    mask = texture_mask(gray_of(img), args.threshold)
    io.write_pgm_ppm(mask.astype(np.float64), _out_file(args.output))
    print(f"texturedness {texturedness(mask):.6f}")


def cmd_fill(args) -> None:
    disp = _read_disp(args.disparity)
    img = io.read_image(_existing(args.image))
    filled, _ = fill_disparity(disp, img, args.threshold)
    io.write_pfm(filled, _out_file(args.output))


def cmd_loss(args) -> None:
    pair = _read_pair(args.left, args.right)
    dl, dr = _read_disp(args.d_left), _read_disp(args.d_right)
    breakdown = PreparedPair(pair).loss(dl, dr, _weights(args))
    io.write_csv(breakdown, _out_file(args.output))
    print(f"total {breakdown.total:.17g}")


def cmd_grad_check(args) -> int:
    pair = _read_pair(args.left, args.right)
    dl, dr = _read_disp(args.d_left), _read_disp(args.d_right)
    w = _weights(args)
    prep = PreparedPair(pair)
    rng = np.random.default_rng(args.seed)
    # targets frozen from a jittered copy keep the filled-disparity L1 term off its kink
    targets = prep.fill_targets(
        dl + rng.uniform(-TARGET_JITTER, TARGET_JITTER, dl.shape),
        dr + rng.uniform(-TARGET_JITTER, TARGET_JITTER, dr.shape),
    )
    _, grads = loss_and_grad(prep, dl, dr, w, targets)
    rows = []
    worst = 0.0
    checks = (
        ("left", lambda x: prep.loss(x, dr, w, targets).total, dl, grads.d_dleft),
        ("right", lambda x: prep.loss(dl, x, w, targets).total, dr, grads.d_dright),
    )
    for name, fun, x, analytic in checks:
        chk = gradient_check(fun, x, analytic, args.samples, rng, args.step)
        for (i, j), a, n, e in zip(chk.pixels, chk.analytic, chk.numeric, chk.rel_error):
            rows.append((name, int(i), int(j), a, n, e))
        worst = max(worst, chk.max_rel_error)
    io.write_rows(("map", "row", "col", "analytic", "numeric", "rel_error"), rows, _out_file(args.output))
    print(f"max relative error {worst:.6e} over {len(rows)} pixels")
    if not rows:
        print("no kink-free pixels found; perturb the disparity maps", file=sys.stderr)
        return 2
    if len(rows) < 2 * args.samples:
        log.warning("only %d kink-free pixels found", len(rows))
    if worst > args.tolerance:
        print(f"gradient check failed: {worst:.3e} > {args.tolerance:.3e}", file=sys.stderr)
        return 2
    return 0


def cmd_optimize(args) -> None:
    if bool(args.fixture) == bool(args.left or args.right):
        raise UsageError("give either --fixture or both --left and --right")
    valid = None
    if args.fixture:
        scene = render_stereo(fixture(args.fixture, args.width, args.height, args.seed))
        pair, truth, valid = scene.pair, scene.disparity, scene.visible
    else:
        if not (args.left and args.right):
            raise UsageError("--left and --right must be given together")
        pair = _read_pair(args.left, args.right)
        truth = _read_disp(args.truth) if args.truth else None
    cfg = OptimizerConfig(args.steps, args.lr, init_disparity=args.init_disparity, seed=args.seed)
    trace = optimize_disparity(pair, _weights(args), cfg)
    out = _out_dir(args.output)
    io.write_pfm(trace.d_left, out / "d_left.pfm")
    io.write_pfm(trace.d_right, out / "d_right.pfm")
    io.write_csv(trace, out / "trace.csv")
    if truth is not None:
        mask = texture_mask(gray_of(pair.left))
        evaluation = evaluate_run(trace, truth, _rig(args), mask, valid)
        io.write_csv(evaluation, out / "metrics.csv")
        for name, m in evaluation.regions().items():
            if m is not None:
                print(f"{name:8s} abs_rel {m.abs_rel:.6f} rmse {m.rmse:.6f} pixels {m.pixel_count}")
    print(f"final loss {trace.totals[-1]:.17g}")


def cmd_metrics(args) -> None:
    rig = _rig(args)
    pred = _read_disp(args.disparity)
    truth = _read_disp(args.truth)
    valid = None
    if args.mask:
        valid = io.read_pgm_ppm(_existing(args.mask))[:, :, 0] > 0.5
    report = depth_metrics(disp_to_depth(pred, rig), disp_to_depth(truth, rig), valid)
    io.write_csv(report, _out_file(args.output))
    print(f"abs_rel {report.abs_rel:.6f} rmse {report.rmse:.6f}")


MANIFEST_COVARIATES = {"texturedness": "texturedness", "pitch": "pitch_deg", "roll": "roll_deg"}


def cmd_bin(args) -> None:
    try:
        edges = [float(e) for e in args.edges.split(",")]
    except ValueError:
        raise UsageError(f"--edges must be comma-separated numbers, got {args.edges!r}") from None
    manifest = _existing(args.manifest)
    base = manifest.parent
    rig = _rig(args)
    column = MANIFEST_COVARIATES[args.covariate]
    samples = []
    for row in io.read_csv(manifest):
        if column not in row:
            raise UsageError(f"manifest lacks column {column!r}")
        pred = _read_disp(base / row["pred"])
        truth = _read_disp(base / row["true"])
        valid = None
        if row.get("mask"):
            valid = io.read_pgm_ppm(_existing(base / row["mask"]))[:, :, 0] > 0.5
        samples.append(Sample(float(row[column]), disp_to_depth(pred, rig), disp_to_depth(truth, rig), valid))
    report = bin_metrics(samples, edges, args.covariate)
    io.write_csv(report, _out_file(args.output))
    print("counts " + " ".join(str(c) for c in report.counts))


def cmd_gen(args) -> None:
    out = _out_dir(args.output)
    spec = fixture(args.fixture, args.width, args.height, args.seed)
    rng = np.random.default_rng(args.seed)
    rows = []
    for k in range(args.count):
        rotation = sample_rotation(args.dataset, args.sigma, rng)
        scene = render_stereo(with_seed(spec, args.seed + k), rotation)
        ext = "pgm" if scene.pair.left.shape[2] == 1 else "ppm"
        names = (f"left_{k:04d}.{ext}", f"right_{k:04d}.{ext}", f"disp_{k:04d}.pfm")
        io.write_pgm_ppm(scene.pair.left, out / names[0])
        io.write_pgm_ppm(scene.pair.right, out / names[1])
        io.write_pfm(scene.disparity, out / names[2])
        meta = scene.metadata()
        rows.append((k,) + names + (meta["pitch_deg"], meta["roll_deg"], meta["texturedness"]))
    io.write_rows(
        ("index", "left", "right", "disparity", "pitch_deg", "roll_deg", "texturedness"),
        rows,
        out / "metadata.csv",
    )
    print(f"wrote {args.count} samples to {out}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fdloss", description="Filled disparity loss toolkit for self-supervised stereo.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mask", help="textured-pixel mask of an image")
    p.add_argument("image")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("fill", help="fill untextured regions of a disparity map")
    p.add_argument("disparity")
    p.add_argument("image")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.set_defaults(func=cmd_fill)

    p = sub.add_parser("loss", help="multi-scale loss breakdown")
    for name in ("left", "right", "d_left", "d_right"):
        p.add_argument(name)
    _add_weight_flags(p, alpha_fd_required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("grad-check", help="analytic vs finite-difference gradients")
    for name in ("left", "right", "d_left", "d_right"):
        p.add_argument(name)
    _add_weight_flags(p)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--tolerance", type=float, default=GRAD_TOLERANCE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("optimize", help="direct per-pixel disparity optimisation")
    p.add_argument("--fixture", choices=sorted(FIXTURES))
    p.add_argument("--left")
    p.add_argument("--right")
    p.add_argument("--truth", help="ground-truth left disparity (PFM) for metrics")
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=128)
    _add_weight_flags(p, alpha_fd_required=True)
    defaults = OptimizerConfig()
    p.add_argument("--steps", type=int, default=defaults.steps)
    p.add_argument("--lr", type=float, default=defaults.learning_rate)
    p.add_argument("--init-disparity", type=float, default=defaults.init_disparity)
    p.add_argument("--seed", type=int, default=0)
    _add_rig_flags(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("metrics", help="depth metrics of a disparity map against ground truth")
    p.add_argument("disparity")
    p.add_argument("truth")
    p.add_argument("--mask", help="PGM; only pixels > 0.5 are evaluated")
    _add_rig_flags(p, required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("bin", help="metrics binned by a per-sample covariate")
    p.add_argument("--covariate", required=True, choices=sorted(MANIFEST_COVARIATES))
    p.add_argument("--edges", required=True)
    p.add_argument("manifest")
    _add_rig_flags(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_bin)

    p = sub.add_parser("gen", help="generate synthetic stereo samples")
    p.add_argument("--fixture", required=True, choices=sorted(FIXTURES))
    p.add_argument("--dataset", required=True, choices=DATASETS)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=10.0)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
        return args.func(args) or 0
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (FDLossError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
