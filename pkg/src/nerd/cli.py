"""Command-line entry point.

Subcommands cover every workflow: `fit` (single-image MLP fitting and the
Bayer-only ablation), `train` (conditioned encoder+MLP training), `demosaic`
(classical and neural methods), `eval` (PSNR/SSIM tables), `gradcheck`
(finite-difference verification) and `describe` (architecture tables).

Exit codes: 0 success, 1 runtime failure, 2 usage error.  All file outputs
are written atomically.  The published hyperparameters are flag defaults,
never hardcoded: a desk-scale run and the reference configuration differ
only in flags.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig, load_manifest
from .encoder import EncoderConfig
from .errors import ConfigurationError, FormatError, NerdError
from .image import load_bayer_png, load_png, mosaic, save_png
from .metrics import psnr
from .model import NerdModel, describe_variant
from .atomic import atomic_write_text
from . import selfcheck, training

log = logging.getLogger("nerd")

FIT_VARIANTS = ("siren", "relu", "relu_pe", "nerd0")


def _out_dir(arg: str | None, default: str) -> Path:
    root = Path(os.environ.get("NERD_OUT_ROOT", "."))
    path = Path(arg) if arg else Path(default)
    if not path.is_absolute():
        path = root / path
    path.mkdir(parents=True, exist_ok=True)
    return path


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"{what} not found: {p}")
    return p


def _load_model_checkpoint(path: str, method: str) -> NerdModel:
    obj, meta = load_checkpoint(_require_file(path, "checkpoint"))
    if not isinstance(obj, NerdModel):
        raise ConfigurationError(f"{path}: checkpoint holds an unconditioned MLP, not a {method} model")
    if method == "nerd" and not obj.uses_skips:
        raise ConfigurationError(f"{path}: checkpoint is the no-skip variant; use --method nerd-ns")
    if method == "nerd-ns" and obj.uses_skips:
        raise ConfigurationError(f"{path}: checkpoint has skip connections; use --method nerd")
    return obj


def cmd_fit(args) -> int:
    src = _require_file(args.image, "input image")
    img = load_png(src)
    out = _out_dir(args.out, "fit_out")
    if args.variant == "nerd0":
        mlp, trace = training.fit_bayer_only(mosaic(img), iterations=args.iters,
                                             seed=args.seed, learning_rate=args.lr,
                                             log_interval=args.log_interval)
    else:
        mlp, trace = training.fit_image(img, variant=args.variant, iterations=args.iters,
                                        seed=args.seed, learning_rate=args.lr,
                                        log_interval=args.log_interval)
    atomic_write_text(out / "trace.csv", trace.to_csv())
    recon = training.reconstruct(mlp, img.height, img.width)
    save_png(recon, out / "recon.png")
    save_checkpoint(out / "model.nerd", mlp, kind=args.variant)
    final = psnr(recon, img)
    print(f"fit variant={args.variant} iters={args.iters} final_psnr={final:.2f} dB -> {out}")
    return 0


def cmd_train(args) -> int:
    manifest = load_manifest(_require_file(args.manifest, "manifest"))
    config = TrainConfig(learning_rate=args.lr, lr_decay=args.lr_decay,
                         iterations_per_epoch=args.iters_per_epoch,
                         batch_size=args.batch_size, patch_size=args.patch_size,
                         epochs=args.epochs, seed=args.seed,
                         coord_subsample=args.coord_subsample)
    encoder_cfg = EncoderConfig(base_channels=args.enc_channels,
                                res_blocks=args.enc_blocks,
                                out_channels=args.enc_out)
    out = _out_dir(args.out, "train_out")
    print("effective config: " + " ".join(f"{k}={v}" for k, v in config.to_dict().items()))
    print(f"encoder: base={encoder_cfg.base_channels} blocks={encoder_cfg.res_blocks} "
          f"out={encoder_cfg.out_channels} skips={not args.no_skips} hidden={args.mlp_hidden}")
    model, loss_log = training.train_nerd(manifest, config, encoder_cfg,
                                          skips=not args.no_skips,
                                          hidden_width=args.mlp_hidden,
                                          out_dir=out, max_steps=args.max_steps)
    atomic_write_text(out / "loss_log.csv", loss_log.to_csv())
    print(f"trained {len(loss_log.rows)} steps, final loss {loss_log.rows[-1][3]:.3e} -> {out}")
    return 0


def cmd_demosaic(args) -> int:
    src = _require_file(args.input, "input image")
    model = None
    if args.method in ("nerd", "nerd-ns"):
        if not args.checkpoint:
            raise ConfigurationError(f"--method {args.method} requires --checkpoint")
        model = _load_model_checkpoint(args.checkpoint, args.method)
    truth = None
    try:
        bayer = load_bayer_png(src)
    except FormatError:
        truth = load_png(src)  # round-trip mode: mosaic the RGB input first
        bayer = mosaic(truth)
    result = training.demosaic_with_method(bayer, args.method, model)
    save_png(result, args.output)
    if truth is not None:
        value = psnr(result, truth)
        shown = "inf" if math.isinf(value) else f"{value:.2f}"
        print(f"round-trip {args.method}: psnr={shown} dB")
    return 0


def cmd_eval(args) -> int:
    manifest = load_manifest(_require_file(args.manifest, "manifest"))
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise ConfigurationError("empty methods list; use --methods bilinear,malvar,...")
    model = None
    if any(m in ("nerd", "nerd-ns") for m in methods):
        if not args.checkpoint:
            raise ConfigurationError("neural methods require --checkpoint")
        model = _load_model_checkpoint(args.checkpoint, "nerd")
    report = training.evaluate(manifest, methods, model)
    import io
    buf = io.StringIO()
    report.write_csv(buf)
    atomic_write_text(args.out, buf.getvalue())
    for method in report.methods():
        mp, ms = report.mean(method)
        print(f"{method}: mean psnr={mp:.2f} dB ssim={ms:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    reports = selfcheck.run_suite(seed=args.seed, tolerance=args.tolerance)
    worst = 0.0
    failed = 0
    for r in reports:
        state = "ok" if r.passed else "FAIL"
        print(f"{r.label:<24} max_rel_err={r.max_rel_err:.3e}  {state}")
        worst = max(worst, r.max_rel_err)
        failed += 0 if r.passed else 1
    print(f"overall max relative error: {worst:.3e} (tolerance {args.tolerance:.0e})")
    return 0 if failed == 0 else 1


def cmd_describe(args) -> int:
    encoder_cfg = EncoderConfig(base_channels=args.enc_channels,
                                res_blocks=args.enc_blocks,
                                out_channels=args.enc_out)
    print(describe_variant(args.variant, encoder_cfg), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nerd",
                                     description="Neural-field demosaicking toolkit")
    parser.add_argument("--deterministic", action="store_true",
                        help="pin numeric libraries to one thread for bit-reproducible runs")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a coordinate MLP to one image")
    p.add_argument("image")
    p.add_argument("--variant", choices=FIT_VARIANTS, default="siren")
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--log-interval", type=int, default=50)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("train", help="train the conditioned demosaicking model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--lr-decay", type=float, default=0.95)
    p.add_argument("--iters-per-epoch", type=int, default=10000)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--batch-size", type=int, default=5)
    p.add_argument("--patch-size", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--coord-subsample", type=int, default=None)
    p.add_argument("--max-steps", type=int, default=None,
                   help="hard cap on optimizer steps (desk-scale runs)")
    p.add_argument("--enc-channels", type=int, default=64)
    p.add_argument("--enc-blocks", type=int, default=8)
    p.add_argument("--enc-out", type=int, default=128)
    p.add_argument("--mlp-hidden", type=int, default=256)
    p.add_argument("--no-skips", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("demosaic", help="demosaic a Bayer (grayscale) or RGB PNG")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--method", choices=training.METHODS, required=True)
    p.add_argument("--checkpoint", default=None)
    p.set_defaults(func=cmd_demosaic)

    p = sub.add_parser("eval", help="evaluate methods on a manifest's test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--methods", required=True, help="comma-separated: bilinear,malvar,nerd,nerd-ns")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--out", default="metrics.csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every operation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("describe", help="layer shapes and parameter counts")
    p.add_argument("--variant", choices=("nerd", "nerd-ns", "siren", "relu", "relu_pe"),
                   default="nerd")
    p.add_argument("--enc-channels", type=int, default=64)
    p.add_argument("--enc-blocks", type=int, default=8)
    p.add_argument("--enc-out", type=int, default=128)
    p.set_defaults(func=cmd_describe)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.deterministic:
        from threadpoolctl import threadpool_limits
        threadpool_limits(limits=1)
        np.seterr(all="raise", under="ignore")
    try:
        return args.func(args)
    except (ConfigurationError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NerdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
