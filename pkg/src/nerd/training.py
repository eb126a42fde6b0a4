"""Training loops: single-image fitting, conditioned training, evaluation.

All loops drive a single `numpy` Generator seeded from the config, record
losses to in-memory logs (persisted as CSV by the callers/CLI), and abort
with a diagnostic on non-finite losses.  The conditioned loop supervises
against full RGB ground truth at every queried pixel; only the Bayer-only
ablation trains on the mosaic itself.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .baselines import bilinear_demosaic, malvar_demosaic
from .checkpoint import save_checkpoint
from .config import DatasetManifest, TrainConfig, lr_at_epoch
from .encoder import EncoderConfig
from .errors import ConfigurationError, TrainingError
from .image import (BayerImage, RgbImage, cfa_channel_map, center_crop, coord_grid,
                    crop_random, load_png, mosaic, resize_shorter_side)
from .metrics import MetricReport, psnr, ssim
from .model import NerdModel, build_nerd_model
from .optim import Adam
from .siren import MlpConfig, SirenMlp

log = logging.getLogger(__name__)

EVAL_CROP = 200  # evaluation protocol: resize shorter side, center crop


@dataclass
class FitTrace:
    """(iteration, loss, psnr_db) samples from a fitting run."""

    rows: list[tuple[int, float, float]] = field(default_factory=list)

    def add(self, iteration: int, loss: float, psnr_db: float) -> None:
        self.rows.append((iteration, loss, psnr_db))

    def final_psnr(self) -> float:
        return self.rows[-1][2] if self.rows else math.nan

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["iteration", "loss", "psnr_db"])
        for it, lo, ps in self.rows:
            writer.writerow([it, f"{lo:.8e}", f"{ps:.4f}" if math.isfinite(ps) else "inf"])
        return buf.getvalue()


def _check_finite_loss(value: float, iteration: int) -> None:
    if not math.isfinite(value):
        raise TrainingError(f"non-finite loss {value} at iteration {iteration}")


def fit_image(img: RgbImage, variant: str = "siren", iterations: int = 1000,
              seed: int = 0, learning_rate: float = 1e-4,
              log_interval: int = 50) -> tuple[SirenMlp, FitTrace]:
    """Fit an unconditioned coordinate MLP to one RGB image (full-batch MSE)."""
    cfg = MlpConfig(variant=variant)
    mlp = SirenMlp(cfg, np.random.default_rng(seed))
    coords = Tensor._wrap(coord_grid(img.height, img.width), False)
    target = Tensor._wrap(np.ascontiguousarray(
        img.data.reshape(3, -1).T.astype(np.float32)), False)
    opt = Adam(mlp.parameters(), learning_rate=learning_rate)
    trace = FitTrace()
    last_pred = None
    for it in range(1, iterations + 1):
        with Tape() as tape:
            pred = mlp.forward(coords)
            loss = ad.mse_loss(pred, target)
        value = loss.item()
        _check_finite_loss(value, it)
        tape.backward(loss)
        opt.step()
        opt.zero_grad()
        last_pred = pred.data
        if it % log_interval == 0 or it == iterations:
            trace.add(it, value, _pred_psnr(last_pred, img))
    return mlp, trace


def _pred_psnr(pred_rows: np.ndarray, img: RgbImage) -> float:
    rgb = np.clip(pred_rows.T.reshape(3, img.height, img.width), 0.0, 1.0)
    return psnr(RgbImage(rgb.astype(np.float32)), img)


def reconstruct(mlp: SirenMlp, height: int, width: int) -> RgbImage:
    """Render an unconditioned MLP over the full coordinate grid."""
    pred = mlp.forward(Tensor._wrap(coord_grid(height, width), False))
    rgb = np.clip(pred.data.T.reshape(3, height, width), 0.0, 1.0)
    return RgbImage(rgb.astype(np.float32))


def fit_bayer_only(bayer: BayerImage, iterations: int = 1000, seed: int = 0,
                   learning_rate: float = 1e-4, log_interval: int = 50) -> tuple[SirenMlp, FitTrace]:
    """Self-supervised SIREN on the mosaic: each pixel supervises only its
    observed channel.  Demonstrates the spatial-inconsistency failure of
    decoding RGB from the Bayer plane without an encoder prior."""
    mlp = SirenMlp(MlpConfig(variant="siren"), np.random.default_rng(seed))
    h, w = bayer.height, bayer.width
    coords = Tensor._wrap(coord_grid(h, w), False)
    observed = Tensor._wrap(bayer.data.reshape(-1).astype(np.float32), False)
    channel_idx = cfa_channel_map(h, w).reshape(-1)
    opt = Adam(mlp.parameters(), learning_rate=learning_rate)
    trace = FitTrace()
    for it in range(1, iterations + 1):
        with Tape() as tape:
            pred = mlp.forward(coords)
            picked = ad.take_per_row(pred, channel_idx)
            loss = ad.mse_loss(picked, observed)
        value = loss.item()
        _check_finite_loss(value, it)
        tape.backward(loss)
        opt.step()
        opt.zero_grad()
        if it % log_interval == 0 or it == iterations:
            observed_psnr = math.inf if value == 0 else -10.0 * math.log10(value)
            trace.add(it, value, observed_psnr)
    return mlp, trace


@dataclass
class LossLog:
    """(step, epoch, lr, loss) rows from conditioned training."""

    rows: list[tuple[int, int, float, float]] = field(default_factory=list)

    def add(self, step: int, epoch: int, lr: float, loss: float) -> None:
        self.rows.append((step, epoch, lr, loss))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["step", "epoch", "lr", "loss"])
        for s, e, lr, lo in self.rows:
            writer.writerow([s, e, f"{lr:.8e}", f"{lo:.8e}"])
        return buf.getvalue()


def _load_train_images(manifest: DatasetManifest, patch: int) -> list[RgbImage]:
    if not manifest.train:
        raise ConfigurationError("manifest has no train images")
    images = []
    for p in manifest.train:
        img = load_png(p)
        if img.height < patch or img.width < patch:
            raise ConfigurationError(f"{p}: image {img.height}x{img.width} smaller than patch {patch}")
        images.append(img)
    return images


def train_nerd(manifest: DatasetManifest, config: TrainConfig,
               encoder_cfg: EncoderConfig | None = None, skips: bool = True,
               hidden_width: int = 256, out_dir: Path | None = None,
               model: NerdModel | None = None,
               max_steps: int | None = None) -> tuple[NerdModel, LossLog]:
    """Joint encoder+MLP training on random even-aligned crops.

    Per step: sample `batch_size` training images with replacement, crop,
    mosaic, encode, query pixels (all, or `coord_subsample` of them per
    patch), take the MSE against ground-truth RGB, and apply one Adam
    update to all parameters.  Checkpoints are written per epoch when
    `out_dir` is given.
    """
    encoder_cfg = encoder_cfg or EncoderConfig()
    images = _load_train_images(manifest, config.patch_size)
    rng = np.random.default_rng(config.seed)
    if model is None:
        model = build_nerd_model(encoder_cfg, seed=config.seed, skips=skips,
                                 hidden_width=hidden_width)
    opt = Adam(model.parameters(), learning_rate=config.learning_rate)
    ps = config.patch_size
    grid = coord_grid(ps, ps)
    n_pixels = ps * ps
    per_patch = min(config.coord_subsample or n_pixels, n_pixels)
    loss_log = LossLog()
    total_steps = config.epochs * config.iterations_per_epoch
    if max_steps is not None:
        total_steps = min(total_steps, max_steps)

    for step in range(1, total_steps + 1):
        epoch = (step - 1) // config.iterations_per_epoch
        if (step - 1) % config.iterations_per_epoch == 0:
            opt.set_learning_rate(lr_at_epoch(config, epoch))

        planes = np.empty((config.batch_size, ps, ps), dtype=np.float32)
        targets = np.empty((config.batch_size * per_patch, 3), dtype=np.float32)
        coords = np.empty((config.batch_size * per_patch, 2), dtype=np.float32)
        centers = np.empty((config.batch_size * per_patch, 3), dtype=np.intp)
        for b in range(config.batch_size):
            patch = crop_random(images[int(rng.integers(len(images)))], ps, rng)
            planes[b] = mosaic(patch).data
            if per_patch == n_pixels:
                flat = np.arange(n_pixels)
            else:
                flat = rng.choice(n_pixels, size=per_patch, replace=False)
            sl = slice(b * per_patch, (b + 1) * per_patch)
            rows, cols = np.divmod(flat, ps)
            centers[sl, 0] = b
            centers[sl, 1] = rows
            centers[sl, 2] = cols
            coords[sl] = grid[flat]
            targets[sl] = patch.data[:, rows, cols].T

        with Tape() as tape:
            feats = model.encode(planes)
            pred = model.query(feats, coords, centers)
            loss = ad.mse_loss(pred, Tensor._wrap(targets, False))
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingError(f"non-finite loss {value} at step {step} (epoch {epoch})")
        tape.backward(loss)
        opt.step()
        opt.zero_grad()
        loss_log.add(step, epoch, opt.learning_rate, value)

        if out_dir is not None and step % config.iterations_per_epoch == 0:
            save_checkpoint(Path(out_dir) / f"ckpt_epoch{epoch}.nerd", model,
                            kind="nerd" if skips else "nerd-ns", training_step=step)

    if out_dir is not None:
        save_checkpoint(Path(out_dir) / "model.nerd", model,
                        kind="nerd" if skips else "nerd-ns", training_step=total_steps)
    return model, loss_log


METHODS = ("bilinear", "malvar", "nerd", "nerd-ns")


def demosaic_with_method(bayer: BayerImage, method: str, model: NerdModel | None = None) -> RgbImage:
    if method == "bilinear":
        return bilinear_demosaic(bayer)
    if method == "malvar":
        return malvar_demosaic(bayer)
    if method in ("nerd", "nerd-ns"):
        if model is None:
            raise ConfigurationError(f"method {method!r} requires a checkpoint")
        return model.demosaic(bayer)
    raise ConfigurationError(f"unknown method {method!r}, expected one of {METHODS}")


def prepare_eval_image(path) -> RgbImage:
    """Evaluation protocol: bicubic resize of the shorter side to 200, then
    an even-aligned center crop.  The source protocol leaves the resize
    filter and crop anchor unspecified; this choice is documented so the
    published-table comparison carries that caveat."""
    img = load_png(path)
    if img.height == EVAL_CROP and img.width == EVAL_CROP:
        return img
    if min(img.height, img.width) < EVAL_CROP:
        raise ConfigurationError(f"{path}: smaller than the {EVAL_CROP}px evaluation crop")
    return center_crop(resize_shorter_side(img, EVAL_CROP), EVAL_CROP)


def evaluate(manifest: DatasetManifest, methods: list[str],
             model: NerdModel | None = None) -> MetricReport:
    """PSNR/SSIM of each method against ground truth on the test split."""
    if not methods:
        raise ConfigurationError("no methods given")
    for m in methods:
        if m not in METHODS:
            raise ConfigurationError(f"unknown method {m!r}, expected one of {METHODS}")
        if m in ("nerd", "nerd-ns") and model is None:
            raise ConfigurationError(f"method {m!r} requires a checkpoint")
    if not manifest.test:
        raise ConfigurationError("manifest has no test images")
    report = MetricReport()
    for path in manifest.test:
        truth = prepare_eval_image(path)
        bayer = mosaic(truth)
        for method in methods:
            result = demosaic_with_method(bayer, method, model)
            report.add(Path(path).stem, method, psnr(result, truth), ssim(result, truth))
    return report
