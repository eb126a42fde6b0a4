"""The conditioned demosaicking model: encoder + coordinate MLP.

The encoder turns the Bayer plane into an (N, F, H, W) feature map; for
each queried pixel a square window (5x5 by default) centered on it is
cut out of the reflect-padded map and flattened in (row, column, channel)
order into the local encoding, which is concatenated with the pixel's
normalized coordinate and fed to the MLP.  Demosaicking queries every
pixel independently, so batching granularity and query order cannot
change the output.
"""

from __future__ import annotations

import io

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import DOWNSCALE_FACTOR, Encoder, EncoderConfig
from .errors import ConfigurationError, DimensionError
from .image import BayerImage, RgbImage, coord_grid
from .siren import MlpConfig, SirenMlp

LOCAL_WINDOW = 5


def local_encoding_dim(encoder_cfg: EncoderConfig, window: int = LOCAL_WINDOW) -> int:
    return window * window * encoder_cfg.out_channels


def pad_to_multiple(plane: np.ndarray, multiple: int = DOWNSCALE_FACTOR) -> np.ndarray:
    """Reflect-pad H and W (bottom/right) up to the next multiple.

    Bottom/right padding keeps the CFA phase anchored at the origin, and
    reflection preserves row/column parity, so the padding stays a valid
    GBRG extension.
    """
    h, w = plane.shape[-2:]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return plane
    pad = [(0, 0)] * (plane.ndim - 2) + [(0, ph), (0, pw)]
    return np.pad(plane, pad, mode="reflect")


def extract_local(features: Tensor, centers: np.ndarray, window: int = LOCAL_WINDOW) -> Tensor:
    """Local encodings for pixel centers of an (N, F, H, W) feature map.

    `centers` holds (image, row, col) per query; border windows use
    reflect padding.  Differentiable: gradients scatter back into the map.
    """
    r = window // 2
    padded = ad.reflect_pad2d(features, r)
    shifted = np.asarray(centers, dtype=np.intp).copy()
    shifted[:, 1] += r
    shifted[:, 2] += r
    return ad.gather_windows(padded, shifted, window)


class NerdModel:
    """Encoder + conditioned MLP with a fixed local window size."""

    def __init__(self, encoder: Encoder, mlp: SirenMlp, window: int = LOCAL_WINDOW):
        expected = local_encoding_dim(encoder.config, window)
        if mlp.config.encoding_dim != expected:
            raise ConfigurationError(
                f"MLP encoding_dim {mlp.config.encoding_dim} != window^2 * channels = {expected}")
        self.encoder = encoder
        self.mlp = mlp
        self.window = window

    @property
    def uses_skips(self) -> bool:
        return bool(self.mlp.config.skip_after)

    def parameters(self) -> list[Tensor]:
        return self.encoder.parameters() + self.mlp.parameters()

    def parameter_count(self) -> int:
        return self.encoder.parameter_count() + self.mlp.parameter_count()

    def encode(self, planes: np.ndarray) -> Tensor:
        """Feature maps for a (N, H, W) stack of Bayer planes (on tape if active).

        Pads to the stride multiple when needed and crops the features back,
        so the output spatial size always equals the input's.
        """
        if planes.ndim != 3:
            raise DimensionError(f"encode expects (N, H, W), got {planes.shape}")
        n, h, w = planes.shape
        padded = pad_to_multiple(planes) - 0.5  # center: [0,1] samples feed ReLU chains poorly
        feats = self.encoder.forward(Tensor._wrap(padded[:, None, :, :], False))
        if feats.shape[2] != h or feats.shape[3] != w:
            feats = ad.crop2d(feats, 0, 0, h, w)
        return feats

    def query(self, feats: Tensor, coords: np.ndarray, centers: np.ndarray) -> Tensor:
        """RGB predictions for pixel queries given the feature map."""
        encodings = extract_local(feats, centers, self.window)
        return self.mlp.forward(Tensor._wrap(coords, False), encodings)

    def demosaic(self, bayer: BayerImage, query_batch: int = 16384) -> RgbImage:
        """Full-image inference: encode once, query every pixel, clamp, assemble."""
        h, w = bayer.height, bayer.width
        feats = self.encode(bayer.data[None, :, :].astype(np.float32))
        grid = coord_grid(h, w)
        rows, cols = np.divmod(np.arange(h * w, dtype=np.intp), w)
        centers = np.stack([np.zeros(h * w, dtype=np.intp), rows, cols], axis=1)
        out = np.empty((h * w, 3), dtype=np.float32)
        for start in range(0, h * w, query_batch):
            stop = min(start + query_batch, h * w)
            pred = self.query(feats, grid[start:stop], centers[start:stop])
            out[start:stop] = pred.data
        rgb = out.reshape(h, w, 3).transpose(2, 0, 1)
        return RgbImage(np.clip(rgb, 0.0, 1.0))


def build_nerd_model(encoder_cfg: EncoderConfig, seed: int, skips: bool = True,
                     omega0: float = 30.0, hidden_width: int = 256,
                     window: int = LOCAL_WINDOW) -> NerdModel:
    """Construct a conditioned model (encoder + SIREN) from one seed."""
    rng = np.random.default_rng(seed)
    encoder = Encoder(encoder_cfg, rng)
    mlp_cfg = MlpConfig(variant="siren", hidden_width=hidden_width,
                        skip_after=(2, 4) if skips else (),
                        omega0=omega0,
                        encoding_dim=local_encoding_dim(encoder_cfg, window))
    mlp = SirenMlp(mlp_cfg, rng)
    return NerdModel(encoder, mlp, window)


def describe_mlp(cfg: MlpConfig) -> str:
    rng = np.random.default_rng(0)
    mlp = SirenMlp(cfg, rng)
    buf = io.StringIO()
    print(f"variant={cfg.variant} input_width={cfg.input_dim} hidden={cfg.hidden_width} "
          f"skip_after={list(cfg.skip_after)}", file=buf)
    for i, (fi, fo) in enumerate(mlp.layer_dims()):
        kind = "output" if i == len(mlp.layer_dims()) - 1 else f"hidden{i + 1}"
        print(f"  {kind:<8} {fi:>5} -> {fo:<5} params={fi * fo + fo}", file=buf)
    print(f"  total MLP parameters: {mlp.parameter_count()}", file=buf)
    return buf.getvalue()


def describe_encoder(cfg: EncoderConfig) -> str:
    rng = np.random.default_rng(0)
    enc = Encoder(cfg, rng)
    buf = io.StringIO()
    print(f"encoder base_channels={cfg.base_channels} res_blocks={cfg.res_blocks} "
          f"out_channels={cfg.out_channels}", file=buf)
    for name, shape, count in enc.layer_table():
        print(f"  {name:<14} kernel={'x'.join(map(str, shape))} params={count}", file=buf)
    print(f"  total encoder parameters: {enc.parameter_count()}", file=buf)
    return buf.getvalue()


def describe_variant(variant: str, encoder_cfg: EncoderConfig | None = None,
                     window: int = LOCAL_WINDOW) -> str:
    """Human-readable layer table and closed-form parameter counts."""
    encoder_cfg = encoder_cfg or EncoderConfig()
    buf = io.StringIO()
    if variant in ("nerd", "nerd-ns"):
        enc_dim = local_encoding_dim(encoder_cfg, window)
        mlp_cfg = MlpConfig(variant="siren", encoding_dim=enc_dim,
                            skip_after=(2, 4) if variant == "nerd" else ())
        print(f"{variant}: local encoding length {enc_dim} "
              f"({window}x{window} window, {encoder_cfg.out_channels} channels)", file=buf)
        print(describe_encoder(encoder_cfg), end="", file=buf)
        print(describe_mlp(mlp_cfg), end="", file=buf)
        rng = np.random.default_rng(0)
        total = Encoder(encoder_cfg, rng).parameter_count() + SirenMlp(mlp_cfg, rng).parameter_count()
        print(f"total parameters: {total}", file=buf)
    elif variant in ("siren", "relu", "relu_pe"):
        print(describe_mlp(MlpConfig(variant=variant)), end="", file=buf)
    else:
        raise ConfigurationError(f"unknown variant {variant!r}")
    return buf.getvalue()
