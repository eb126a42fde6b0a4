"""Coordinate MLP: sine-activated with skip connections, plus ReLU ablations.

The network maps an input vector (2-d coordinate, optionally concatenated
with a local feature encoding) through 5 hidden layers of width 256 to an
RGB triple.  Skip connections re-concatenate the full input vector after
hidden layers 2 and 4, so hidden layers 3 and 5 see width 256 + Din.
Variants:

  siren    sine activations, sin(omega0 * (Wx + b)) at every hidden layer
  relu     plain ReLU MLP on raw coordinates
  relu_pe  ReLU MLP on a random Fourier feature mapping of the coordinates

Outputs are raw (unclamped); clamping to [0, 1] happens only at image
assembly so the loss keeps its gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError, DimensionError

VARIANTS = ("siren", "relu", "relu_pe")


@dataclass(frozen=True)
class MlpConfig:
    variant: str = "siren"
    hidden_width: int = 256
    hidden_layers: int = 5
    skip_after: tuple[int, ...] = (2, 4)   # hidden layers whose output gets the input re-concatenated
    omega0: float = 30.0
    encoding_dim: int = 0                  # 0: coords only; >0: conditioned on local encodings
    fourier_frequencies: int = 128         # relu_pe only
    fourier_scale: float = 10.0
    out_dim: int = 3

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown MLP variant {self.variant!r}, expected one of {VARIANTS}")
        if self.omega0 <= 0:
            raise ConfigurationError(f"omega0 must be positive, got {self.omega0}")
        if self.variant == "relu_pe" and self.encoding_dim:
            raise ConfigurationError("relu_pe is a coords-only ablation; encodings are not supported")

    @property
    def input_dim(self) -> int:
        if self.variant == "relu_pe":
            return 2 * self.fourier_frequencies
        return 2 + self.encoding_dim

    def to_dict(self) -> dict:
        d = asdict(self)
        d["skip_after"] = list(self.skip_after)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MlpConfig":
        d = dict(d)
        d["skip_after"] = tuple(d.get("skip_after", ()))
        return cls(**d)


def fourier_features(coords: np.ndarray, freq_matrix: np.ndarray) -> np.ndarray:
    """gamma(x) = [sin(2*pi*B x), cos(2*pi*B x)] for B of shape (m, 2)."""
    proj = 2.0 * np.pi * coords @ freq_matrix.T.astype(coords.dtype)
    return np.concatenate([np.sin(proj), np.cos(proj)], axis=1)


class SirenMlp:
    """Weights plus forward pass for one MLP variant."""

    def __init__(self, config: MlpConfig, rng: np.random.Generator, dtype=np.float32):
        self.config = config
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        self.fourier_b: np.ndarray | None = None
        if config.variant == "relu_pe":
            self.fourier_b = (config.fourier_scale
                              * rng.standard_normal((config.fourier_frequencies, 2))).astype(dtype)
        for i, (fan_in, fan_out) in enumerate(self.layer_dims()):
            if config.variant == "siren":
                bound = 1.0 / fan_in if i == 0 else np.sqrt(6.0 / fan_in) / config.omega0
            else:
                bound = np.sqrt(6.0 / fan_in)  # He-uniform for the ReLU ablations
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)
            self.weights.append(Tensor(w, requires_grad=True, name=f"mlp.w{i}"))
            self.biases.append(Tensor(np.zeros(fan_out, dtype=dtype), requires_grad=True, name=f"mlp.b{i}"))

    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per linear layer, skips included, output layer last."""
        cfg = self.config
        din = cfg.input_dim
        dims = []
        width = din
        for layer in range(1, cfg.hidden_layers + 1):
            dims.append((width, cfg.hidden_width))
            width = cfg.hidden_width
            if layer in cfg.skip_after:
                width += din
        dims.append((width, cfg.out_dim))
        return dims

    def parameter_count(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_dims())

    def parameters(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def _activate(self, x: Tensor) -> Tensor:
        if self.config.variant == "siren":
            return ad.sine(x, self.config.omega0)
        return ad.relu(x)

    def forward(self, coords: Tensor, encodings: Tensor | None = None) -> Tensor:
        """Map (N, 2) coordinates (plus optional (N, E) encodings) to (N, out_dim)."""
        cfg = self.config
        if cfg.encoding_dim:
            if encodings is None:
                raise ConfigurationError("conditioned MLP requires local encodings")
            if encodings.shape[1] != cfg.encoding_dim:
                raise DimensionError(
                    f"encoding width {encodings.shape[1]} != configured {cfg.encoding_dim}")
        elif encodings is not None:
            raise ConfigurationError(f"variant {cfg.variant!r} takes no encodings")
        if coords.data.ndim != 2 or coords.shape[1] != 2:
            raise DimensionError(f"coords must be (N, 2), got {coords.shape}")

        if cfg.variant == "relu_pe":
            vec = Tensor._wrap(fourier_features(coords.data, self.fourier_b), coords.requires_grad)
        elif cfg.encoding_dim:
            vec = ad.concat([coords, encodings], axis=1)
        else:
            vec = coords

        h = vec
        for layer in range(1, cfg.hidden_layers + 1):
            h = self._activate(ad.linear(h, self.weights[layer - 1], self.biases[layer - 1]))
            if layer in cfg.skip_after:
                h = ad.concat([h, vec], axis=1)
        return ad.linear(h, self.weights[-1], self.biases[-1])
