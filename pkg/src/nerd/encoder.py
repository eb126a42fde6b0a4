"""Feature encoder: EDSR-style residual trunk followed by a U-Net.

Input is the raw single-channel Bayer plane (N, 1, H, W) with H and W
divisible by 16; output is a feature map (N, out_channels, H, W).  The
trunk is a head convolution plus 8 residual blocks (conv-ReLU-conv with
an additive identity, no normalization) closed by a tail convolution and
a global skip.  The U-Net then applies 4 stride-2 downsampling convs
(channels C -> 2C -> 4C -> 8C -> 8C) and 4 upsampling stages (nearest 2x,
skip concatenation, 3x3 conv), and a final 3x3 projection emits the
feature channels.  Downsampling by strided conv and upsampling by
nearest-neighbor-plus-conv keep the op set small and avoid checkerboard
artifacts.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError

DOWNSCALE_FACTOR = 16  # four stride-2 stages


@dataclass(frozen=True)
class EncoderConfig:
    base_channels: int = 64
    res_blocks: int = 8
    out_channels: int = 128

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(**d)


def _he_conv(rng: np.random.Generator, cout: int, cin: int, k: int, dtype, gain: float = 1.0) -> np.ndarray:
    bound = gain * np.sqrt(6.0 / (cin * k * k))
    return rng.uniform(-bound, bound, size=(cout, cin, k, k)).astype(dtype)


# He-uniform keeps the mean square stable through conv+ReLU chains, but a
# residual block whose branch matches the trunk scale grows the trunk by
# roughly sqrt(3) per block (x3 mean square); damping the closing conv of
# each block keeps the stack near identity at init, which is what keeps
# the downstream feature scale (and the sine pre-activations) sane.
RESIDUAL_DAMPING = 0.1


class Encoder:
    """Parameter container and forward pass for the feature encoder."""

    def __init__(self, config: EncoderConfig, rng: np.random.Generator, dtype=np.float32):
        self.config = config
        self.params: dict[str, Tensor] = {}
        c = config.base_channels

        def conv_param(name, cout, cin, k=3, gain=1.0):
            self.params[f"{name}.w"] = Tensor(_he_conv(rng, cout, cin, k, dtype, gain),
                                              requires_grad=True, name=f"enc.{name}.w")
            self.params[f"{name}.b"] = Tensor(np.zeros(cout, dtype=dtype),
                                              requires_grad=True, name=f"enc.{name}.b")

        conv_param("head", c, 1)
        for i in range(config.res_blocks):
            conv_param(f"block{i}.conv1", c, c)
            conv_param(f"block{i}.conv2", c, c, gain=RESIDUAL_DAMPING)
        conv_param("tail", c, c, gain=RESIDUAL_DAMPING)
        down_channels = [(c, 2 * c), (2 * c, 4 * c), (4 * c, 8 * c), (8 * c, 8 * c)]
        for i, (cin, cout) in enumerate(down_channels):
            conv_param(f"down{i}", cout, cin)
        up_channels = [(16 * c, 4 * c), (8 * c, 2 * c), (4 * c, c), (2 * c, c)]
        for i, (cin, cout) in enumerate(up_channels):
            conv_param(f"up{i}", cout, cin)
        conv_param("proj", config.out_channels, c)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def layer_table(self) -> list[tuple[str, tuple[int, ...], int]]:
        """(layer, kernel shape, parameter count) per convolution."""
        rows = []
        for name, t in self.params.items():
            if name.endswith(".w"):
                bias = self.params[name[:-2] + ".b"]
                rows.append((name[:-2], t.shape, t.size + bias.size))
        return rows

    def parameter_count(self) -> int:
        return sum(t.size for t in self.params.values())

    def _conv(self, x: Tensor, name: str, stride: int = 1) -> Tensor:
        return ad.conv2d(x, self.params[f"{name}.w"], self.params[f"{name}.b"],
                         stride=stride, padding=1)

    def trunk(self, x: Tensor) -> Tensor:
        """Head conv + residual stack + tail conv with the global skip."""
        if x.data.ndim != 4 or x.shape[1] != 1:
            raise DimensionError(f"encoder expects (N, 1, H, W), got {x.shape}")
        head = self._conv(x, "head")
        t = head
        for i in range(self.config.res_blocks):
            inner = self._conv(ad.relu(self._conv(t, f"block{i}.conv1")), f"block{i}.conv2")
            t = ad.add(t, inner)
        return ad.add(self._conv(t, "tail"), head)

    def forward(self, x: Tensor) -> Tensor:
        if x.data.ndim != 4 or x.shape[1] != 1:
            raise DimensionError(f"encoder expects (N, 1, H, W), got {x.shape}")
        h, w = x.shape[2], x.shape[3]
        if h % DOWNSCALE_FACTOR or w % DOWNSCALE_FACTOR:
            raise DimensionError(
                f"encoder input {h}x{w} not divisible by {DOWNSCALE_FACTOR}; pad reflectively and crop back")

        trunk = self.trunk(x)
        skips = [trunk]
        d = trunk
        for i in range(4):
            d = ad.relu(self._conv(d, f"down{i}", stride=2))
            skips.append(d)

        u = skips[4]
        for i in range(4):
            u = ad.upsample_nearest2x(u)
            u = ad.concat([u, skips[3 - i]], axis=1)
            u = ad.relu(self._conv(u, f"up{i}"))
        return self._conv(u, "proj")
