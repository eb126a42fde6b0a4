"""Training configuration and dataset manifests."""

from __future__ import annotations

from dataclasses import dataclass, asdict
from pathlib import Path

from .errors import ConfigurationError, FormatError


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters; the defaults are the published training recipe.

    `coord_subsample` (off by default) limits each patch to a random
    subset of pixel queries per step, a desk-scale concession; unset, one
    step queries every pixel of every patch in the batch.
    """

    learning_rate: float = 1e-4
    lr_decay: float = 0.95
    iterations_per_epoch: int = 10000
    batch_size: int = 5
    patch_size: int = 200
    epochs: int = 1
    seed: int = 0
    coord_subsample: int | None = None

    def __post_init__(self):
        if self.learning_rate <= 0 or not 0 < self.lr_decay <= 1:
            raise ConfigurationError("learning_rate must be positive and lr_decay in (0, 1]")
        if self.batch_size < 1 or self.patch_size < 2 or self.patch_size % 2:
            raise ConfigurationError("batch_size >= 1 and even patch_size >= 2 required")
        if self.coord_subsample is not None and self.coord_subsample < 1:
            raise ConfigurationError("coord_subsample must be positive when set")

    def to_dict(self) -> dict:
        return asdict(self)


def lr_at_epoch(config: TrainConfig, epoch: int) -> float:
    """Step-decayed learning rate: lr0 * decay^epoch."""
    if epoch < 0:
        raise ConfigurationError(f"epoch must be non-negative, got {epoch}")
    return config.learning_rate * config.lr_decay ** epoch


@dataclass(frozen=True)
class DatasetManifest:
    """Image paths with train/test split tags."""

    train: tuple[Path, ...]
    test: tuple[Path, ...]
    name: str = "dataset"

    def __post_init__(self):
        overlap = set(self.train) & set(self.test)
        if overlap:
            raise ConfigurationError(f"paths in both splits: {sorted(map(str, overlap))[:3]}")
        for p in (*self.train, *self.test):
            if not Path(p).exists():
                raise ConfigurationError(f"manifest path does not exist: {p}")


def load_manifest(path) -> DatasetManifest:
    """Parse the plain-text manifest: one `train: path` or `test: path` per line."""
    train: list[Path] = []
    test: list[Path] = []
    base = Path(path).parent
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tag, _, rest = line.partition(":")
        target = rest.strip()
        if tag.strip() not in ("train", "test") or not target:
            raise FormatError(f"{path}:{lineno}: expected 'train: <path>' or 'test: <path>'")
        p = Path(target)
        if not p.is_absolute():
            p = base / p
        (train if tag.strip() == "train" else test).append(p)
    return DatasetManifest(train=tuple(train), test=tuple(test), name=Path(path).stem)


def save_manifest(manifest: DatasetManifest, path) -> None:
    lines = [f"train: {p}" for p in manifest.train] + [f"test: {p}" for p in manifest.test]
    Path(path).write_text("\n".join(lines) + "\n")
