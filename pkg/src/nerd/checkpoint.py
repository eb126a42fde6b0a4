"""Binary checkpoint format.

Layout (all integers little-endian):

    magic        4 bytes  b"NERD"
    version      u32      currently 1
    meta_len     u32      length of the UTF-8 JSON metadata block
    meta         bytes    architecture hyperparameters, variant tag, omega0,
                          training step
    n_records    u32
    per record:
        name_len u16, name UTF-8
        ndim     u8, dims u32 each
        data     float32 little-endian, C order

Loading validates the magic, version, and every record shape against the
architecture reconstructed from the metadata.  Writes are atomic.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .atomic import atomic_write_bytes
from .encoder import Encoder, EncoderConfig
from .errors import FormatError
from .model import NerdModel
from .siren import MlpConfig, SirenMlp

MAGIC = b"NERD"
FORMAT_VERSION = 1


def _named_arrays(obj) -> list[tuple[str, np.ndarray]]:
    if isinstance(obj, NerdModel):
        out = [(t.name, t.data) for t in obj.encoder.parameters()]
        out += [(t.name, t.data) for t in obj.mlp.parameters()]
        return out
    if isinstance(obj, SirenMlp):
        out = [(t.name, t.data) for t in obj.parameters()]
        if obj.fourier_b is not None:
            out.append(("mlp.fourier_b", obj.fourier_b))
        return out
    raise FormatError(f"cannot checkpoint object of type {type(obj).__name__}")


def _metadata(obj, kind: str, training_step: int) -> dict:
    meta = {"format_version": FORMAT_VERSION, "kind": kind, "training_step": int(training_step)}
    if isinstance(obj, NerdModel):
        meta["mlp"] = obj.mlp.config.to_dict()
        meta["encoder"] = obj.encoder.config.to_dict()
        meta["window"] = obj.window
        meta["omega0"] = obj.mlp.config.omega0
    else:
        meta["mlp"] = obj.config.to_dict()
        meta["omega0"] = obj.config.omega0
    return meta


def save_checkpoint(path, obj, kind: str, training_step: int = 0) -> None:
    """Serialize a NerdModel or a bare SirenMlp; `kind` tags the workflow."""
    records = _named_arrays(obj)
    meta = json.dumps(_metadata(obj, kind, training_step)).encode("utf-8")
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(meta)), meta,
              struct.pack("<I", len(records))]
    for name, arr in records:
        data = np.ascontiguousarray(arr, dtype="<f4")
        name_b = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(name_b)))
        chunks.append(name_b)
        chunks.append(struct.pack("<B", data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(data.tobytes())
    atomic_write_bytes(path, b"".join(chunks))


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError(f"{self.path}: truncated checkpoint")
        piece = self.blob[self.pos:self.pos + n]
        self.pos += n
        return piece

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Raw metadata and named float32 arrays, shape-checked but model-agnostic."""
    r = _Reader(Path(path).read_bytes(), path)
    if r.take(4) != MAGIC:
        raise FormatError(f"{path}: bad magic, not a checkpoint")
    version, meta_len = r.unpack("<II")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    meta = json.loads(r.take(meta_len).decode("utf-8"))
    (n_records,) = r.unpack("<I")
    records: dict[str, np.ndarray] = {}
    for _ in range(n_records):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape)
        records[name] = arr.astype(np.float32)
    if r.pos != len(r.blob):
        raise FormatError(f"{path}: trailing bytes after last record")
    return meta, records


def _assign(params: list, records: dict[str, np.ndarray], path) -> None:
    for t in params:
        if t.name not in records:
            raise FormatError(f"{path}: missing parameter record {t.name!r}")
        arr = records.pop(t.name)
        if arr.shape != t.data.shape:
            raise FormatError(
                f"{path}: record {t.name!r} has shape {arr.shape}, architecture expects {t.data.shape}")
        t.data = arr.copy()


def load_checkpoint(path):
    """Rebuild the checkpointed model; returns (model_or_mlp, metadata)."""
    meta, records = read_checkpoint(path)
    rng = np.random.default_rng(0)  # placeholder weights, overwritten below
    mlp_cfg = MlpConfig.from_dict(meta["mlp"])
    if "encoder" in meta:
        encoder = Encoder(EncoderConfig.from_dict(meta["encoder"]), rng)
        mlp = SirenMlp(mlp_cfg, rng)
        model = NerdModel(encoder, mlp, window=int(meta.get("window", 5)))
        _assign(model.encoder.parameters(), records, path)
        _assign(model.mlp.parameters(), records, path)
        obj = model
    else:
        mlp = SirenMlp(mlp_cfg, rng)
        _assign(mlp.parameters(), records, path)
        if mlp.fourier_b is not None:
            if "mlp.fourier_b" not in records:
                raise FormatError(f"{path}: relu_pe checkpoint missing Fourier frequency matrix")
            b = records.pop("mlp.fourier_b")
            if b.shape != mlp.fourier_b.shape:
                raise FormatError(f"{path}: Fourier matrix shape {b.shape} unexpected")
            mlp.fourier_b = b.copy()
        obj = mlp
    if records:
        raise FormatError(f"{path}: unexpected extra records {sorted(records)}")
    return obj, meta
