"""Non-learned demosaicking baselines: bilinear and Malvar (gradient-corrected).

Both operate on the GBRG layout with reflective border padding.  Reflection
(excluding the edge pixel) maps index -k to +k and H-1+k to H-1-k, which
preserves row/column parity, so the CFA phase extends consistently into the
padded border and every border estimate averages genuine same-channel
samples.  Observed CFA samples always pass through bit-exactly; the final
clamp to [0, 1] only affects interpolated values (the Malvar kernels can
overshoot).
"""

from __future__ import annotations

import hashlib

import numpy as np

from .image import BayerImage, RgbImage, cfa_channel_map

# bilinear CFA interpolation kernels (averages of 2 or 4 nearest same-channel samples)
BILINEAR_G = np.array([[0, 1, 0],
                       [1, 4, 1],
                       [0, 1, 0]], dtype=np.float64) / 4.0
BILINEAR_RB = np.array([[1, 2, 1],
                        [2, 4, 2],
                        [1, 2, 1]], dtype=np.float64) / 4.0

# Malvar-He-Cutler 5x5 gradient-corrected filters, transcribed from their
# published coefficients (all have unit DC gain on their support pattern).
# G at an R or B center:
MALVAR_G_AT_RB = np.array([
    [0, 0, -1, 0, 0],
    [0, 0, 2, 0, 0],
    [-1, 2, 4, 2, -1],
    [0, 0, 2, 0, 0],
    [0, 0, -1, 0, 0]], dtype=np.float64) / 8.0
# R or B at a green center whose same-channel neighbors sit in the same ROW:
MALVAR_X_AT_G_ROW = np.array([
    [0, 0, 0.5, 0, 0],
    [0, -1, 0, -1, 0],
    [-1, 4, 5, 4, -1],
    [0, -1, 0, -1, 0],
    [0, 0, 0.5, 0, 0]], dtype=np.float64) / 8.0
# same-channel neighbors in the same COLUMN:
MALVAR_X_AT_G_COL = MALVAR_X_AT_G_ROW.T.copy()
# R at a B center / B at an R center (same-channel samples on the diagonals):
MALVAR_X_AT_OPPOSITE = np.array([
    [0, 0, -1.5, 0, 0],
    [0, 2, 0, 2, 0],
    [-1.5, 0, 6, 0, -1.5],
    [0, 2, 0, 2, 0],
    [0, 0, -1.5, 0, 0]], dtype=np.float64) / 8.0


def malvar_kernel_checksum() -> str:
    """SHA-256 over the canonical kernel bytes; guards against transcription drift."""
    blob = b"".join(np.ascontiguousarray(k, dtype=np.float64).tobytes()
                    for k in (MALVAR_G_AT_RB, MALVAR_X_AT_G_ROW,
                              MALVAR_X_AT_G_COL, MALVAR_X_AT_OPPOSITE))
    return hashlib.sha256(blob).hexdigest()


def _correlate_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    kh, kw = kernel.shape
    h = img.shape[0] - kh + 1
    w = img.shape[1] - kw + 1
    out = np.zeros((h, w), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            kv = kernel[i, j]
            if kv != 0.0:
                out += kv * img[i:i + h, j:j + w]
    return out


def _padded_plane_and_masks(bayer: BayerImage, pad: int):
    plane = np.pad(bayer.data.astype(np.float64), pad, mode="reflect")
    # parity of (index - pad) matches the original grid; reflection keeps it valid
    rows = (np.arange(plane.shape[0]) - pad)[:, None] % 2
    cols = (np.arange(plane.shape[1]) - pad)[None, :] % 2
    chan = np.array([[1, 2], [0, 1]], dtype=np.intp)[rows, cols]
    return plane, chan


def bilinear_demosaic(bayer: BayerImage) -> RgbImage:
    """Average the 2 or 4 nearest same-channel samples for each missing value."""
    plane, chan = _padded_plane_and_masks(bayer, 1)
    out = np.empty((3, bayer.height, bayer.width), dtype=np.float64)
    out[1] = _correlate_valid(plane * (chan == 1), BILINEAR_G)
    out[0] = _correlate_valid(plane * (chan == 0), BILINEAR_RB)
    out[2] = _correlate_valid(plane * (chan == 2), BILINEAR_RB)
    return RgbImage(np.clip(out, 0.0, 1.0).astype(np.float32))


def malvar_demosaic(bayer: BayerImage) -> RgbImage:
    """Apply the 5x5 gradient-corrected filters, phase-mapped to GBRG."""
    plane, _ = _padded_plane_and_masks(bayer, 2)
    est_g = _correlate_valid(plane, MALVAR_G_AT_RB)
    est_row = _correlate_valid(plane, MALVAR_X_AT_G_ROW)
    est_col = _correlate_valid(plane, MALVAR_X_AT_G_COL)
    est_diag = _correlate_valid(plane, MALVAR_X_AT_OPPOSITE)

    h, w = bayer.height, bayer.width
    chan = cfa_channel_map(h, w)
    rows = np.arange(h)[:, None] % 2
    cols = np.arange(w)[None, :] % 2
    at_g_even = (chan == 1) & (rows == 0)   # green with B row-neighbors, R column-neighbors
    at_g_odd = (chan == 1) & (rows == 1)    # green with R row-neighbors, B column-neighbors
    at_r = chan == 0
    at_b = chan == 2
    del cols  # parity fully captured by chan + row parity for GBRG

    data = bayer.data.astype(np.float64)
    out = np.empty((3, h, w), dtype=np.float64)
    out[0] = np.where(at_r, data,
                      np.where(at_g_even, est_col, np.where(at_g_odd, est_row, est_diag)))
    out[1] = np.where(chan == 1, data, est_g)
    out[2] = np.where(at_b, data,
                      np.where(at_g_even, est_row, np.where(at_g_odd, est_col, est_diag)))
    return RgbImage(np.clip(out, 0.0, 1.0).astype(np.float32))
