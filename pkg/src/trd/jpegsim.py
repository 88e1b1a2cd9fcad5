"""Grayscale JPEG quantization simulator and the quantization constraint box."""

from dataclasses import dataclass

import numpy as np

from .imgproc import as_image, block_dct, block_idct

# ITU-T T.81 Annex K, Table K.1 (luminance)
BASE_LUMA = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.int64)


def quant_table(quality):
    """Quality scaling of the base luminance table.

    The scale is ``5000 / q`` (exact rational, not truncated) below 50 and
    ``200 - 2q`` from 50 up; integer arithmetic keeps the floor exact.
    """
    if int(quality) != quality or not 1 <= quality <= 100:
        raise ValueError(f"quality must be an integer in [1, 100], got {quality!r}")
    q = int(quality)
    if q < 50:
        # floor((base * 5000/q + 50) / 100) without leaving the integers
        entries = (BASE_LUMA * 5000 + 50 * q) // (100 * q)
    else:
        entries = (BASE_LUMA * (200 - 2 * q) + 50) // 100
    return np.clip(entries, 1, 255)


@dataclass(frozen=True)
class QBox:
    """Per-coefficient bounds on the (padded) block-DCT grid.

    ``height``/``width`` record the size of the image before padding to a
    multiple of 8.
    """

    lower: np.ndarray
    upper: np.ndarray
    height: int = None
    width: int = None

    def __post_init__(self):
        if self.lower.shape != self.upper.shape:
            raise ValueError("lower and upper bounds differ in shape")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        if self.height is None:
            object.__setattr__(self, "height", self.lower.shape[0])
            object.__setattr__(self, "width", self.lower.shape[1])

    @property
    def shape(self):
        return self.lower.shape

    @property
    def center(self):
        return 0.5 * (self.lower + self.upper)

    def decoded(self):
        """The decoder's reconstruction on the padded grid."""
        return block_idct(self.center)


def tile_table(table, shape):
    return np.tile(table, (shape[0] // 8, shape[1] // 8)).astype(np.float64)


def pad_to_blocks(img):
    img = as_image(img)
    h, w = img.shape
    return np.pad(img, ((0, -h % 8), (0, -w % 8)), mode="edge")


def box_from_indices(d, table, height=None, width=None):
    tq = tile_table(table, d.shape)
    return QBox((d - 0.5) * tq, (d + 0.5) * tq, height, width)


def quantize(img, quality):
    """Quantization indices ``d`` of ``img`` (replicate-padded to whole blocks)."""
    full = pad_to_blocks(img)
    tq = tile_table(quant_table(quality), full.shape)
    return np.round(block_dct(full) / tq)


def jpeg_degrade(img, quality):
    """Simulate JPEG compression; return ``(decoded, box)``.

    ``decoded`` has the input's size, ``box`` lives on the padded grid.
    """
    img = as_image(img)
    h, w = img.shape
    table = quant_table(quality)
    d = quantize(img, quality)
    box = box_from_indices(d, table, h, w)
    decoded = block_idct(d * tile_table(table, d.shape))
    return decoded[:h, :w], box


def box_from_decoded(decoded, quality):
    """Re-derive the constraint box from an already-decoded image.

    Exact when ``decoded`` came out of :func:`jpeg_degrade` at the same
    quality with whole 8x8 blocks; otherwise an approximation.
    """
    decoded = as_image(decoded)
    h, w = decoded.shape
    return box_from_indices(quantize(decoded, quality), quant_table(quality), h, w)


def proj_q(coeffs, box):
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != box.shape:
        raise ValueError(f"shape mismatch {coeffs.shape} vs box {box.shape}")
    return np.minimum(np.maximum(coeffs, box.lower), box.upper)


def interior_mask(coeffs, box):
    """1 where ``coeffs`` is strictly inside the box, 0 where clamped or on a bound."""
    return ((coeffs > box.lower) & (coeffs < box.upper)).astype(np.float64)


def is_consistent(img, box, tol=1e-8):
    c = block_dct(img)
    return bool(np.all(c >= box.lower - tol) and np.all(c <= box.upper + tol))
