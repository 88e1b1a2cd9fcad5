"""Image primitives: boundary padding, same-size correlation, 8x8 block DCT, PSNR.

Images are 2-D float64 arrays on the [0, 255] intensity scale.  Kernels are
2-D float arrays; the anchor of an ``(kh, kw)`` kernel is ``((kh-1)//2, (kw-1)//2)``.
"""

import numpy as np
from scipy import fft

from . import _kernels

BOUNDARY_MODES = ("symmetric", "zero", "periodic")

_NP_PAD_MODE = {"symmetric": "symmetric", "zero": "constant", "periodic": "wrap"}

PSNR_CAP = 99.0


def as_image(data):
    img = np.asarray(data, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D image, got shape {img.shape}")
    return img


def _check_mode(mode):
    if mode not in _NP_PAD_MODE:
        raise ValueError(f"unknown boundary mode {mode!r}; expected one of {BOUNDARY_MODES}")


def _margins(margin):
    if np.isscalar(margin):
        return ((int(margin), int(margin)), (int(margin), int(margin)))
    (t, b), (l, r) = margin
    return ((int(t), int(b)), (int(l), int(r)))


def pad(img, margin, mode="symmetric"):
    """Pad ``img`` by ``margin`` pixels on every side.

    ``margin`` is an int or ``((top, bottom), (left, right))``.  Symmetric mode
    is half-sample reflection (the edge pixel is repeated).  Margins larger
    than the image are rejected instead of reflecting repeatedly.
    """
    _check_mode(mode)
    img = as_image(img)
    widths = _margins(margin)
    if min(min(widths[0]), min(widths[1])) < 0:
        raise ValueError("margin must be non-negative")
    if max(widths[0]) > img.shape[0] or max(widths[1]) > img.shape[1]:
        raise ValueError(f"margin {margin} exceeds image size {img.shape}")
    if widths == ((0, 0), (0, 0)):
        return img.copy()
    return np.pad(img, widths, mode=_NP_PAD_MODE[mode])


def pad_adjoint(padded, margin, mode="symmetric"):
    """Transpose of :func:`pad`: fold the border back onto the interior."""
    _check_mode(mode)
    (t, b), (l, r) = _margins(margin)
    H, W = padded.shape
    h, w = H - t - b, W - l - r
    if mode == "zero":
        return padded[t:t + h, l:l + w].copy()
    # fold rows on the full-width strip, then columns
    rows = padded
    core = rows[t:t + h, :].copy()
    if mode == "symmetric":
        if t:
            core[:t, :] += rows[:t, :][::-1, :]
        if b:
            core[h - b:, :] += rows[t + h:, :][::-1, :]
    else:
        if t:
            core[h - t:, :] += rows[:t, :]
        if b:
            core[:b, :] += rows[t + h:, :]
    out = core[:, l:l + w].copy()
    if mode == "symmetric":
        if l:
            out[:, :l] += core[:, :l][:, ::-1]
        if r:
            out[:, w - r:] += core[:, l + w:][:, ::-1]
    else:
        if l:
            out[:, w - l:] += core[:, :l]
        if r:
            out[:, :r] += core[:, l + w:]
    return out


def kernel_margins(shape):
    """Padding ``((top, bottom), (left, right))`` that keeps correlation output same-size."""
    kh, kw = shape
    return (((kh - 1) // 2, kh - 1 - (kh - 1) // 2),
            ((kw - 1) // 2, kw - 1 - (kw - 1) // 2))


def rot180(k):
    return np.ascontiguousarray(np.asarray(k, dtype=np.float64)[::-1, ::-1])


def correlate_same(img, k, mode="symmetric"):
    """Sliding inner product of the padded image with ``k``, same size as ``img``."""
    k = np.ascontiguousarray(np.atleast_2d(np.asarray(k, dtype=np.float64)))
    P = pad(img, kernel_margins(k.shape), mode)
    return _kernels.correlate_valid(P, k)


def correlate_same_adjoint(g, k, mode="symmetric"):
    """Exact transpose of ``u -> correlate_same(u, k, mode)`` applied to ``g``.

    Under zero boundaries this coincides with ``correlate_same(g, rot180(k), 'zero')``
    for odd kernels; under the other modes the border is folded back.
    """
    k = np.ascontiguousarray(np.atleast_2d(np.asarray(k, dtype=np.float64)))
    g = as_image(g)
    kh, kw = k.shape
    G = np.pad(g, ((kh - 1, kh - 1), (kw - 1, kw - 1)))
    full = _kernels.correlate_valid(G, rot180(k))
    return pad_adjoint(full, kernel_margins(k.shape), mode)


def psnr(a, b):
    a = as_image(a)
    b = as_image(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    rmse = np.sqrt(np.mean((a - b) ** 2))
    if rmse < 255.0 * 10.0 ** (-PSNR_CAP / 20.0):
        return PSNR_CAP
    return float(20.0 * np.log10(255.0 / rmse))


# ---------------------------------------------------------------------------
# 8x8 block DCT
# ---------------------------------------------------------------------------

def _check_blocks(shape):
    if shape[0] % 8 or shape[1] % 8:
        raise ValueError(f"image dimensions {shape} are not multiples of 8")


def _to_blocks(x):
    h, w = x.shape
    return x.reshape(h // 8, 8, w // 8, 8)


def dct_blocks(x):
    """Orthonormal 2-D DCT-II of every 8x8 block, without the level shift."""
    x = as_image(x)
    _check_blocks(x.shape)
    return fft.dctn(_to_blocks(x), type=2, norm="ortho", axes=(1, 3)).reshape(x.shape)


def idct_blocks(c):
    c = as_image(c)
    _check_blocks(c.shape)
    return fft.idctn(_to_blocks(c), type=2, norm="ortho", axes=(1, 3)).reshape(c.shape)


def block_dct(img):
    """Level-shifted (-128) blockwise DCT; coefficients stored in place per block."""
    return dct_blocks(as_image(img) - 128.0)


def block_idct(coeffs):
    return idct_blocks(coeffs) + 128.0
