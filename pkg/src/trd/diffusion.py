"""Forward diffusion: Perona-Malik baseline step, TRD stages and multi-stage inference."""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .imgproc import as_image, block_dct, block_idct, kernel_margins, pad, rot180
from .influence import phi_and_deriv
from .jpegsim import QBox, proj_q

# [-1, 1] difference filters embedded in 3 taps so the anchor sits at the centre
# and the rotated kernel is the exact transpose.
KX = np.array([[0.0, -1.0, 1.0]])
KY = KX.T.copy()


def pm_influence(z):
    return z / (1.0 + z * z)


def pm_step(u, dt, mode="symmetric"):
    """One explicit Perona-Malik step in the decoupled form."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    u = as_image(u)
    flux = np.zeros_like(u)
    for k in (KX, KY):
        m = kernel_margins(k.shape)
        g = _kernels.correlate_valid(pad(u, m, mode), k)
        flux += _kernels.correlate_valid(pad(pm_influence(g), m, mode), rot180(k))
    return u - dt * flux


def diffusion_term(u, sp, basis, cfg, mode="symmetric"):
    """``sum_i rot180(k_i) * phi_i(k_i * u)``; filters accumulated in index order."""
    u = as_image(u)
    r = basis.m // 2
    P = pad(u, r, mode)
    out = np.zeros_like(u)
    for k, mix in zip(sp.kernels(basis), sp.mixtures(cfg)):
        v = _kernels.correlate_valid(P, k)
        z, _ = phi_and_deriv(mix, v)
        out += _kernels.correlate_valid(pad(z, r, mode), rot180(k))
    return out


def denoise_stage(u_prev, f_n, sp, basis, cfg, mode="symmetric"):
    u_prev = as_image(u_prev)
    f_n = as_image(f_n)
    if u_prev.shape != f_n.shape:
        raise ValueError(f"shape mismatch {u_prev.shape} vs {f_n.shape}")
    return u_prev - (diffusion_term(u_prev, sp, basis, cfg, mode) + sp.lam * (u_prev - f_n))


def deblock_stage(u_prev, box, sp, basis, cfg, mode="symmetric"):
    u_prev = as_image(u_prev)
    if u_prev.shape != box.shape:
        raise ValueError(f"image shape {u_prev.shape} does not match box {box.shape}")
    y = u_prev - diffusion_term(u_prev, sp, basis, cfg, mode)
    return block_idct(proj_q(block_dct(y), box))


@dataclass
class StageTrace:
    outputs: list = field(default_factory=list)


def _check_aux(model, aux):
    if model.task == "denoise" and isinstance(aux, QBox):
        raise ValueError("denoising model given a quantization box")
    if model.task == "deblock" and not isinstance(aux, QBox):
        raise ValueError("deblocking model needs a QBox as auxiliary input")


def deblock_start(decoded, box):
    """Place ``decoded`` on the padded block grid the box lives on."""
    decoded = as_image(decoded)
    if decoded.shape == box.shape:
        return decoded.copy()
    if decoded.shape != (box.height, box.width):
        raise ValueError(f"decoded image {decoded.shape} does not match box {box.shape}")
    u = box.decoded()
    u[:box.height, :box.width] = decoded
    return u


def infer(model, image, aux=None, keep_trace=False, stages=None, mode="symmetric"):
    """Run the first ``stages`` (default: all) stages of ``model``.

    Denoising: ``aux`` is the noisy observation, defaulting to ``image``.
    Deblocking: ``aux`` is the :class:`QBox`; the result is cropped back to the
    unpadded size.
    """
    image = as_image(image)
    T = model.T if stages is None else stages
    if not 0 <= T <= model.T:
        raise ValueError(f"cannot run {T} stages of a {model.T}-stage model")
    if model.task == "denoise":
        _check_aux(model, aux)
        aux = image if aux is None else as_image(aux)
        u = image.copy()
    else:
        _check_aux(model, aux)
        u = deblock_start(image, aux)
    trace = StageTrace([u.copy()]) if keep_trace else None
    basis, cfg = model.basis, model.rbf
    for sp in model.stages[:T]:
        if model.task == "denoise":
            u = denoise_stage(u, aux, sp, basis, cfg, mode)
        else:
            u = deblock_stage(u, aux, sp, basis, cfg, mode)
        if keep_trace:
            trace.outputs.append(u.copy())
    if model.task == "deblock":
        u = u[:aux.height, :aux.width]
    return (u, trace) if keep_trace else u
