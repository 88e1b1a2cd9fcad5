"""Trainable nonlinear reaction-diffusion for image denoising and JPEG deblocking."""

from . import _kernels
from .diffusion import deblock_stage, denoise_stage, infer, pm_step
from .imgproc import block_dct, block_idct, correlate_same, pad, psnr, rot180
from .influence import RbfConfig, RbfMixture, fit_weights, phi_deriv, phi_eval, rho_eval
from .jpegsim import QBox, jpeg_degrade, proj_q, quant_table
from .model import (FilterBasis, StageParams, TrdModel, assemble_filter, build_basis,
                    init_model, load_model, save_model)

__version__ = "0.1.0"


def __getattr__(name):
    # the active kernel backend can change at runtime via _kernels.set_backend
    if name == "BACKEND":
        return _kernels.BACKEND
    raise AttributeError(f"module 'trd' has no attribute {name!r}")
