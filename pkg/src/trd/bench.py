"""Wall-clock timing of inference under either kernel backend."""

import time

import numpy as np

from . import _kernels
from .diffusion import infer


def synthetic_image(size, seed=0):
    """Smooth gradient plus noise, in [0, 255]-ish range."""
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    return 128.0 + 80.0 * np.sin(3 * x) * np.cos(2 * y) + 25.0 * rng.standard_normal((size, size))


def time_inference(model, sizes, backend=None, repeat=1):
    """Best-of-``repeat`` seconds for a full ``model`` pass at each size.

    A small warm-up call runs first so numba compilation is not timed.
    """
    backend = backend or _kernels.BACKEND
    out = []
    with _kernels.use_backend(backend):
        infer(model, synthetic_image(16), _aux(model, synthetic_image(16)))
        for s in sizes:
            img = synthetic_image(s)
            aux = _aux(model, img)
            best = np.inf
            for _ in range(repeat):
                t0 = time.perf_counter()
                infer(model, img, aux)
                best = min(best, time.perf_counter() - t0)
            out.append(best)
    return out


def _aux(model, img):
    if model.task == "denoise":
        return img
    from .jpegsim import box_from_decoded

    return box_from_decoded(img, model.quality)
