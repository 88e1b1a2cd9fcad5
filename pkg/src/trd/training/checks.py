"""Finite-difference certification of the analytic gradients."""

from dataclasses import dataclass, field

import numpy as np

from ..imgproc import block_dct
from ..influence import RbfConfig
from ..jpegsim import QBox
from ..model import StageParams, build_basis
from .objective import (TrainSample, joint_cost_and_grad, layout_for, pack_stages,
                        stage_cost_and_grad, stage_forward, unpack_stages)


def rel_error(a, n):
    return np.abs(a - n) / np.maximum(1e-8, np.abs(a) + np.abs(n))


@dataclass
class GradCheckReport:
    max_rel_error: float
    errors: np.ndarray
    excluded: list = field(default_factory=list)


@dataclass
class Problem:
    """A differentiable scalar objective ``fg(x) -> (f, grad)``.

    ``kink_state(x)`` (optional) returns a hashable description of the active
    non-smooth pieces; coordinates whose finite-difference stencil changes it
    are excluded.
    """

    fg: object
    x0: np.ndarray
    kink_state: object = None


def grad_check(problem, x=None, h=1e-4):
    """Central differences per coordinate against the analytic gradient."""
    if not h > 0:
        raise ValueError("h must be positive")
    x = problem.x0 if x is None else np.asarray(x, dtype=np.float64)
    _, g = problem.fg(x)
    base = problem.kink_state(x) if problem.kink_state else None
    errs = np.zeros(x.size)
    excluded = []
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        if problem.kink_state is not None:
            if problem.kink_state(x + e) != base or problem.kink_state(x - e) != base:
                excluded.append(i)
                continue
        fp, _ = problem.fg(x + e)
        fm, _ = problem.fg(x - e)
        errs[i] = rel_error(g[i], (fp - fm) / (2 * h))
    keep = np.setdiff1d(np.arange(x.size), excluded)
    worst = float(errs[keep].max()) if keep.size else 0.0
    return GradCheckReport(worst, errs, excluded)


# ---------------------------------------------------------------------------
# random small instances
# ---------------------------------------------------------------------------

def random_stage(rng, task, n_k, basis, cfg, scale=0.5):
    coeffs = rng.normal(0.0, scale, (n_k, basis.size))
    weights = rng.normal(0.0, scale, (n_k, cfg.M))
    log_lambda = float(rng.normal(np.log(0.2), 0.3)) if task == "denoise" else None
    return StageParams(coeffs, weights, log_lambda)


def random_box(rng, y, clamp_fraction=0.4):
    """A box on ``y``'s block-DCT grid that clamps roughly ``clamp_fraction`` of coefficients."""
    c = block_dct(y)
    half = rng.uniform(0.2, 1.0, c.shape)
    shift = rng.uniform(-1.0, 1.0, c.shape) * half
    outside = rng.random(c.shape) < clamp_fraction
    shift[outside] = np.sign(shift[outside]) * rng.uniform(1.3, 2.5, outside.sum()) * half[outside]
    center = c + shift
    return QBox(center - half, center + half)


def random_instance(seed, task="denoise", size=8, m=3, n_k=2, M=15, T=1, mode="symmetric"):
    """A small random training problem: sample, stage list, basis and RBF config.

    Intensities are O(1) and the atoms are wide relative to the filter
    responses: every atom then carries gradient signal well above
    finite-difference noise, and third derivatives stay small enough for
    central differences at ``h = 1e-4`` to resolve 1e-5 relative error.
    """
    rng = np.random.default_rng(seed)
    basis = build_basis(m)
    cfg = RbfConfig("gaussian", M, 3.0, 1.5)
    u_gt = rng.uniform(0.0, 1.0, (size, size))
    f_n = u_gt + rng.normal(0.0, 0.15, (size, size))
    stages = [random_stage(rng, task, n_k, basis, cfg) for _ in range(T)]
    box = None
    if task == "deblock":
        sample0 = TrainSample(f_n, u_gt)
        y = stage_forward(f_n, sample0, StageParams(stages[0].coeffs, stages[0].weights, None),
                          basis, cfg, mode).out
        box = random_box(rng, y)
    return TrainSample(f_n, u_gt, box), stages, basis, cfg


def _mask_state(sample, stages, layout, basis, cfg, mode):
    def state(x):
        sts = unpack_stages(layout, x, stages)
        u = sample.f_n
        masks = []
        for sp in sts:
            c = stage_forward(u, sample, sp, basis, cfg, mode)
            masks.append(c.mask.tobytes() if c.mask is not None else b"")
            u = c.out
        return tuple(masks)
    return state


def stage_problem(sample, u_prev, sp, basis, cfg, mode="symmetric"):
    layout = layout_for(sample.task, sp.n_k, basis, cfg)

    def fg(x):
        return stage_cost_and_grad(sample, u_prev, layout.unpack(x, sp), layout, basis, cfg, mode)

    kink = None
    if sample.box is not None:
        probe = TrainSample(u_prev, sample.u_gt, sample.box)
        kink = _mask_state(probe, [sp], layout, basis, cfg, mode)
    return Problem(fg, layout.pack(sp), kink)


def joint_problem(sample, stages, basis, cfg, mode="symmetric"):
    layout = layout_for(sample.task, stages[0].n_k, basis, cfg)

    def fg(x):
        return joint_cost_and_grad(sample, unpack_stages(layout, x, stages), layout, basis, cfg, mode)

    kink = _mask_state(sample, stages, layout, basis, cfg, mode) if sample.box is not None else None
    return Problem(fg, pack_stages(layout, stages), kink)


def input_problem(sample, u_prev, sp, basis, cfg, direction, mode="symmetric"):
    """Objective ``<w, u_t(u_prev)>`` as a function of ``u_prev``; its gradient is the
    transposed stage Jacobian applied to ``w``."""
    from .objective import stage_backward

    def fg(x):
        u = x.reshape(u_prev.shape)
        cache = stage_forward(u, sample, sp, basis, cfg, mode)
        g = stage_backward(cache, sample, sp, basis, cfg, direction, mode, need_params=False)[3]
        return float(np.sum(direction * cache.out)), g.ravel()

    kink = None
    if sample.box is not None:
        def kink(x):
            return stage_forward(x.reshape(u_prev.shape), sample, sp, basis, cfg, mode).mask.tobytes()
    return Problem(fg, u_prev.ravel().copy(), kink)
