"""Greedy (stage-by-stage) and joint training drivers."""

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..model import TrdModel, plain_stage
from .lbfgs import LbfgsConfig, NonFiniteObjective, lbfgs_minimize
from .objective import (joint_cost_and_grad, layout_for, pack_stages, run_stage,
                        stage_cost_and_grad, unpack_stages)

log = logging.getLogger(__name__)


def thread_count():
    """Evaluation parallelism from ``TRD_THREADS`` (default 1)."""
    raw = os.environ.get("TRD_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"TRD_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"TRD_THREADS must be a positive integer, got {raw!r}")
    return n


def map_samples(fn, items):
    """Evaluate ``fn`` over ``items``; results come back in input order."""
    n = min(thread_count(), len(items))
    if n <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def summed(results):
    """Fixed-order reduction of per-sample ``(cost, grad)`` pairs."""
    cost = 0.0
    grad = np.zeros_like(results[0][1])
    for c, g in results:
        cost += c
        grad += g
    return cost, grad


@dataclass
class TrainConfig:
    T: int = 5
    m: int = 5
    n_k: int = None
    rbf: object = None
    lbfgs: LbfgsConfig = field(default_factory=LbfgsConfig)
    joint_iters: int = None
    train_filters: bool = True
    train_weights: bool = True
    mode: str = "symmetric"


@dataclass
class TrainLog:
    greedy: list = field(default_factory=list)      # per stage: cost history
    greedy_start: list = field(default_factory=list)  # per stage: chosen starting point
    joint: list = field(default_factory=list)
    status: list = field(default_factory=list)
    wall: float = 0.0

    @property
    def greedy_cost(self):
        return self.greedy[-1][-1] if self.greedy else math.nan

    @property
    def joint_cost(self):
        return self.joint[-1] if self.joint else math.nan


def _check_data(data):
    if not data:
        raise ValueError("training needs at least one sample")
    tasks = {s.task for s in data}
    if len(tasks) != 1:
        raise ValueError("training samples mix denoising and deblocking")
    return tasks.pop()


def _finite_or_raise(cost, what):
    if not math.isfinite(cost):
        raise NonFiniteObjective(f"non-finite training cost {cost} {what}")


def greedy_train(data, task, cfg, sigma=None, quality=None, train_log=None):
    """Train ``cfg.T`` stages one after another, earlier stages frozen.

    Each stage starts from whichever of (previous stage's parameters, plain
    initialization) has the lower cost; stage 1 starts from the plain init.
    """
    if _check_data(data) != task:
        raise ValueError(f"samples do not match task {task!r}")
    from ..influence import RbfConfig

    rbf = cfg.rbf or RbfConfig()
    n_k = cfg.n_k or cfg.m * cfg.m - 1
    model = TrdModel(task, cfg.m, n_k, rbf, [], sigma=sigma, quality=quality)
    basis = model.basis
    layout = layout_for(task, n_k, basis, rbf, cfg.train_filters, cfg.train_weights)
    plain = plain_stage(task, cfg.m, n_k, rbf)
    train_log = train_log if train_log is not None else TrainLog()
    t0 = time.perf_counter()
    inputs = [s.f_n for s in data]
    for t in range(cfg.T):
        def fg(x, inputs=inputs):
            sp = layout.unpack(x, plain)
            res = map_samples(lambda pair: stage_cost_and_grad(pair[0], pair[1], sp, layout,
                                                               basis, rbf, cfg.mode),
                              list(zip(data, inputs)))
            return summed(res)

        candidates = [("plain", plain)]
        if model.stages:
            candidates.insert(0, ("previous", model.stages[-1]))
        scored = []
        for name, sp in candidates:
            x = layout.pack(sp)
            scored.append((fg(x)[0], name, x))
        start_cost, start_name, x0 = min(scored, key=lambda c: c[0])
        _finite_or_raise(start_cost, f"at the start of stage {t + 1}")
        res = lbfgs_minimize(fg, x0, cfg.lbfgs)
        _finite_or_raise(res.f, f"after stage {t + 1}")
        sp = layout.unpack(res.x, plain)
        model.stages.append(sp)
        train_log.greedy.append(res.history)
        train_log.greedy_start.append(start_name)
        train_log.status.append(res.status)
        log.info("stage %d: cost %.6g -> %.6g (%s, %d its)", t + 1, res.history[0], res.f,
                 res.status, res.iterations)
        inputs = [run_stage(s, u, sp, basis, rbf, cfg.mode) for s, u in zip(data, inputs)]
    train_log.wall += time.perf_counter() - t0
    model.trained_mode = "greedy"
    return model


def joint_train(data, model, cfg, train_log=None):
    """Fine-tune all stages together against the final-stage loss."""
    if _check_data(data) != model.task:
        raise ValueError(f"samples do not match task {model.task!r}")
    basis, rbf = model.basis, model.rbf
    layout = layout_for(model.task, model.n_k, basis, rbf, cfg.train_filters, cfg.train_weights)
    templates = [sp.copy() for sp in model.stages]
    train_log = train_log if train_log is not None else TrainLog()
    t0 = time.perf_counter()

    def fg(x):
        stages = unpack_stages(layout, x, templates)
        res = map_samples(lambda s: joint_cost_and_grad(s, stages, layout, basis, rbf, cfg.mode),
                          data)
        return summed(res)

    iters = cfg.joint_iters if cfg.joint_iters is not None else cfg.lbfgs.max_iters
    lcfg = LbfgsConfig(cfg.lbfgs.memory, iters, cfg.lbfgs.c1, cfg.lbfgs.c2, cfg.lbfgs.gtol)
    res = lbfgs_minimize(fg, pack_stages(layout, templates), lcfg)
    _finite_or_raise(res.f, "after joint training")
    out = TrdModel(model.task, model.m, model.n_k, rbf, unpack_stages(layout, res.x, templates),
                   sigma=model.sigma, quality=model.quality, trained_mode="joint")
    train_log.joint = res.history
    train_log.status.append(res.status)
    train_log.wall += time.perf_counter() - t0
    log.info("joint: cost %.6g -> %.6g (%s, %d its)", res.history[0], res.f, res.status,
             res.iterations)
    return out


def training_cost(data, model, mode="symmetric"):
    """Sum over samples of the final-stage loss."""
    from ..diffusion import denoise_stage, deblock_stage

    total = 0.0
    for s in data:
        u = s.f_n
        for sp in model.stages:
            if s.box is None:
                u = denoise_stage(u, s.f_n, sp, model.basis, model.rbf, mode)
            else:
                u = deblock_stage(u, s.box, sp, model.basis, model.rbf, mode)
        d = u - s.u_gt
        total += 0.5 * float(np.sum(d * d))
    return total


def add_noise(img, sigma, seed):
    """``img`` plus i.i.d. N(0, sigma^2) noise from a seeded PCG64 stream."""
    if not sigma >= 0:
        raise ValueError("sigma must be non-negative")
    img = np.asarray(img, dtype=np.float64)
    if sigma == 0:
        return img.copy()
    rng = np.random.default_rng(seed)
    return img + sigma * rng.standard_normal(img.shape)
