"""Loss, stage forward/backward passes and parameter packing.

Every stage is ``u_t = S(u_{t-1}; theta_t)`` and the gradients below are the
exact transposes of the forward linearisation under the chosen boundary mode
(symmetric padding included), so finite differences certify them directly.
"""

from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..imgproc import as_image, dct_blocks, idct_blocks, block_dct, block_idct, pad, pad_adjoint, rot180
from ..influence import basis_dot, phi_and_deriv
from ..jpegsim import QBox, interior_mask, proj_q
from ..model import StageParams


def loss(u, u_gt):
    u = np.asarray(u, dtype=np.float64)
    u_gt = np.asarray(u_gt, dtype=np.float64)
    if u.shape != u_gt.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {u_gt.shape}")
    d = u - u_gt
    return 0.5 * float(np.sum(d * d))


@dataclass
class TrainSample:
    """One training pair.  ``f_n`` is the degraded input; ``box`` is set for deblocking."""

    f_n: np.ndarray
    u_gt: np.ndarray
    box: QBox = None

    def __post_init__(self):
        self.f_n = as_image(self.f_n)
        self.u_gt = as_image(self.u_gt)
        if self.box is not None and self.f_n.shape != self.box.shape:
            raise ValueError("deblocking samples must live on the padded block grid")
        if self.f_n.shape != self.u_gt.shape:
            raise ValueError(f"shape mismatch {self.f_n.shape} vs {self.u_gt.shape}")

    @property
    def task(self):
        return "deblock" if self.box is not None else "denoise"


# ---------------------------------------------------------------------------
# parameter vectors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StageLayout:
    """Where one stage's parameters sit inside a flat vector.

    ``train_filters`` / ``train_weights`` select which blocks are free; frozen
    blocks are taken from the template stage on unpacking.
    """

    n_k: int
    n_basis: int
    M: int
    has_lambda: bool
    train_filters: bool = True
    train_weights: bool = True

    @property
    def size(self):
        n = 0
        if self.train_filters:
            n += self.n_k * self.n_basis
        if self.train_weights:
            n += self.n_k * self.M
        return n + int(self.has_lambda)

    def pack(self, sp):
        parts = []
        if self.train_filters:
            parts.append(sp.coeffs.ravel())
        if self.train_weights:
            parts.append(sp.weights.ravel())
        if self.has_lambda:
            parts.append([sp.log_lambda])
        return np.concatenate(parts) if parts else np.zeros(0)

    def unpack(self, x, template):
        x = np.asarray(x, dtype=np.float64)
        if x.size != self.size:
            raise ValueError(f"expected {self.size} parameters, got {x.size}")
        pos = 0
        coeffs, weights = template.coeffs, template.weights
        if self.train_filters:
            n = self.n_k * self.n_basis
            coeffs = x[pos:pos + n].reshape(self.n_k, self.n_basis).copy()
            pos += n
        if self.train_weights:
            n = self.n_k * self.M
            weights = x[pos:pos + n].reshape(self.n_k, self.M).copy()
            pos += n
        log_lambda = float(x[pos]) if self.has_lambda else template.log_lambda
        return StageParams(coeffs.copy(), weights.copy(), log_lambda)

    def pack_grad(self, g_coeffs, g_weights, g_loglam):
        parts = []
        if self.train_filters:
            parts.append(g_coeffs.ravel())
        if self.train_weights:
            parts.append(g_weights.ravel())
        if self.has_lambda:
            parts.append([g_loglam])
        return np.concatenate(parts) if parts else np.zeros(0)


def layout_for(task, n_k, basis, cfg, train_filters=True, train_weights=True):
    return StageLayout(n_k, basis.size, cfg.M, task == "denoise", train_filters, train_weights)


def pack_stages(layout, stages):
    return np.concatenate([layout.pack(sp) for sp in stages])


def unpack_stages(layout, x, templates):
    x = np.asarray(x, dtype=np.float64)
    if x.size != layout.size * len(templates):
        raise ValueError(f"expected {layout.size * len(templates)} parameters, got {x.size}")
    return [layout.unpack(x[t * layout.size:(t + 1) * layout.size], sp)
            for t, sp in enumerate(templates)]


# ---------------------------------------------------------------------------
# one stage, forward with cache and backward
# ---------------------------------------------------------------------------

@dataclass
class StageCache:
    u_prev: np.ndarray
    P: np.ndarray          # padded u_prev
    kernels: np.ndarray    # (n_k, m, m)
    v: list                # filter responses
    dphi: list             # phi'(v)
    Pz: list               # padded phi(v)
    mask: np.ndarray = None  # interior mask of proj_Q (deblocking)
    out: np.ndarray = None


def stage_forward(u_prev, sample, sp, basis, cfg, mode="symmetric"):
    """Apply one stage and keep everything the backward pass needs."""
    r = basis.m // 2
    P = pad(u_prev, r, mode)
    kernels = sp.kernels(basis)
    diff = np.zeros_like(u_prev)
    vs, ds, pzs = [], [], []
    for k, mix in zip(kernels, sp.mixtures(cfg)):
        v = _kernels.correlate_valid(P, k)
        z, dz = phi_and_deriv(mix, v)
        Pz = pad(z, r, mode)
        diff += _kernels.correlate_valid(Pz, rot180(k))
        vs.append(v)
        ds.append(dz)
        pzs.append(Pz)
    cache = StageCache(u_prev, P, kernels, vs, ds, pzs)
    if sample.box is None:
        cache.out = u_prev - (diff + sp.lam * (u_prev - sample.f_n))
    else:
        c = block_dct(u_prev - diff)
        cache.mask = interior_mask(c, sample.box)
        cache.out = block_idct(proj_q(c, sample.box))
    return cache


def _valid_adjoint(g, k):
    """Transpose of ``P -> correlate_valid(P, k)``: full correlation with rot180(k)."""
    kh, kw = k.shape
    G = np.pad(g, ((kh - 1, kh - 1), (kw - 1, kw - 1)))
    return _kernels.correlate_valid(G, rot180(k))


def stage_backward(cache, sample, sp, basis, cfg, upstream, mode="symmetric",
                   need_params=True, need_input=True):
    """Return ``(grad_coeffs, grad_weights, grad_log_lambda, grad_u_prev)``.

    All gradients are products of the transposed stage Jacobian with ``upstream``.
    """
    r = basis.m // 2
    g = np.asarray(upstream, dtype=np.float64)
    if cache.mask is not None:
        # u_t = D^T proj(D y): Jacobian D^T diag(mask) D with the linear (unshifted) DCT
        g = idct_blocks(cache.mask * dct_blocks(g))
    n_k = len(cache.v)
    g_coeffs = np.zeros((n_k, basis.size))
    g_weights = np.zeros((n_k, cfg.M))
    g_loglam = 0.0
    if sample.box is None:
        lam = sp.lam
        if need_params and sp.log_lambda is not None:
            g_loglam = -lam * float(np.sum(g * (cache.u_prev - sample.f_n)))
        g_u = (1.0 - lam) * g
    else:
        g_u = g.copy()
    # y = u - sum_i A_kbar(pad(phi(A_k(pad(u))))); dL/dy = g
    g_P = np.zeros_like(cache.P) if need_input else None
    flat_atoms = basis.flat
    for i, k in enumerate(cache.kernels):
        e = pad_adjoint(_valid_adjoint(g, rot180(k)), r, mode)  # A_kbar^T g on the phi grid
        q = -cache.dphi[i] * e                                  # dL/dv_i
        if need_params:
            g_weights[i] = -basis_dot(cfg, cache.v[i], e)
            g_kbar = -_kernels.correlate_taps(cache.Pz[i], g, k.shape[0], k.shape[1])
            g_k = rot180(g_kbar) + _kernels.correlate_taps(cache.P, q, k.shape[0], k.shape[1])
            g_coeffs[i] = flat_atoms @ g_k.ravel()
        if need_input:
            g_P += _valid_adjoint(q, k)
    if need_input:
        g_u = g_u + pad_adjoint(g_P, r, mode)
    return g_coeffs, g_weights, g_loglam, (g_u if need_input else None)


def stage_param_grad(sample, u_prev, sp, basis, cfg, upstream, mode="symmetric"):
    """``(d u_t / d theta_t)^T upstream`` as ``(coeffs, weights, log_lambda)`` gradients."""
    cache = stage_forward(as_image(u_prev), sample, sp, basis, cfg, mode)
    gc, gw, gl, _ = stage_backward(cache, sample, sp, basis, cfg, upstream, mode, need_input=False)
    return gc, gw, gl


def stage_input_grad(sample, u_prev, sp, basis, cfg, upstream, mode="symmetric"):
    """``(d u_t / d u_{t-1})^T upstream``."""
    cache = stage_forward(as_image(u_prev), sample, sp, basis, cfg, mode)
    return stage_backward(cache, sample, sp, basis, cfg, upstream, mode, need_params=False)[3]


# ---------------------------------------------------------------------------
# per-sample costs used by the training drivers
# ---------------------------------------------------------------------------

def stage_cost_and_grad(sample, u_prev, sp, layout, basis, cfg, mode="symmetric"):
    """Greedy objective of one sample: loss of the stage output and its parameter gradient."""
    cache = stage_forward(u_prev, sample, sp, basis, cfg, mode)
    resid = cache.out - sample.u_gt
    gc, gw, gl, _ = stage_backward(cache, sample, sp, basis, cfg, resid, mode, need_input=False)
    return 0.5 * float(np.sum(resid * resid)), layout.pack_grad(gc, gw, gl)


def joint_cost_and_grad(sample, stages, layout, basis, cfg, mode="symmetric"):
    """Loss of the last stage's output and the gradient over all stages (backpropagation)."""
    u = sample.f_n
    caches = []
    for sp in stages:
        cache = stage_forward(u, sample, sp, basis, cfg, mode)
        caches.append(cache)
        u = cache.out
    g = u - sample.u_gt
    cost = 0.5 * float(np.sum(g * g))
    grads = [None] * len(stages)
    for t in range(len(stages) - 1, -1, -1):
        gc, gw, gl, g_in = stage_backward(caches[t], sample, stages[t], basis, cfg, g, mode,
                                          need_input=t > 0)
        grads[t] = layout.pack_grad(gc, gw, gl)
        g = g_in
    return cost, np.concatenate(grads)


def run_stage(sample, u_prev, sp, basis, cfg, mode="symmetric"):
    return stage_forward(u_prev, sample, sp, basis, cfg, mode).out
