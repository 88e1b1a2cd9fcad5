"""Hot inner loops, compiled with numba when available.

Every kernel has a pure-numpy twin with the same signature.  The backend is
chosen once at import time: set ``TRD_PURE_NUMPY=1`` to force the numpy path
(handy when numba is missing or when debugging).  Both implementations stay
importable as ``numba_impl`` / ``numpy_impl`` so benchmarks and tests can call
them side by side.
"""

import os
from types import SimpleNamespace

import numpy as np

GAUSSIAN = 0
TRIANGULAR = 1

_FLAG = os.environ.get("TRD_PURE_NUMPY", "").strip().lower()
_WANT_NUMBA = _FLAG in ("", "0", "false", "no")

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# numpy reference path
# ---------------------------------------------------------------------------

def _np_correlate_valid(P, k):
    kh, kw = k.shape
    H = P.shape[0] - kh + 1
    W = P.shape[1] - kw + 1
    out = np.zeros((H, W))
    for a in range(kh):
        for b in range(kw):
            if k[a, b] != 0.0:
                out += k[a, b] * P[a:a + H, b:b + W]
    return out


def _np_correlate_taps(P, g, kh, kw):
    H, W = g.shape
    out = np.empty((kh, kw))
    for a in range(kh):
        for b in range(kw):
            out[a, b] = np.sum(g * P[a:a + H, b:b + W])
    return out


def _np_basis(z, M, mu0, step, gamma, kind):
    t = z.reshape(-1, 1) - (mu0 + step * np.arange(M))
    if kind == GAUSSIAN:
        return np.exp(-(t * t) / (2.0 * gamma * gamma))
    return np.maximum(0.0, 1.0 - np.abs(t) / gamma)


def _np_basis_slope(z, M, mu0, step, gamma, kind):
    t = z.reshape(-1, 1) - (mu0 + step * np.arange(M))
    if kind == GAUSSIAN:
        return -t / (gamma * gamma) * np.exp(-(t * t) / (2.0 * gamma * gamma))
    # left derivative of the hat: kinks take the slope of the segment to their left
    up = (t > -gamma) & (t <= 0.0)
    down = (t > 0.0) & (t <= gamma)
    return (up.astype(float) - down.astype(float)) / gamma


def _np_rbf_phi(z, w, mu0, step, gamma, kind):
    flat = z.ravel()
    phi = np.empty(flat.size)
    dphi = np.empty(flat.size)
    chunk = 65536
    for s in range(0, flat.size, chunk):
        part = flat[s:s + chunk]
        phi[s:s + chunk] = _np_basis(part, w.size, mu0, step, gamma, kind) @ w
        dphi[s:s + chunk] = _np_basis_slope(part, w.size, mu0, step, gamma, kind) @ w
    return phi.reshape(z.shape), dphi.reshape(z.shape)


def _np_rbf_basis_dot(z, e, M, mu0, step, gamma, kind):
    flat = z.ravel()
    ef = e.ravel()
    out = np.zeros(M)
    chunk = 65536
    for s in range(0, flat.size, chunk):
        out += ef[s:s + chunk] @ _np_basis(flat[s:s + chunk], M, mu0, step, gamma, kind)
    return out


numpy_impl = SimpleNamespace(
    correlate_valid=_np_correlate_valid,
    correlate_taps=_np_correlate_taps,
    basis=_np_basis,
    basis_slope=_np_basis_slope,
    rbf_phi=_np_rbf_phi,
    rbf_basis_dot=_np_rbf_basis_dot,
    name="numpy",
)


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _nb_correlate_valid(P, k):
        kh, kw = k.shape
        H = P.shape[0] - kh + 1
        W = P.shape[1] - kw + 1
        out = np.zeros((H, W))
        for y in range(H):
            for x in range(W):
                acc = 0.0
                for a in range(kh):
                    for b in range(kw):
                        acc += k[a, b] * P[y + a, x + b]
                out[y, x] = acc
        return out

    @njit(cache=True, nogil=True)
    def _nb_correlate_taps(P, g, kh, kw):
        H, W = g.shape
        out = np.zeros((kh, kw))
        for a in range(kh):
            for b in range(kw):
                acc = 0.0
                for y in range(H):
                    for x in range(W):
                        acc += g[y, x] * P[y + a, x + b]
                out[a, b] = acc
        return out

    @njit(cache=True, nogil=True)
    def _nb_atom(t, gamma, kind):
        if kind == 0:
            return np.exp(-(t * t) / (2.0 * gamma * gamma))
        r = 1.0 - abs(t) / gamma
        return r if r > 0.0 else 0.0

    @njit(cache=True, nogil=True)
    def _nb_atom_slope(t, gamma, kind):
        if kind == 0:
            return -t / (gamma * gamma) * np.exp(-(t * t) / (2.0 * gamma * gamma))
        if t > -gamma and t <= 0.0:
            return 1.0 / gamma
        if t > 0.0 and t <= gamma:
            return -1.0 / gamma
        return 0.0

    @njit(cache=True, nogil=True)
    def _nb_gauss_row(z, M, mu0, step, gamma, row):
        # exp(-(z-mu_j)^2 / 2g^2) for all j with two exps: start at the nearest
        # centre and walk outwards multiplying by ratios that never exceed 1.
        inv = 1.0 / (2.0 * gamma * gamma)
        j0 = int(np.floor((z - mu0) / step + 0.5))
        if j0 < 0:
            j0 = 0
        elif j0 > M - 1:
            j0 = M - 1
        t0 = z - (mu0 + step * j0)
        e0 = np.exp(-t0 * t0 * inv)
        row[j0] = e0
        q = np.exp(-2.0 * step * step * inv)
        # upward: e_{j+1} = e_j * r_j,  r_j = exp((2 t_j step - step^2) inv), r_{j+1} = r_j q
        r = np.exp((2.0 * t0 * step - step * step) * inv)
        e = e0
        for j in range(j0 + 1, M):
            e *= r
            r *= q
            row[j] = e
        r = np.exp((-2.0 * t0 * step - step * step) * inv)
        e = e0
        for j in range(j0 - 1, -1, -1):
            e *= r
            r *= q
            row[j] = e

    @njit(cache=True, nogil=True)
    def _nb_row(z, M, mu0, step, gamma, kind, row):
        if kind == 0:
            _nb_gauss_row(z, M, mu0, step, gamma, row)
        else:
            for j in range(M):
                row[j] = _nb_atom(z - (mu0 + step * j), gamma, kind)

    @njit(cache=True, nogil=True)
    def _nb_basis(z, M, mu0, step, gamma, kind):
        flat = z.ravel()
        out = np.empty((flat.size, M))
        row = np.empty(M)
        for p in range(flat.size):
            _nb_row(flat[p], M, mu0, step, gamma, kind, row)
            for j in range(M):
                out[p, j] = row[j]
        return out

    @njit(cache=True, nogil=True)
    def _nb_basis_slope(z, M, mu0, step, gamma, kind):
        flat = z.ravel()
        out = np.empty((flat.size, M))
        row = np.empty(M)
        g2 = gamma * gamma
        for p in range(flat.size):
            if kind == 0:
                _nb_gauss_row(flat[p], M, mu0, step, gamma, row)
                for j in range(M):
                    out[p, j] = -(flat[p] - (mu0 + step * j)) / g2 * row[j]
            else:
                for j in range(M):
                    out[p, j] = _nb_atom_slope(flat[p] - (mu0 + step * j), gamma, kind)
        return out

    @njit(cache=True, nogil=True)
    def _nb_rbf_phi_flat(flat, w, mu0, step, gamma, kind):
        M = w.size
        phi = np.empty(flat.size)
        dphi = np.empty(flat.size)
        row = np.empty(M)
        g2 = gamma * gamma
        for p in range(flat.size):
            s = 0.0
            d = 0.0
            if kind == 0:
                _nb_gauss_row(flat[p], M, mu0, step, gamma, row)
                for j in range(M):
                    s += w[j] * row[j]
                    d -= w[j] * (flat[p] - (mu0 + step * j)) / g2 * row[j]
            else:
                for j in range(M):
                    t = flat[p] - (mu0 + step * j)
                    s += w[j] * _nb_atom(t, gamma, kind)
                    d += w[j] * _nb_atom_slope(t, gamma, kind)
            phi[p] = s
            dphi[p] = d
        return phi, dphi

    def _nb_rbf_phi(z, w, mu0, step, gamma, kind):
        phi, dphi = _nb_rbf_phi_flat(np.ascontiguousarray(z).ravel(), w, mu0, step, gamma, kind)
        return phi.reshape(z.shape), dphi.reshape(z.shape)

    @njit(cache=True, nogil=True)
    def _nb_rbf_basis_dot_flat(flat, ef, M, mu0, step, gamma, kind):
        out = np.zeros(M)
        row = np.empty(M)
        for p in range(flat.size):
            e = ef[p]
            if e == 0.0:
                continue
            _nb_row(flat[p], M, mu0, step, gamma, kind, row)
            for j in range(M):
                out[j] += e * row[j]
        return out

    def _nb_rbf_basis_dot(z, e, M, mu0, step, gamma, kind):
        return _nb_rbf_basis_dot_flat(
            np.ascontiguousarray(z).ravel(), np.ascontiguousarray(e).ravel(),
            M, mu0, step, gamma, kind)

    numba_impl = SimpleNamespace(
        correlate_valid=_nb_correlate_valid,
        correlate_taps=_nb_correlate_taps,
        basis=lambda z, M, mu0, step, gamma, kind: _nb_basis(
            np.ascontiguousarray(z, dtype=np.float64), M, mu0, step, gamma, kind),
        basis_slope=lambda z, M, mu0, step, gamma, kind: _nb_basis_slope(
            np.ascontiguousarray(z, dtype=np.float64), M, mu0, step, gamma, kind),
        rbf_phi=_nb_rbf_phi,
        rbf_basis_dot=_nb_rbf_basis_dot,
        name="numba",
    )
else:  # pragma: no cover
    numba_impl = None


active = numba_impl if (HAVE_NUMBA and _WANT_NUMBA) else numpy_impl
BACKEND = active.name

correlate_valid = active.correlate_valid
correlate_taps = active.correlate_taps
basis = active.basis
basis_slope = active.basis_slope
rbf_phi = active.rbf_phi
rbf_basis_dot = active.rbf_basis_dot


_EXPORTED = ("correlate_valid", "correlate_taps", "basis", "basis_slope", "rbf_phi", "rbf_basis_dot")


def set_backend(name):
    """Switch the module-level kernels to ``"numba"`` or ``"numpy"``; returns the previous name."""
    global active, BACKEND
    impl = {"numpy": numpy_impl, "numba": numba_impl}.get(name)
    if impl is None:
        raise ValueError(f"backend {name!r} unavailable")
    previous = BACKEND
    active, BACKEND = impl, impl.name
    g = globals()
    for fn in _EXPORTED:
        g[fn] = getattr(impl, fn)
    return previous


class use_backend:
    """Context manager form of :func:`set_backend`."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        self.previous = set_backend(self.name)
        return self

    def __exit__(self, *exc):
        set_backend(self.previous)
