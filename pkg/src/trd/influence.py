"""Influence functions parameterized as weighted sums of equidistant radial basis atoms."""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels

KINDS = {"gaussian": _kernels.GAUSSIAN, "triangular": _kernels.TRIANGULAR}


@dataclass(frozen=True)
class RbfConfig:
    """Shared layout of the basis: ``M`` atoms with centers spanning ``[-R, R]``.

    ``gamma`` defaults to the center spacing, so neighbouring Gaussian atoms
    cross at ``exp(-1/2)``.
    """

    kind: str = "gaussian"
    M: int = 63
    R: float = 310.0
    gamma: float = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown RBF kind {self.kind!r}")
        if int(self.M) != self.M or self.M < 2:
            raise ValueError("RBF count M must be an integer >= 2")
        if not self.R > 0:
            raise ValueError("RBF radius R must be positive")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "R", float(self.R))
        if self.gamma is None:
            object.__setattr__(self, "gamma", self.spacing)
        object.__setattr__(self, "gamma", float(self.gamma))
        if not self.gamma > 0:
            raise ValueError("RBF scale gamma must be positive")

    @property
    def spacing(self):
        return 2.0 * self.R / (self.M - 1)

    @property
    def centers(self):
        return -self.R + self.spacing * np.arange(self.M)

    def _args(self):
        return self.M, -self.R, self.spacing, self.gamma, KINDS[self.kind]


@dataclass(frozen=True)
class RbfMixture:
    config: RbfConfig
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).ravel()
        if w.size != self.config.M:
            raise ValueError(f"expected {self.config.M} weights, got {w.size}")
        if not np.all(np.isfinite(w)):
            raise ValueError("RBF weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __call__(self, z):
        return phi_eval(self, z)


def basis_eval(cfg, z):
    """Responses of all ``M`` atoms at ``z``; shape ``z.shape + (M,)``."""
    z = np.asarray(z, dtype=np.float64)
    return _kernels.basis(z.ravel(), *cfg._args()).reshape(z.shape + (cfg.M,))


def basis_slope(cfg, z):
    """Derivatives of every atom with respect to ``z``; shape ``z.shape + (M,)``."""
    z = np.asarray(z, dtype=np.float64)
    return _kernels.basis_slope(z.ravel(), *cfg._args()).reshape(z.shape + (cfg.M,))


def phi_and_deriv(mix, z):
    """``(phi(z), phi'(z))`` evaluated pointwise in a single pass."""
    z = np.asarray(z, dtype=np.float64)
    M, mu0, step, gamma, kind = mix.config._args()
    phi, dphi = _kernels.rbf_phi(np.atleast_1d(z), mix.weights, mu0, step, gamma, kind)
    return phi.reshape(z.shape), dphi.reshape(z.shape)


def phi_eval(mix, z):
    out = phi_and_deriv(mix, z)[0]
    return float(out) if out.ndim == 0 else out


def phi_deriv(mix, z):
    """Analytic derivative of :func:`phi_eval`.

    Triangular atoms use the left derivative at their three kinks.
    """
    out = phi_and_deriv(mix, z)[1]
    return float(out) if out.ndim == 0 else out


def basis_dot(cfg, z, e):
    """``sum_p e[p] * basis_j(z[p])`` for every atom ``j`` (the weight gradient)."""
    M, mu0, step, gamma, kind = cfg._args()
    return _kernels.rbf_basis_dot(np.asarray(z, dtype=np.float64), np.asarray(e, dtype=np.float64),
                                  M, mu0, step, gamma, kind)


def fit_weights(cfg, z, y, ridge=1e-8):
    """Least-squares weights so that the mixture matches samples ``(z, y)``.

    Solves the ridge-stabilised normal equations.  Raises ``ValueError`` when
    the samples cannot pin down the weights even with the ridge.
    """
    z = np.asarray(z, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if z.size != y.size:
        raise ValueError("z and y must have the same length")
    if z.size < cfg.M:
        raise ValueError(f"need at least M={cfg.M} samples, got {z.size}")
    B = basis_eval(cfg, z)
    A = B.T @ B
    A[np.diag_indices_from(A)] += ridge
    rhs = B.T @ y
    try:
        w = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise ValueError("RBF fit is rank deficient") from exc
    if not np.all(np.isfinite(w)) or np.linalg.cond(A) > 1e14:
        raise ValueError("RBF fit is rank deficient")
    return RbfMixture(cfg, w)


def plain_influence(z):
    """The hand-designed starting point ``2z / (1 + z^2)``."""
    z = np.asarray(z, dtype=np.float64)
    return 2.0 * z / (1.0 + z * z)


def fit_plain(cfg, samples=1000):
    z = np.linspace(-cfg.R, cfg.R, samples)
    return fit_weights(cfg, z, plain_influence(z))


def rho_eval(mix, z, step=None):
    """Penalty ``rho(z) = integral_0^z phi(s) ds`` by the trapezoid rule.

    The grid is anchored at 0 with spacing ``step`` (default ``gamma / 10``);
    the last partial interval ends exactly at ``z``.
    """
    z = np.asarray(z, dtype=np.float64)
    h = mix.config.gamma / 10.0 if step is None else float(step)
    if not h > 0:
        raise ValueError("step must be positive")
    zmax = float(np.max(np.abs(z))) if z.size else 0.0
    n = int(np.ceil(zmax / h)) + 1
    grid = h * np.arange(n + 1)
    out = np.empty(z.shape)
    flat = z.ravel()
    res = out.ravel()
    for sign in (1.0, -1.0):
        knots = sign * grid
        f = phi_eval(mix, knots)
        cum = np.concatenate(([0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * h)))
        sel = flat * sign >= 0.0
        a = np.abs(flat[sel])
        k = np.floor(a / h).astype(np.int64)
        tail = a - k * h
        fz = np.atleast_1d(phi_eval(mix, flat[sel]))
        res[sel] = sign * (cum[k] + 0.5 * (f[k] + fz) * tail)
    out = res.reshape(z.shape)
    return float(out) if out.ndim == 0 else out
