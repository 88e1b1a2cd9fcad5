"""Limited-memory BFGS with a strong Wolfe line search."""

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LbfgsConfig:
    memory: int = 10
    max_iters: int = 200
    c1: float = 1e-4
    c2: float = 0.9
    gtol: float = 1e-6          # stop when |g| <= gtol * |g0|
    max_zoom: int = 30
    max_bracket: int = 30

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")
        if self.memory < 1 or self.max_iters < 0:
            raise ValueError("memory must be >= 1 and max_iters >= 0")


@dataclass
class LbfgsResult:
    x: np.ndarray
    f: float
    grad: np.ndarray
    iterations: int
    evaluations: int
    status: str
    history: list = field(default_factory=list)


class NonFiniteObjective(FloatingPointError):
    pass


def _cubic_min(a, fa, da, b, fb, db):
    """Minimiser of the cubic interpolating two points with slopes, or None."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(disc)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


class _LineSearch:
    def __init__(self, fg, x, f0, g0, d, cfg, tracker):
        self.fg, self.x, self.d, self.cfg = fg, x, d, cfg
        self.f0, self.dphi0 = f0, float(g0 @ d)
        self.track = tracker

    def phi(self, a):
        f, g = self.fg(self.x + a * self.d)
        self.track(self.x + a * self.d, f, g)
        if not np.isfinite(f):
            return np.inf, np.nan, g
        return f, float(g @ self.d), g

    def armijo(self, a, f):
        return f <= self.f0 + self.cfg.c1 * a * self.dphi0

    def curvature(self, dphi):
        return abs(dphi) <= -self.cfg.c2 * self.dphi0

    def run(self, a):
        a_prev, f_prev, dp_prev = 0.0, self.f0, self.dphi0
        for i in range(self.cfg.max_bracket):
            f, dp, g = self.phi(a)
            if not np.isfinite(f) or not self.armijo(a, f) or (i > 0 and f >= f_prev):
                return self.zoom(a_prev, f_prev, dp_prev, a, f, dp)
            if self.curvature(dp):
                return a, f, g
            if dp >= 0:
                return self.zoom(a, f, dp, a_prev, f_prev, dp_prev)
            a_prev, f_prev, dp_prev = a, f, dp
            a = 2.0 * a
        return None

    def zoom(self, lo, f_lo, dp_lo, hi, f_hi, dp_hi):
        for _ in range(self.cfg.max_zoom):
            a = None
            if np.isfinite(f_hi) and np.isfinite(dp_hi):
                a = _cubic_min(lo, f_lo, dp_lo, hi, f_hi, dp_hi)
            left, right = min(lo, hi), max(lo, hi)
            margin = 0.1 * (right - left)
            if a is None or not (left + margin <= a <= right - margin):
                a = 0.5 * (lo + hi)
            f, dp, g = self.phi(a)
            if not np.isfinite(f) or not self.armijo(a, f) or f >= f_lo:
                hi, f_hi, dp_hi = a, f, dp
            else:
                if self.curvature(dp):
                    return a, f, g
                if dp * (hi - lo) >= 0:
                    hi, f_hi, dp_hi = lo, f_lo, dp_lo
                lo, f_lo, dp_lo = a, f, dp
            if abs(hi - lo) <= 1e-16 * max(1.0, abs(lo)):
                break
        return None


def lbfgs_minimize(fg, x0, cfg=None, callback=None):
    """Minimise ``f`` given ``fg(x) -> (f, grad)`` starting from ``x0``.

    Returns the best iterate seen.  ``history`` holds the cost after every
    accepted iteration, starting with the cost at ``x0``.
    """
    cfg = cfg or LbfgsConfig()
    x = np.array(x0, dtype=np.float64)
    f, g = fg(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NonFiniteObjective(f"objective is not finite at the starting point (f={f})")
    evals = [1]
    best = {"x": x.copy(), "f": f, "g": g.copy()}

    def track(xt, ft, gt):
        evals[0] += 1
        if np.isfinite(ft) and ft < best["f"] and np.all(np.isfinite(gt)):
            best.update(x=xt.copy(), f=ft, g=np.array(gt, copy=True))

    history = [f]
    g0norm = np.linalg.norm(g)
    pairs = deque(maxlen=cfg.memory)
    status = "max_iters"
    it = 0
    for it in range(1, cfg.max_iters + 1):
        if np.linalg.norm(g) <= cfg.gtol * max(g0norm, 1e-300):
            status = "converged"
            it -= 1
            break
        # two-loop recursion
        q = -g.copy()
        alphas = []
        for s, y, rho in reversed(pairs):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        if pairs:
            s, y, _ = pairs[-1]
            q *= (s @ y) / (y @ y)
        for (s, y, rho), a in zip(pairs, reversed(alphas)):
            b = rho * (y @ q)
            q += (a - b) * s
        d = q
        if not g @ d < 0:
            pairs.clear()
            d = -g
        step0 = 1.0 if pairs else min(1.0, 1.0 / max(np.linalg.norm(g), 1e-300))
        ls = _LineSearch(fg, x, f, g, d, cfg, track)
        res = ls.run(step0)
        if res is None:
            log.warning("line search failed at iteration %d; returning best iterate", it)
            status = "line_search_failed"
            it -= 1
            break
        a, f_new, g_new = res
        s = a * d
        y = g_new - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / sy))
        x = x + s
        rel_change = abs(f - f_new) / max(abs(f), abs(f_new), 1e-300)
        f, g = f_new, g_new
        history.append(f)
        if callback is not None:
            callback(it, x, f)
        if rel_change < 1e-15:
            status = "stalled"
            break
    return LbfgsResult(best["x"], best["f"], best["g"], it, evals[0], status, history)
