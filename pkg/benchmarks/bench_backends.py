"""Compare the numba kernels against their pure-numpy twins.

Run:  python3 benchmarks/bench_backends.py [--sizes 256 512] [--repeat 3]

Prints per-kernel seconds for each backend, the speedup and the largest
relative disagreement, then a full T-stage inference timing.
"""

import argparse
import time

import numpy as np

from trd import _kernels
from trd.bench import time_inference
from trd.influence import RbfConfig
from trd.model import init_model


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def rel_diff(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def kernel_cases(size, rng):
    cfg = RbfConfig()
    M, mu0, step, gamma, kind = cfg._args()
    P = rng.normal(0, 50, (size + 4, size + 4))
    k = rng.normal(0, 1, (5, 5))
    g = rng.normal(0, 1, (size, size))
    z = rng.uniform(-300, 300, (size, size))
    w = rng.normal(0, 1, M)
    return {
        "correlate_valid": lambda impl: impl.correlate_valid(P, k),
        "correlate_taps": lambda impl: impl.correlate_taps(P, g, 5, 5),
        "rbf_phi": lambda impl: impl.rbf_phi(z, w, mu0, step, gamma, kind)[0],
        "rbf_basis_dot": lambda impl: impl.rbf_basis_dot(z, g, M, mu0, step, gamma, kind),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[256, 512])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels.numba_impl is None:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'size':>6}{'numba s':>10}{'numpy s':>10}{'speedup':>9}{'rel diff':>11}")
    for size in args.sizes:
        for name, fn in kernel_cases(size, rng).items():
            fn(_kernels.numba_impl)  # compile
            tb, ob = best_of(lambda: fn(_kernels.numba_impl), args.repeat)
            tn, on = best_of(lambda: fn(_kernels.numpy_impl), args.repeat)
            print(f"{name:<16}{size:>6}{tb:>10.4f}{tn:>10.4f}{tn / tb:>8.1f}x{rel_diff(ob, on):>11.1e}")
    model = init_model("denoise", 5, 5, sigma=25.0)
    print("\nfull inference, T=5 m=5 n_k=24 M=63")
    for backend in ("numba", "numpy"):
        times = time_inference(model, args.sizes, backend, args.repeat)
        print(f"{backend:<8}" + "".join(f"{s:>6}^2 {t:8.3f}s" for s, t in zip(args.sizes, times)))


if __name__ == "__main__":
    main()
