"""``trd`` command line: train, restore, degrade, evaluate, check gradients, export, bench.

Exit status: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

import argparse
import csv
import json
import logging
import os
import sys
import time

import numpy as np

from . import _kernels
from .diffusion import infer
from .imgproc import psnr
from .influence import RbfConfig, rho_eval, phi_eval
from .jpegsim import box_from_decoded, jpeg_degrade, pad_to_blocks
from .model import ModelFormatError, load_model, dumps_model
from .pgm import PgmError, load_pgm, save_pgm

log = logging.getLogger("trd")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _seed(text):
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser():
    p = _Parser(prog="trd", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    t = sub.add_parser("train", help="train a model on a directory of clean PGM images")
    t.add_argument("--task", choices=("denoise", "deblock"), required=True)
    t.add_argument("--sigma", type=float, help="noise level for --task denoise")
    t.add_argument("--quality", type=int, help="JPEG quality for --task deblock")
    t.add_argument("--stages", type=_positive_int, default=5)
    t.add_argument("--filter-size", type=int, default=5, choices=(3, 5, 7, 9))
    t.add_argument("--filters", type=_positive_int, help="filters per stage (default m*m-1)")
    t.add_argument("--rbf", choices=("gaussian", "triangular"), default="gaussian")
    t.add_argument("--rbf-count", type=int, default=63)
    t.add_argument("--rbf-radius", type=float, default=310.0)
    t.add_argument("--mode", choices=("greedy", "joint"), default="joint",
                   help="greedy only, or greedy followed by joint training")
    t.add_argument("--lbfgs-iters", type=int, default=200)
    t.add_argument("--train", choices=("all", "filters"), default="all",
                   help="'filters' freezes the influence functions at the plain init")
    t.add_argument("--data", required=True)
    t.add_argument("--holdout")
    t.add_argument("--seed", type=_seed, default=0)
    t.add_argument("--out", required=True)

    d = sub.add_parser("denoise", help="denoise one PGM image")
    d.add_argument("--model", required=True)
    d.add_argument("--in", dest="inp", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--stages", type=int, help="stop after this many stages (greedy models only)")

    b = sub.add_parser("deblock", help="remove blocking artifacts from a JPEG-decoded image")
    b.add_argument("--model", required=True)
    b.add_argument("--in", dest="inp", required=True,
                   help="decoded image (PGM; .jpg/.jpeg only with --strict)")
    b.add_argument("--out", required=True)
    b.add_argument("--quality", type=int, help="quality the image was compressed at (default: model's)")
    b.add_argument("--strict", action="store_true",
                   help="accept a real JPEG file: decode to gray, re-derive indices with our quantizer")
    b.add_argument("--stages", type=int)

    g = sub.add_parser("degrade", help="add Gaussian noise or simulate JPEG compression")
    g.add_argument("--task", choices=("denoise", "deblock"), required=True)
    g.add_argument("--sigma", type=float)
    g.add_argument("--quality", type=int)
    g.add_argument("--seed", type=_seed, default=0)
    g.add_argument("--in", dest="inp", required=True)
    g.add_argument("--out", required=True)

    e = sub.add_parser("eval", help="degrade, restore and report PSNR over a directory")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--seed", type=_seed, default=0)
    e.add_argument("--stages", type=int)

    c = sub.add_parser("gradcheck", help="finite-difference check of every gradient path")
    c.add_argument("--instances", type=_positive_int, default=20)
    c.add_argument("--h", type=float, default=1e-4)
    c.add_argument("--tol", type=float, default=1e-5)
    c.add_argument("--seed", type=_seed, default=0)

    x = sub.add_parser("export-influence", help="write z, phi, rho CSVs for every influence function")
    x.add_argument("--model", required=True)
    x.add_argument("--out-dir", required=True)
    x.add_argument("--samples", type=_positive_int, default=1000)

    n = sub.add_parser("bench", help="time T-stage inference on synthetic images")
    n.add_argument("--model", help="model file (default: plain-initialised denoiser)")
    n.add_argument("--stages", type=_positive_int, default=5)
    n.add_argument("--filter-size", type=int, default=5, choices=(3, 5, 7, 9))
    n.add_argument("--sizes", type=_positive_int, nargs="+", default=[256, 512, 1024])
    n.add_argument("--backend", choices=("active", "numba", "numpy", "both"), default="active")
    n.add_argument("--repeat", type=_positive_int, default=1)
    return p


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _load_model(path):
    try:
        return load_model(path)
    except FileNotFoundError:
        raise DataError(f"model file not found: {path}") from None
    except ModelFormatError as exc:
        raise DataError(str(exc)) from None


def _load_image(path):
    try:
        return load_pgm(path)
    except FileNotFoundError:
        raise DataError(f"image not found: {path}") from None
    except PgmError as exc:
        raise DataError(f"{path}: {exc}") from None


def _image_dir(path):
    if not os.path.isdir(path):
        raise DataError(f"not a directory: {path}")
    names = sorted(f for f in os.listdir(path) if f.lower().endswith(".pgm"))
    if not names:
        raise DataError(f"no .pgm images in {path}")
    return [(n, _load_image(os.path.join(path, n))) for n in names]


def _task_args(args):
    if args.task == "denoise":
        if args.sigma is None or args.sigma < 0:
            raise UsageError("--task denoise needs --sigma >= 0")
    elif args.quality is None or not 1 <= args.quality <= 100:
        raise UsageError("--task deblock needs --quality in [1, 100]")


def _noise_seed(seed, index):
    return [seed & 0xFFFFFFFFFFFFFFFF, index]


def _degrade(task, img, index, seed, sigma=None, quality=None):
    """Return ``(model_input, aux)`` for one clean image."""
    from .training.drivers import add_noise

    if task == "denoise":
        noisy = add_noise(img, sigma, _noise_seed(seed, index))
        return noisy, noisy
    decoded, box = jpeg_degrade(img, quality)
    return decoded, box


def _stage_limit(model, stages):
    if stages is None:
        return None
    if not 0 <= stages <= model.T:
        raise UsageError(f"--stages must lie in [0, {model.T}]")
    if model.trained_mode == "joint" and stages != model.T:
        raise UsageError("jointly trained models must run all stages; --stages refused")
    return stages


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_train(args):
    from .training import LbfgsConfig, TrainConfig, TrainLog, TrainSample, greedy_train, joint_train
    from .training.drivers import add_noise

    _task_args(args)
    m = args.filter_size
    n_k = args.filters or m * m - 1
    if n_k > m * m - 1:
        raise UsageError(f"--filters {n_k} exceeds m*m-1 = {m * m - 1}")
    try:
        rbf = RbfConfig(args.rbf, args.rbf_count, args.rbf_radius)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.lbfgs_iters < 0:
        raise UsageError("--lbfgs-iters must be non-negative")
    images = _image_dir(args.data)
    data = []
    for i, (name, img) in enumerate(images):
        if args.task == "denoise":
            data.append(TrainSample(add_noise(img, args.sigma, _noise_seed(args.seed, i)), img))
        else:
            _, box = jpeg_degrade(img, args.quality)
            data.append(TrainSample(box.decoded(), pad_to_blocks(img), box))
    cfg = TrainConfig(T=args.stages, m=m, n_k=n_k, rbf=rbf,
                      lbfgs=LbfgsConfig(max_iters=args.lbfgs_iters),
                      train_weights=args.train == "all")
    train_log = TrainLog()
    model = greedy_train(data, args.task, cfg, sigma=args.sigma, quality=args.quality,
                         train_log=train_log)
    if args.mode == "joint":
        model = joint_train(data, model, cfg, train_log=train_log)
    text = dumps_model(model)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)

    manifest = {
        "command": "train",
        "config": {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)},
        "resolved": {"filters": n_k, "rbf_gamma": rbf.gamma, "lbfgs_memory": cfg.lbfgs.memory,
                     "wolfe_c1": cfg.lbfgs.c1, "wolfe_c2": cfg.lbfgs.c2,
                     "greedy_warm_start": "lower cost of previous-stage and plain init",
                     "backend": _kernels.BACKEND, "threads": os.environ.get("TRD_THREADS", "1")},
        "seed": args.seed,
        "training_images": [n for n, _ in images],
        "greedy_cost_history": train_log.greedy,
        "greedy_start": train_log.greedy_start,
        "joint_cost_history": train_log.joint,
        "optimizer_status": train_log.status,
        "wall_seconds": train_log.wall,
        "stage_norms": [{"coeffs": float(np.linalg.norm(sp.coeffs)),
                         "weights": float(np.linalg.norm(sp.weights)),
                         "lambda": sp.lam if sp.log_lambda is not None else None}
                        for sp in model.stages],
    }
    if args.holdout:
        rows = _evaluate(model, _image_dir(args.holdout), args.seed)
        manifest["holdout"] = {"images": rows, "mean_input_psnr": float(np.mean([r[1] for r in rows])),
                               "mean_output_psnr": float(np.mean([r[2] for r in rows]))}
        _print_eval(rows)
    with open(args.out + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, default=str)
        fh.write("\n")
    print(f"wrote {args.out} ({model.T} stages, {model.trained_mode}); final training cost "
          f"{(train_log.joint or train_log.greedy[-1])[-1]:.6g}")
    return EXIT_OK


def cmd_denoise(args):
    model = _load_model(args.model)
    if model.task != "denoise":
        raise UsageError(f"{args.model} is a {model.task} model")
    img = _load_image(args.inp)
    out = infer(model, img, stages=_stage_limit(model, args.stages))
    save_pgm(out, args.out)
    return EXIT_OK


def _read_decoded(path, strict):
    if path.lower().endswith((".jpg", ".jpeg")):
        if not strict:
            raise UsageError("real JPEG input needs --strict (indices are re-derived, not parsed)")
        try:
            from PIL import Image
        except ImportError:
            raise DataError("reading .jpg files needs Pillow") from None
        try:
            with Image.open(path) as im:
                return np.asarray(im.convert("L"), dtype=np.float64)
        except OSError as exc:
            raise DataError(f"{path}: {exc}") from None
    return _load_image(path)


def cmd_deblock(args):
    model = _load_model(args.model)
    if model.task != "deblock":
        raise UsageError(f"{args.model} is a {model.task} model")
    quality = args.quality or model.quality
    if not 1 <= quality <= 100:
        raise UsageError("--quality must lie in [1, 100]")
    decoded = _read_decoded(args.inp, args.strict)
    box = box_from_decoded(decoded, quality)
    out = infer(model, decoded, box, stages=_stage_limit(model, args.stages))
    save_pgm(out, args.out)
    return EXIT_OK


def cmd_degrade(args):
    _task_args(args)
    img = _load_image(args.inp)
    out, _ = _degrade(args.task, img, 0, args.seed, args.sigma, args.quality)
    save_pgm(out, args.out)
    return EXIT_OK


def _evaluate(model, images, seed, stages=None):
    rows = []
    for i, (name, img) in enumerate(images):
        inp, aux = _degrade(model.task, img, i, seed, model.sigma, model.quality)
        out = infer(model, inp, aux, stages=stages)
        rows.append((name, psnr(inp, img), psnr(out, img)))
    return rows


def _print_eval(rows):
    for name, pin, pout in rows:
        print(f"{name}\t{pin:.2f}\t{pout:.2f}")
    print(f"Average PSNR (dB)\t{np.mean([r[1] for r in rows]):.2f}\t{np.mean([r[2] for r in rows]):.2f}")


def cmd_eval(args):
    model = _load_model(args.model)
    stages = _stage_limit(model, args.stages)
    print("image\tinput\toutput")
    _print_eval(_evaluate(model, _image_dir(args.data), args.seed, stages))
    return EXIT_OK


def cmd_gradcheck(args):
    from .training.checks import grad_check, joint_problem, random_instance, stage_problem

    suites = {
        "denoise-stage": lambda s: stage_problem(*_stage_args(random_instance(s, "denoise"))),
        "deblock-stage": lambda s: stage_problem(*_stage_args(random_instance(s, "deblock"))),
        "joint-T3": lambda s: joint_problem(*random_instance(s, "denoise", T=3)),
    }
    failed = False
    for name, make in suites.items():
        worst, excluded = 0.0, 0
        t0 = time.perf_counter()
        for k in range(args.instances):
            rep = grad_check(make(args.seed + k), h=args.h)
            worst = max(worst, rep.max_rel_error)
            excluded += len(rep.excluded)
        ok = worst < args.tol
        failed |= not ok
        print(f"{name}\tmax rel err {worst:.3e}\texcluded {excluded}\t"
              f"{time.perf_counter() - t0:.1f}s\t{'PASS' if ok else 'FAIL'}")
    return EXIT_NUMERIC if failed else EXIT_OK


def _stage_args(instance):
    sample, stages, basis, cfg = instance
    return sample, sample.f_n, stages[0], basis, cfg


def cmd_export(args):
    model = _load_model(args.model)
    os.makedirs(args.out_dir, exist_ok=True)
    R = model.rbf.R
    z = np.linspace(-R, R, args.samples)
    for t, sp in enumerate(model.stages, 1):
        for i, mix in enumerate(sp.mixtures(model.rbf), 1):
            phi = phi_eval(mix, z)
            rho = rho_eval(mix, z)
            path = os.path.join(args.out_dir, f"stage{t:02d}_filter{i:02d}.csv")
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["z", "phi", "rho"])
                for row in zip(z, phi, rho):
                    w.writerow([repr(float(v)) for v in row])
    print(f"wrote {model.T * model.n_k} files to {args.out_dir}")
    return EXIT_OK


def cmd_bench(args):
    from .bench import time_inference
    from .model import init_model

    if args.model:
        model = _load_model(args.model)
    else:
        model = init_model("denoise", args.stages, args.filter_size, sigma=25.0)
    backends = {"active": [_kernels.BACKEND], "both": ["numba", "numpy"]}.get(
        args.backend, [args.backend])
    print(f"T={model.T} m={model.m} n_k={model.n_k} M={model.rbf.M}")
    print("backend\t" + "\t".join(f"{s}^2" for s in args.sizes))
    for name in backends:
        times = time_inference(model, args.sizes, name, args.repeat)
        print(name + "\t" + "\t".join(f"{t:.3f}" for t in times))
    return EXIT_OK


COMMANDS = {
    "train": cmd_train, "denoise": cmd_denoise, "deblock": cmd_deblock,
    "degrade": cmd_degrade, "eval": cmd_eval, "gradcheck": cmd_gradcheck,
    "export-influence": cmd_export, "bench": cmd_bench,
}


def dispatch(argv):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help()
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    from .training.lbfgs import NonFiniteObjective

    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"trd {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"trd {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NonFiniteObjective as exc:
        print(f"trd {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"trd {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main(argv=None):
    sys.exit(dispatch(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
