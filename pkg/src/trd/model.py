"""Filter basis, stage parameters, model container, plain initialization and JSON I/O."""

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .influence import RbfConfig, RbfMixture, fit_plain

SUPPORTED_SIZES = (3, 5, 7, 9)
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """Raised for unreadable, truncated or inconsistent model files."""


def dct_matrix(n):
    """Orthonormal 1-D DCT-II matrix; row ``i`` is the ``i``-th cosine."""
    j = np.arange(n)
    C = np.cos(np.pi * (2 * j[None, :] + 1) * j[:, None] / (2 * n)) * np.sqrt(2.0 / n)
    C[0] /= np.sqrt(2.0)
    return C


@dataclass(frozen=True)
class FilterBasis:
    """The ``m*m - 1`` zero-mean separable DCT atoms, lowest frequency first."""

    m: int
    atoms: np.ndarray = field(repr=False)

    @property
    def size(self):
        return self.atoms.shape[0]

    @property
    def flat(self):
        return self.atoms.reshape(self.size, -1)


@lru_cache(maxsize=None)
def build_basis(m):
    if m not in SUPPORTED_SIZES:
        raise ValueError(f"filter size {m} not supported; use one of {SUPPORTED_SIZES}")
    C = dct_matrix(m)
    order = sorted(((i, j) for i in range(m) for j in range(m) if (i, j) != (0, 0)),
                   key=lambda ij: (ij[0] + ij[1], ij[0]))
    atoms = np.stack([np.outer(C[i], C[j]) for i, j in order])
    atoms.setflags(write=False)
    return FilterBasis(m, atoms)


def assemble_filter(basis, coeff):
    coeff = np.asarray(coeff, dtype=np.float64)
    if coeff.shape != (basis.size,):
        raise ValueError(f"expected {basis.size} coefficients, got shape {coeff.shape}")
    return np.tensordot(coeff, basis.atoms, axes=1)


@dataclass
class StageParams:
    """Parameters of one diffusion stage.

    ``coeffs`` is ``(n_k, m*m - 1)``, ``weights`` is ``(n_k, M)``.  Deblocking
    stages keep ``log_lambda`` at ``None``.
    """

    coeffs: np.ndarray
    weights: np.ndarray
    log_lambda: float = None

    def __post_init__(self):
        self.coeffs = np.array(self.coeffs, dtype=np.float64, ndmin=2)
        self.weights = np.array(self.weights, dtype=np.float64, ndmin=2)
        if self.coeffs.shape[0] != self.weights.shape[0]:
            raise ValueError("coeffs and weights disagree on the number of filters")
        if self.log_lambda is not None:
            self.log_lambda = float(self.log_lambda)

    @property
    def n_k(self):
        return self.coeffs.shape[0]

    @property
    def lam(self):
        return 0.0 if self.log_lambda is None else math.exp(self.log_lambda)

    def kernels(self, basis):
        return np.tensordot(self.coeffs, basis.atoms, axes=1)

    def mixtures(self, cfg):
        return [RbfMixture(cfg, w) for w in self.weights]

    def copy(self):
        return StageParams(self.coeffs.copy(), self.weights.copy(), self.log_lambda)

    def __eq__(self, other):
        if not isinstance(other, StageParams):
            return NotImplemented
        return (np.array_equal(self.coeffs, other.coeffs)
                and np.array_equal(self.weights, other.weights)
                and self.log_lambda == other.log_lambda)


@dataclass
class TrdModel:
    """A T-stage trainable reaction-diffusion model.

    ``task`` is ``"denoise"`` (with ``sigma``) or ``"deblock"`` (with ``quality``).
    """

    task: str
    m: int
    n_k: int
    rbf: RbfConfig
    stages: list
    sigma: float = None
    quality: int = None
    trained_mode: str = "greedy"

    def __post_init__(self):
        validate(self)

    @property
    def T(self):
        return len(self.stages)

    @property
    def basis(self):
        return build_basis(self.m)

    def truncated(self, T):
        return TrdModel(self.task, self.m, self.n_k, self.rbf,
                        [s.copy() for s in self.stages[:T]], self.sigma,
                        self.quality, self.trained_mode)

    def copy(self):
        return self.truncated(self.T)


def validate(model):
    if model.task not in ("denoise", "deblock"):
        raise ValueError(f"unknown task {model.task!r}")
    if model.task == "denoise" and (model.sigma is None or not model.sigma >= 0):
        raise ValueError("denoising models need a non-negative sigma")
    if model.task == "deblock" and (model.quality is None or not 1 <= model.quality <= 100):
        raise ValueError("deblocking models need a quality in [1, 100]")
    if model.m not in SUPPORTED_SIZES:
        raise ValueError(f"filter size {model.m} not supported")
    if not 1 <= model.n_k <= model.m * model.m - 1:
        raise ValueError(f"filter count {model.n_k} must lie in [1, {model.m * model.m - 1}]")
    if model.trained_mode not in ("greedy", "joint"):
        raise ValueError(f"unknown training mode {model.trained_mode!r}")
    B = model.m * model.m - 1
    for t, sp in enumerate(model.stages):
        if sp.coeffs.shape != (model.n_k, B):
            raise ValueError(f"stage {t}: coeffs shape {sp.coeffs.shape} != {(model.n_k, B)}")
        if sp.weights.shape != (model.n_k, model.rbf.M):
            raise ValueError(f"stage {t}: weights shape {sp.weights.shape} != {(model.n_k, model.rbf.M)}")
        if not (np.all(np.isfinite(sp.coeffs)) and np.all(np.isfinite(sp.weights))):
            raise ValueError(f"stage {t}: non-finite parameters")
        if model.task == "denoise":
            if sp.log_lambda is None or not math.isfinite(sp.log_lambda):
                raise ValueError(f"stage {t}: denoising stages need a finite log_lambda")
        elif sp.log_lambda is not None:
            raise ValueError(f"stage {t}: deblocking stages carry no reaction weight")


INIT_LAMBDA = 0.1


def plain_stage(task, m, n_k, rbf):
    """One stage of the plain initialization: the first ``n_k`` DCT atoms and
    the least-squares fit of ``2z / (1 + z^2)`` for every influence function."""
    basis = build_basis(m)
    if n_k > basis.size:
        raise ValueError(f"filter count {n_k} exceeds {basis.size} available atoms")
    coeffs = np.eye(basis.size)[:n_k]
    w = fit_plain(rbf).weights
    weights = np.tile(w, (n_k, 1))
    return StageParams(coeffs, weights, math.log(INIT_LAMBDA) if task == "denoise" else None)


def init_model(task, T, m=5, n_k=None, rbf=None, sigma=None, quality=None):
    rbf = rbf or RbfConfig()
    n_k = m * m - 1 if n_k is None else n_k
    if n_k > m * m - 1:
        raise ValueError(f"filter count {n_k} exceeds m*m-1 = {m * m - 1}")
    stage = plain_stage(task, m, n_k, rbf)
    return TrdModel(task, m, n_k, rbf, [stage.copy() for _ in range(T)],
                    sigma=sigma, quality=quality)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def model_to_dict(model):
    d = {"version": FORMAT_VERSION, "task": model.task}
    if model.task == "denoise":
        d["sigma"] = float(model.sigma)
    else:
        d["quality"] = int(model.quality)
    d.update({
        "T": model.T,
        "m": model.m,
        "n_k": model.n_k,
        "trained_mode": model.trained_mode,
        "rbf": {"kind": model.rbf.kind, "M": model.rbf.M, "R": model.rbf.R,
                "gamma": model.rbf.gamma},
        "stages": [{"coeffs": sp.coeffs.tolist(), "weights": sp.weights.tolist(),
                    "log_lambda": sp.log_lambda} for sp in model.stages],
    })
    return d


def model_from_dict(d):
    if not isinstance(d, dict):
        raise ModelFormatError("model file must hold a JSON object")
    if d.get("version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model version {d.get('version')!r}")
    try:
        rbf = RbfConfig(d["rbf"]["kind"], d["rbf"]["M"], d["rbf"]["R"], d["rbf"]["gamma"])
        stages = [StageParams(s["coeffs"], s["weights"], s["log_lambda"]) for s in d["stages"]]
        model = TrdModel(d["task"], int(d["m"]), int(d["n_k"]), rbf, stages,
                         sigma=d.get("sigma"), quality=d.get("quality"),
                         trained_mode=d.get("trained_mode", "greedy"))
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"malformed model file: {exc!r}") from exc
    except ValueError as exc:
        raise ModelFormatError(f"invalid model: {exc}") from exc
    if int(d["T"]) != model.T:
        raise ModelFormatError(f"header says T={d['T']} but {model.T} stages are stored")
    return model


def dumps_model(model):
    return json.dumps(model_to_dict(model), indent=1, allow_nan=False) + "\n"


def save_model(model, path):
    text = dumps_model(model)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"cannot parse model file {path}: {exc}") from exc
    return model_from_dict(d)
