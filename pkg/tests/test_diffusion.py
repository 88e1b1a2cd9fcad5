import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trd.diffusion import deblock_stage, denoise_stage, infer, pm_step
from trd.imgproc import block_dct, block_idct, correlate_same, rot180
from trd.influence import RbfConfig, phi_eval
from trd.jpegsim import is_consistent, jpeg_degrade, proj_q
from trd.model import StageParams, TrdModel, build_basis, init_model

from oracles import dense_correlation, gauss_mixture

seeds = st.integers(0, 2 ** 32 - 1)
CFG = RbfConfig("gaussian", 15, 30.0)


def rand_stage(rng, n_k=2, m=3, log_lambda=0.0, scale=1.0):
    B = m * m - 1
    return StageParams(rng.normal(0, scale, (n_k, B)), rng.normal(0, scale, (n_k, CFG.M)), log_lambda)


def test_pm_constant_image_unchanged():
    u = np.full((9, 7), 42.0)
    np.testing.assert_array_equal(pm_step(u, 0.2), u)


def test_pm_spike_decreases():
    u = np.zeros((11, 11))
    u[5, 5] = 1.0
    out = pm_step(u, 0.2)
    assert abs(out[5, 5]) < 1.0
    # oracle: at the spike all four differences are 1, flux z/(1+z^2) = 1/2 each
    assert out[5, 5] == pytest.approx(1.0 - 0.2 * 4 * 0.5)


def test_pm_ramp_interior_unchanged():
    u = np.add.outer(np.arange(10.0) * 0.3, np.arange(12.0) * 0.7)
    out = pm_step(u, 0.25)
    np.testing.assert_allclose(out[1:-1, 1:-1], u[1:-1, 1:-1], atol=1e-10)


@settings(max_examples=20)
@given(seeds)
def test_pm_preserves_mean_periodic(seed):
    u = np.random.default_rng(seed).uniform(0, 5, (10, 8))
    assert pm_step(u, 0.2, "periodic").mean() == pytest.approx(u.mean(), abs=1e-8)


def test_pm_rejects_bad_dt():
    with pytest.raises(ValueError):
        pm_step(np.zeros((3, 3)), 0.0)


def test_denoise_identity_and_reaction_cases():
    rng = np.random.default_rng(0)
    basis = build_basis(3)
    u, f = rng.normal(size=(2, 8, 8))
    zero = StageParams(rng.normal(size=(2, 8)), np.zeros((2, CFG.M)), -np.inf)
    assert np.array_equal(denoise_stage(u, f, zero, basis, CFG), u)
    one = StageParams(zero.coeffs, zero.weights, 0.0)
    np.testing.assert_allclose(denoise_stage(u, f, one, basis, CFG), f, atol=1e-15)


def test_denoise_matches_dense_matrix_oracle():
    rng = np.random.default_rng(1)
    basis = build_basis(3)
    u, f = rng.normal(0, 10, (2, 8, 8))
    sp = rand_stage(rng, log_lambda=np.log(0.3))
    total = np.zeros(64)
    for k, w in zip(sp.kernels(basis), sp.weights):
        K = dense_correlation(k, u.shape)
        total += K.T @ gauss_mixture(w, CFG.centers, CFG.gamma, K @ u.ravel())
    expected = u.ravel() - (total + 0.3 * (u - f).ravel())
    np.testing.assert_allclose(denoise_stage(u, f, sp, basis, CFG, "zero").ravel(), expected,
                               rtol=1e-10, atol=1e-10)


def test_symmetric_mode_uses_rotated_kernel_approximation():
    rng = np.random.default_rng(2)
    basis = build_basis(3)
    u, f = rng.normal(0, 10, (2, 8, 8))
    sp = rand_stage(rng, log_lambda=np.log(0.3))
    diff = np.zeros_like(u)
    for k, mix in zip(sp.kernels(basis), sp.mixtures(CFG)):
        diff += correlate_same(phi_eval(mix, correlate_same(u, k)), rot180(k))
    np.testing.assert_allclose(denoise_stage(u, f, sp, basis, CFG), u - diff - 0.3 * (u - f), atol=1e-12)


def test_deblock_cases_and_composition_oracle():
    rng = np.random.default_rng(3)
    basis = build_basis(3)
    img = rng.uniform(0, 255, (16, 16))
    decoded, box = jpeg_degrade(img, 20)
    u0 = box.decoded()
    zero = StageParams(rng.normal(size=(2, 8)), np.zeros((2, CFG.M)), None)
    np.testing.assert_allclose(deblock_stage(u0, box, zero, basis, CFG), u0, atol=1e-8)
    anyu = rng.uniform(0, 255, (16, 16))
    np.testing.assert_allclose(deblock_stage(anyu, box, zero, basis, CFG),
                               block_idct(proj_q(block_dct(anyu), box)), atol=1e-10)
    sp = rand_stage(rng, log_lambda=None)
    y = anyu.copy()
    for k, w in zip(sp.kernels(basis), sp.weights):
        K = dense_correlation(k, anyu.shape)
        y -= (K.T @ gauss_mixture(w, CFG.centers, CFG.gamma, K @ anyu.ravel())).reshape(anyu.shape)
    c = block_dct(y)
    expected = block_idct(np.clip(c, box.lower, box.upper))
    np.testing.assert_allclose(deblock_stage(anyu, box, sp, basis, CFG, "zero"), expected, atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_deblock_output_always_consistent(seed):
    rng = np.random.default_rng(seed)
    basis = build_basis(3)
    _, box = jpeg_degrade(rng.uniform(0, 255, (16, 24)), int(rng.integers(5, 60)))
    out = deblock_stage(rng.uniform(0, 255, (16, 24)), box, rand_stage(rng, log_lambda=None, scale=20),
                        basis, CFG)
    assert is_consistent(out, box, tol=1e-8)


def test_shape_errors():
    basis = build_basis(3)
    sp = rand_stage(np.random.default_rng(0))
    with pytest.raises(ValueError):
        denoise_stage(np.zeros((8, 8)), np.zeros((8, 9)), sp, basis, CFG)
    _, box = jpeg_degrade(np.zeros((8, 8)), 50)
    with pytest.raises(ValueError):
        deblock_stage(np.zeros((8, 16)), box, sp, basis, CFG)


def test_infer_zero_stages_and_manual_composition():
    rng = np.random.default_rng(4)
    basis = build_basis(3)
    f = rng.uniform(0, 255, (12, 12))
    stages = [rand_stage(rng, n_k=3, log_lambda=float(rng.normal())) for _ in range(3)]
    model = TrdModel("denoise", 3, 3, CFG, stages, sigma=25.0)
    assert np.array_equal(infer(model, f, stages=0), f)
    u = f
    for sp in stages:
        u = denoise_stage(u, f, sp, basis, CFG)
    out, trace = infer(model, f, keep_trace=True)
    assert np.array_equal(out, u)
    assert len(trace.outputs) == 4 and np.array_equal(trace.outputs[-1], out)
    with pytest.raises(ValueError):
        infer(model, f, stages=4)


def test_infer_deblock_crops_and_checks_aux():
    rng = np.random.default_rng(5)
    model = init_model("deblock", 2, 3, n_k=4, quality=10, rbf=CFG)
    img = rng.uniform(0, 255, (13, 19))
    decoded, box = jpeg_degrade(img, 10)
    out = infer(model, decoded, box)
    assert out.shape == img.shape
    with pytest.raises(ValueError):
        infer(model, decoded)
    den = init_model("denoise", 1, 3, n_k=4, sigma=25.0, rbf=CFG)
    with pytest.raises(ValueError):
        infer(den, box.decoded(), box)


def test_energy_link_small_instance():
    from trd.influence import rho_eval

    rng = np.random.default_rng(6)
    basis = build_basis(3)
    cfg = RbfConfig("gaussian", 15, 6.0)
    u, f = rng.normal(0, 1, (2, 8, 8))
    sp = StageParams(rng.normal(0, 0.5, (2, 8)), rng.normal(0, 1, (2, 15)), np.log(0.5))
    mixes = sp.mixtures(cfg)

    def energy(x):
        e = 0.5 * sp.lam * np.sum((x - f) ** 2)
        for k, mix in zip(sp.kernels(basis), mixes):
            e += np.sum(rho_eval(mix, correlate_same(x, k, "zero"), step=1e-3))
        return e

    h = 1e-4
    grad = np.zeros(64)
    for i in range(64):
        d = np.zeros(64)
        d[i] = h
        grad[i] = (energy(u + d.reshape(8, 8)) - energy(u - d.reshape(8, 8))) / (2 * h)
    step = u - denoise_stage(u, f, sp, basis, cfg, "zero")
    assert np.linalg.norm(step.ravel() - grad) / np.linalg.norm(grad) < 1e-4
