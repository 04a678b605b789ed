import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from mfassim.fields import FieldSeries, SensorTrace
from mfassim.hf_pathway import (HfConfig, HfModel, SparsityConfig, derivative_embed, estimate_tau, l1_size,
                                magnitude_penalty, reconstruct, residual_history, residual_windows,
                                sparsity_penalty, train_stage3, warp)
from mfassim.nn import DTYPE
from mfassim.preprocess import uniform_sensors
from mfassim.shred_lf import LfConfig, LfModel

x = np.arange(100) * 2 * np.pi / 100


def test_residual_history():
    s = np.arange(6.0).reshape(2, 3)
    lf = np.ones((2, 10))
    assert np.array_equal(residual_history(s, lf, np.array([0, 4, 8])), s - 1)
    with pytest.raises(ValueError):
        residual_history(s, np.ones((3, 10)), np.array([0, 4, 8]))


def test_derivative_embed_constant_linear_quadratic():
    dt = 0.5
    ell = np.arange(6)[:, None] * dt
    const = derivative_embed(np.full((6, 2), 3.0), dt)
    assert np.all(const[:, 2:] == 0)
    lin = derivative_embed(np.repeat(ell, 2, axis=1), dt)
    assert np.allclose(lin[1:-1, 2:4], 1.0, rtol=0, atol=1e-14)
    assert np.allclose(lin[1:-1, 4:6], 0.0, atol=1e-13)
    quad = derivative_embed(np.repeat(ell**2, 2, axis=1), dt)
    assert np.allclose(quad[1:-1, 4:6], 2.0, rtol=0, atol=1e-12)
    t = derivative_embed(torch.as_tensor(np.repeat(ell**2, 2, axis=1)), dt)
    assert np.allclose(t.numpy(), quad)


def small_hf(**kw):
    cfg = HfConfig(p=5, n=20, lags=4, d_z=6, attn_hidden=8, hidden=(10,), shift_hidden=8, amp_hidden=8, **kw)
    return HfModel(cfg, seed=0)


def test_warp_identity_and_integer_shift():
    base = torch.randn(3, 20, dtype=DTYPE)
    one = torch.ones(3, 20, dtype=DTYPE)
    assert torch.equal(warp(base, torch.zeros(3, 20, dtype=DTYPE), one), base)
    shifted = warp(base, torch.full((3, 20), 3.0, dtype=DTYPE), one)
    assert torch.equal(shifted, torch.roll(base, -3, dims=-1))


def test_decode_identity_deformation_gives_scaled_base():
    m = small_hf()
    with torch.no_grad():
        for net in (m.shift, m.amp):
            net.layers[-1].weight.zero_()
        m.shift.layers[-1].bias.zero_()
        # softplus(b) = 1 makes a = 0.5 * 1 + 0.5 = 1
        m.amp.layers[-1].bias.fill_(float(np.log(np.e - 1)))
    z = torch.randn(4, 6, dtype=DTYPE)
    u, diag = m.decode(z)
    assert torch.allclose(u, m.gamma * m.dec(z), rtol=1e-15, atol=1e-15)
    assert torch.all(diag["delta"] == 0)


@given(st.floats(-50, 50), st.integers(0, 1000))
def test_deformation_ranges(scale, seed):
    m = small_hf(delta_max=2.0)
    z = scale * torch.randn(5, 6, dtype=DTYPE, generator=torch.Generator().manual_seed(seed))
    _, d = m.decode(z)
    assert torch.all(d["delta"].abs() <= 2.0) and torch.all(d["amp"] >= 0.5)


def test_sparsity_penalty_examples():
    one = np.cos(3 * x)
    assert sparsity_penalty(one, 12) == pytest.approx(1.0, abs=1e-6)
    two = np.cos(3 * x) + np.cos(6 * x)
    assert sparsity_penalty(two, 12) == pytest.approx(np.sqrt(2), abs=1e-6)
    oob = np.cos(13 * x)
    assert sparsity_penalty(oob, 12, beta=100) == pytest.approx(100.0, rel=1e-6)


def test_magnitude_penalty_hinge():
    u = np.full(10, 0.2)
    assert magnitude_penalty(u, 0.3) == 0.0
    assert magnitude_penalty(u, 0.1) == pytest.approx(0.01)
    assert l1_size(np.array([1.0, -3.0])) == 2.0


def k3_residuals(m=120, lags=8, amp=0.1):
    idx = uniform_sensors(100, 25)
    field = amp * np.cos(3 * x[:, None] - 0.05 * np.arange(m)[None, :])  # n x m
    R = residual_windows(field[idx], np.zeros((m, 100)), idx, lags)
    return R, idx, field


def hf_cfg(lags=8):
    return HfConfig(p=25, n=100, lags=lags, d_z=16, attn_hidden=16, hidden=(64,), shift_hidden=32, amp_hidden=16,
                    delta_max=2.0)


def test_stage3_fits_single_mode_without_sparsity():
    R, idx, _ = k3_residuals()
    res = train_stage3(R, idx, hf_cfg(), SparsityConfig(lambda_sparse=0.0, mu_mag=0.0), epochs=150, lr=3e-3)
    assert res.curve[res.best_epoch][1] < 1e-3


def test_stage3_sparsity_keeps_energy_in_band_and_budget():
    R, idx, _ = k3_residuals()
    tau = estimate_tau(R, 1.0)
    res = train_stage3(R, idx, hf_cfg(), SparsityConfig(lambda_sparse=0.1, tau=tau), epochs=150, lr=3e-3)
    with torch.no_grad():
        u = res.model(torch.as_tensor(R, dtype=DTYPE)).numpy()
    e = np.abs(np.fft.rfft(u, axis=-1)) ** 2
    assert e[:, :13].sum() / e.sum() >= 0.95
    assert np.mean(l1_size(u)) <= 1.5 * tau


def test_reconstruct_zero_hf_equals_lf_and_exact_split():
    lf = LfModel(LfConfig(p=5, n=20, d_z=4, hidden=(8,), k_c=4, dropout=0.0))
    idx = uniform_sensors(20, 5)
    trace = SensorTrace(np.random.default_rng(0).normal(size=(5, 12)), idx, 20)
    like = FieldSeries(np.zeros((20, 12)), 1.0, 1.0, 20.0)
    rec = reconstruct(trace, lf, None, None, 4, like)
    assert np.array_equal(rec.full.data, rec.lf.data)
    hf = HfModel(HfConfig(p=5, n=20, lags=4, d_z=4, attn_hidden=4, hidden=(8,), shift_hidden=4, amp_hidden=4))
    rec = reconstruct(trace, lf, None, hf, 4, like)
    assert np.all(rec.full.data - rec.lf.data - rec.hf.data == 0.0)
