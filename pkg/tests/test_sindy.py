import numpy as np
import pytest
from hypothesis import given, strategies as st

from mfassim.fields import FieldSeries
from mfassim.koch import AnalogGrid, AnalogParams, analog_run
from mfassim.sindy import (DIRECT_LIBRARY, LibrarySpec, SindyError, SindyModel, adaptive_discover, build_library,
                           discover, inject_correction, read_model, spectral_derivative, stlsq,
                           time_derivative, write_model)

L = 2 * np.pi
x = np.arange(64) * L / 64


def grid_series(data, dt=0.01):
    return FieldSeries(data, L / data.shape[0], dt, L)


def test_spectral_derivative_of_sine():
    s = grid_series(np.sin(3 * x)[:, None] * np.ones((1, 4)))
    assert np.max(np.abs(spectral_derivative(s, 1).data - 3 * np.cos(3 * x)[:, None])) < 1e-12
    assert np.max(np.abs(spectral_derivative(s, 2).data + 9 * np.sin(3 * x)[:, None])) < 1e-11


def test_time_derivative_linear_exact():
    t = np.arange(10) * 0.1
    s = FieldSeries(np.outer(np.ones(8), 2 * t + 1), 1.0, 0.1, 8.0)
    assert np.allclose(time_derivative(s).data, 2.0, atol=1e-12)


@given(st.integers(0, 6), st.floats(0.0, 1.99))
def test_stlsq_single_column_target(j, alpha):
    theta = np.linalg.qr(np.random.default_rng(j).normal(size=(50, 7)))[0]
    xi = stlsq(theta, 2.0 * theta[:, j], alpha)
    expect = np.zeros(7)
    expect[j] = 2.0
    assert np.allclose(xi, expect, atol=1e-10)


def test_stlsq_zero_alpha_is_least_squares():
    r = np.random.default_rng(0)
    theta, y = r.normal(size=(40, 5)), r.normal(size=40)
    assert np.allclose(stlsq(theta, y, 0.0), np.linalg.lstsq(theta, y, rcond=None)[0], atol=1e-12)


def burgers_like_field():
    """A smooth analog-model trajectory used only as a source of rich u(x, t) snapshots."""
    return analog_run(AnalogParams(), AnalogGrid(n=64, t_final=2.0, out_every=20))


def test_burgers_plant_recovered():
    u = burgers_like_field()
    ux = spectral_derivative(u, 1).data
    uxx = spectral_derivative(u, 2).data
    y = -u.data * ux + 0.1 * uxx + 1e-4 * np.random.default_rng(0).normal(size=u.data.shape)
    theta, norms = build_library({"u": u}, LibrarySpec(DIRECT_LIBRARY))
    m = adaptive_discover(theta, norms, y, DIRECT_LIBRARY, "direct_missing", alpha0=1e-3)
    assert set(m.active) == {"u*u_x", "u_xx"}
    assert m.active["u*u_x"] == pytest.approx(-1.0, rel=0.02)
    assert m.active["u_xx"] == pytest.approx(0.1, rel=0.02)
    assert m.alpha >= 1e-3


def test_planted_missing_physics_direct():
    u_sim = analog_run(AnalogParams(), AnalogGrid())
    h = SindyModel(("1", "u"), np.array([0.5, -0.5]), 0.0, 0.0, "direct_missing")
    u_real = inject_correction(u_sim, h)
    m = discover("direct_missing", u_sim=u_sim, u_real=u_real)
    assert set(m.active) == {"1", "u"} and not m.degenerate
    assert m.active["1"] == pytest.approx(0.5, rel=0.05)
    assert m.active["u"] == pytest.approx(-0.5, rel=0.05)


def test_planted_hf_dynamics():
    dt, m = 0.01, 400
    t = np.arange(m) * dt
    X, T = np.meshgrid(x, t, indexing="ij")
    u_lf = 1 + 0.5 * np.sin(X - T)
    integral = 0.2 * (T + 0.5 * (np.cos(X - T) - np.cos(X))) - 0.1 * T
    u_hf = (0.3 * np.cos(3 * X) + 0.1) * np.exp(integral)
    model = discover("hf_dynamics", u_lf=grid_series(u_lf, dt), u_hf=grid_series(u_hf, dt))
    act = model.active
    assert act.get("u_hf", 0) < 0 and act.get("u_lf*u_hf", 0) > 0
    assert act["u_hf"] == pytest.approx(-0.1, rel=0.1)
    assert act["u_lf*u_hf"] == pytest.approx(0.2, rel=0.1)


def test_identical_fields_are_degenerate():
    u = burgers_like_field()
    assert discover("direct_missing", u_sim=u, u_real=u).degenerate


def test_pure_noise_is_degenerate():
    u = burgers_like_field()
    noisy = u.with_data(u.data + 1e-3 * np.random.default_rng(1).normal(size=u.data.shape))
    assert discover("direct_missing", u_sim=u, u_real=noisy).degenerate


def test_discover_argument_errors():
    u = burgers_like_field()
    with pytest.raises(SindyError):
        discover("direct_missing", u_sim=u)
    with pytest.raises(SindyError):
        discover("sideways", u_sim=u, u_real=u)
    with pytest.raises(SindyError):
        LibrarySpec(("u", "u"))


def test_model_text_round_trip(tmp_path):
    m = SindyModel(("1", "u", "u*u_x"), np.array([0.5, 0.0, -1.25]), 1e-3, 0.01, "direct_missing")
    write_model(tmp_path / "m.txt", m)
    back = read_model(tmp_path / "m.txt")
    assert back.active == m.active and back.target == m.target
    assert back.variables() == {"u"}
