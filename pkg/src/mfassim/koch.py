"""1D reactive Euler model of a rotating detonation annulus and its scalar analog.

The Euler part is a finite-volume scheme: MUSCL/minmod reconstruction of primitive
variables, HLLC fluxes, SSP-RK2 transport on a periodic grid, then an RK2 update of
the injection/mixing/reaction/exhaust sources over the same step (Lie splitting).
Hot loops are compiled with numba.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numba as nb
import numpy as np
from scipy.signal import find_peaks

from .fields import FieldSeries


class KochError(RuntimeError):
    """Nonphysical state or unstable integration."""

    def __init__(self, msg: str, cell: int | None = None, wavespeed: float | None = None):
        super().__init__(msg)
        self.cell = cell
        self.wavespeed = wavespeed


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class KochParams:
    gamma: float = 1.29
    p_ref: float = 1.0
    rho_ref: float = 1.0
    T_ref: float = 1.0
    R: float = 1.0
    AR: float = 0.2
    s: float = 0.07
    beta_inj: float = 14.286
    Da: float = 289.0
    T_ign: float = 5.8
    h_v: float = 24.6
    E_a: float = 11.5
    L_dom: float = 24.0
    m_x: int = 100
    t_final: float = 180.0
    cfl: float = 0.1
    # closure terms beyond the physical parameters (see README, "Model closure")
    T_inj: float = 2.863
    exhaust: float = 0.2496
    mix_scale: float = 18.87
    T_regen: float = 4.387
    T_init: float = 2.061
    z_init: float = 1.0
    kernels: int = 1
    kernel_speed: float = 3.621
    noise: float = 0.01
    snapshot_dt: float = 0.02
    record_from: float = 0.0

    def __post_init__(self):
        if not self.gamma > 1:
            raise ConfigError("gamma must exceed 1")
        if self.m_x < 4:
            raise ConfigError("m_x must be at least 4")
        if not 1 <= self.kernels <= self.m_x / 4:
            raise ConfigError(f"kernels must be in [1, {self.m_x // 4}]")
        if not 0 <= self.z_init <= 1:
            raise ConfigError("z_init must lie in [0, 1]")
        if not 0 < self.cfl <= 1:
            raise ConfigError("cfl must lie in (0, 1]")
        for k in ("p_ref", "rho_ref", "T_ref", "T_init", "R", "L_dom", "t_final", "snapshot_dt"):
            if not getattr(self, k) > 0:
                raise ConfigError(f"{k} must be positive")
        for k in ("Da", "h_v", "E_a", "T_ign", "AR", "s", "exhaust", "mix_scale", "T_inj", "noise"):
            if getattr(self, k) < 0:
                raise ConfigError(f"{k} must be nonnegative")

    @property
    def dx(self) -> float:
        return self.L_dom / self.m_x

    @property
    def p_crit(self) -> float:
        g = self.gamma
        return self.p_ref * self.beta_inj * (2 / (g + 1)) ** (g / (g - 1))

    def source_vector(self) -> np.ndarray:
        c_ref = np.sqrt(self.gamma * self.p_ref / self.rho_ref)
        return np.array([self.gamma, self.R, self.AR * self.rho_ref * c_ref, self.p_crit, self.T_inj,
                         self.s * self.mix_scale, self.T_regen, self.Da, self.T_ign, self.h_v, self.E_a,
                         self.exhaust])


@dataclass
class KochState:
    rho: np.ndarray
    rho_u: np.ndarray
    E: np.ndarray
    rho_z: np.ndarray
    t: float = 0.0

    @property
    def U(self) -> np.ndarray:
        return np.stack([self.rho, self.rho_u, self.E, self.rho_z])

    @classmethod
    def from_U(cls, U: np.ndarray, t: float = 0.0) -> "KochState":
        return cls(U[0].copy(), U[1].copy(), U[2].copy(), U[3].copy(), t)

    def totals(self) -> np.ndarray:
        return self.U.sum(axis=1)


@dataclass
class PrimState:
    rho: np.ndarray
    u: np.ndarray
    p: np.ndarray
    T: np.ndarray
    z: np.ndarray


def to_prim(state: KochState, gamma: float, R: float = 1.0) -> PrimState:
    u = state.rho_u / state.rho
    p = (gamma - 1) * (state.E - 0.5 * state.rho * u * u)
    return PrimState(state.rho, u, p, p / (state.rho * R), state.rho_z / state.rho)


def to_cons(w: PrimState, gamma: float, t: float = 0.0) -> KochState:
    rho = np.asarray(w.rho, dtype=np.float64)
    return KochState(rho.copy(), rho * w.u, w.p / (gamma - 1) + 0.5 * rho * w.u * w.u, rho * w.z, t)


def check_physical(state: KochState, gamma: float, tol: float = 1e-9) -> None:
    w = to_prim(state, gamma)
    bad = np.flatnonzero(~((w.rho > 0) & (w.p > 0) & np.isfinite(w.p)))
    if bad.size:
        i = int(bad[0])
        raise KochError(f"nonphysical state in cell {i}: rho={w.rho[i]:.4g}, p={w.p[i]:.4g}", cell=i)
    badz = np.flatnonzero((w.z < -tol) | (w.z > 1 + tol))
    if badz.size:
        i = int(badz[0])
        raise KochError(f"mixture fraction out of range in cell {i}: z={w.z[i]:.6g}", cell=i)


def init_state(params: KochParams, seed: int = 0, ignition_kernels: int | None = None) -> KochState:
    """Quiescent gas at (T_init, z_init) with equally spaced Gaussian hot spots (peak 2*T_ign, width L/40).

    Each kernel also carries a small forward velocity bump (``kernel_speed``) so the
    fronts it launches pick one rotation direction, and the temperature gets a seeded
    relative perturbation of size ``noise``.
    """
    n, L = params.m_x, params.L_dom
    if ignition_kernels is None:
        ignition_kernels = params.kernels
    if not 1 <= ignition_kernels <= n / 4:
        raise ConfigError(f"ignition_kernels must be in [1, {n // 4}], got {ignition_kernels}")
    x = (np.arange(n) + 0.5) * params.dx
    w = L / 40
    T = np.full(n, params.T_init)
    u = np.zeros(n)
    for j in range(ignition_kernels):
        xc = (j + 0.5) * L / ignition_kernels
        d = (x - xc + L / 2) % L - L / 2
        g = np.exp(-0.5 * (d / w) ** 2)
        T += (2 * params.T_ign - params.T_init) * g
        u += params.kernel_speed * g
    if params.noise > 0:
        T *= 1 + params.noise * np.random.default_rng(seed).standard_normal(n)
    rho = np.full(n, params.rho_ref)
    p = rho * params.R * T
    return to_cons(PrimState(rho, u, p, T, np.full(n, params.z_init)), params.gamma)


# ---------------------------------------------------------------- compiled kernels

@nb.njit(cache=True)
def _minmod(a, b):
    if a * b <= 0.0:
        return 0.0
    return a if abs(a) < abs(b) else b


@nb.njit(cache=True)
def _hllc(rl, ul, pl, zl, rr, ur, pr, zr, g):
    cl = np.sqrt(g * pl / rl)
    cr = np.sqrt(g * pr / rr)
    El = pl / (g - 1) + 0.5 * rl * ul * ul
    Er = pr / (g - 1) + 0.5 * rr * ur * ur
    sl = min(ul - cl, ur - cr)
    sr = max(ul + cl, ur + cr)
    ss = (pr - pl + rl * ul * (sl - ul) - rr * ur * (sr - ur)) / (rl * (sl - ul) - rr * (sr - ur))
    if sl >= 0:
        return rl * ul, rl * ul * ul + pl, ul * (El + pl), rl * ul * zl
    if sr <= 0:
        return rr * ur, rr * ur * ur + pr, ur * (Er + pr), rr * ur * zr
    if ss >= 0:
        f = rl * (sl - ul) / (sl - ss)
        e = f * (El / rl + (ss - ul) * (ss + pl / (rl * (sl - ul))))
        return (rl * ul + sl * (f - rl), rl * ul * ul + pl + sl * (f * ss - rl * ul),
                ul * (El + pl) + sl * (e - El), rl * ul * zl + sl * (f * zl - rl * zl))
    f = rr * (sr - ur) / (sr - ss)
    e = f * (Er / rr + (ss - ur) * (ss + pr / (rr * (sr - ur))))
    return (rr * ur + sr * (f - rr), rr * ur * ur + pr + sr * (f * ss - rr * ur),
            ur * (Er + pr) + sr * (e - Er), rr * ur * zr + sr * (f * zr - rr * zr))


@nb.njit(cache=True)
def _transport_rhs(U, dx, g):
    n = U.shape[1]
    W = np.empty((4, n))
    for i in range(n):
        r = U[0, i]
        u = U[1, i] / r
        W[0, i] = r
        W[1, i] = u
        W[2, i] = (g - 1) * (U[2, i] - 0.5 * r * u * u)
        W[3, i] = U[3, i] / r
    sl = np.empty((4, n))
    for k in range(4):
        for i in range(n):
            sl[k, i] = _minmod(W[k, i] - W[k, (i - 1) % n], W[k, (i + 1) % n] - W[k, i])
    F = np.empty((4, n))  # F[:, i] is the flux through face i+1/2
    for i in range(n):
        j = (i + 1) % n
        f = _hllc(W[0, i] + 0.5 * sl[0, i], W[1, i] + 0.5 * sl[1, i], W[2, i] + 0.5 * sl[2, i],
                  W[3, i] + 0.5 * sl[3, i], W[0, j] - 0.5 * sl[0, j], W[1, j] - 0.5 * sl[1, j],
                  W[2, j] - 0.5 * sl[2, j], W[3, j] - 0.5 * sl[3, j], g)
        for k in range(4):
            F[k, i] = f[k]
    d = np.empty((4, n))
    for k in range(4):
        for i in range(n):
            d[k, i] = -(F[k, i] - F[k, (i - 1) % n]) / dx
    return d


@nb.njit(cache=True)
def _sources(U, sp):
    g, R, minj0, pcrit, Tinj, mix, Treg, Da, Tign, hv, Ea, kex = (
        sp[0], sp[1], sp[2], sp[3], sp[4], sp[5], sp[6], sp[7], sp[8], sp[9], sp[10], sp[11])
    n = U.shape[1]
    S = np.zeros((4, n))
    for i in range(n):
        r = U[0, i]
        u = U[1, i] / r
        p = (g - 1) * (U[2, i] - 0.5 * r * u * u)
        T = p / (r * R)
        z = max(U[3, i] / r, 0.0)
        if p < pcrit:
            m = minj0 * (1.0 - p / pcrit)
            S[0, i] += m
            S[2, i] += m * R * Tinj / (g - 1)
        if T < Treg:
            S[3, i] += r * mix * (1.0 - z)
        if T > 1.01 * Tign:
            w = Da * r * z * np.exp(-Ea / T)
            S[3, i] -= w
            S[2, i] += hv * w
        S[0, i] -= kex * r
        S[1, i] -= kex * U[1, i]
        S[2, i] -= kex * (U[2, i] + p)
        S[3, i] -= kex * U[3, i]
    return S


@nb.njit(cache=True)
def _max_speed(U, g):
    smax = 0.0
    bad = -1
    for i in range(U.shape[1]):
        r = U[0, i]
        u = U[1, i] / r
        p = (g - 1) * (U[2, i] - 0.5 * r * u * u)
        if not (r > 0 and p > 0):
            return -1.0, i
        v = abs(u) + np.sqrt(g * p / r)
        if v > smax:
            smax = v
    return smax, bad


@nb.njit(cache=True)
def _clip_z(U):
    for i in range(U.shape[1]):
        if U[3, i] < 0:
            U[3, i] = 0.0
        elif U[3, i] > U[0, i]:
            U[3, i] = U[0, i]


@nb.njit(cache=True)
def _transport(U, dt, dx, g):
    U1 = U + dt * _transport_rhs(U, dx, g)
    return 0.5 * U + 0.5 * (U1 + dt * _transport_rhs(U1, dx, g))


@nb.njit(cache=True)
def _source_step(U, dt, sp):
    S1 = _sources(U, sp)
    Ut = U + dt * S1
    _clip_z(Ut)
    U = U + 0.5 * dt * (S1 + _sources(Ut, sp))
    _clip_z(U)
    return U


@nb.njit(cache=True)
def _advance(U, t, t_end, dx, cfl, sp, with_sources):
    """Step until t >= t_end. Returns (U, t, status, info): status 0 ok, 1 nonphysical
    (info = cell), 2 dt underflow (info = max wavespeed)."""
    g = sp[0]
    while t < t_end:
        smax, bad = _max_speed(U, g)
        if smax < 0:
            return U, t, 1, float(bad)
        dt = cfl * dx / smax
        if dt < 1e-12:
            return U, t, 2, smax
        U = _transport(U, dt, dx, g)
        if with_sources:
            U = _source_step(U, dt, sp)
        t += dt
    return U, t, 0, 0.0


# ---------------------------------------------------------------- python API

def hllc_flux(left, right, gamma: float, cell: int | None = None) -> np.ndarray:
    """HLLC flux between two primitive states (rho, u, p, z); z rides the contact wave."""
    rl, ul, pl, zl = (float(v) for v in left)
    rr, ur, pr, zr = (float(v) for v in right)
    for side, r, p in (("left", rl, pl), ("right", rr, pr)):
        if not (r > 0 and p > 0 and np.isfinite(r) and np.isfinite(p)):
            where = f" at cell {cell}" if cell is not None else ""
            raise KochError(f"nonphysical {side} state{where}: rho={r}, p={p}", cell=cell)
    return np.array(_hllc(rl, ul, pl, zl, rr, ur, pr, zr, gamma))


def euler_flux(w, gamma: float) -> np.ndarray:
    r, u, p, z = (float(v) for v in w)
    E = p / (gamma - 1) + 0.5 * r * u * u
    return np.array([r * u, r * u * u + p, u * (E + p), r * u * z])


def source_terms(state: KochState | PrimState, params: KochParams) -> np.ndarray:
    """Per-cell rates (4 x m_x) of injection + mixing + reaction + exhaust."""
    if isinstance(state, PrimState):
        state = to_cons(state, params.gamma)
    check_physical(state, params.gamma)
    return _sources(state.U, params.source_vector())


def transport_step(state: KochState, dt: float, params: KochParams) -> KochState:
    return KochState.from_U(_transport(state.U, dt, params.dx, params.gamma), state.t + dt)


def stable_dt(state: KochState, params: KochParams) -> float:
    smax, bad = _max_speed(state.U, params.gamma)
    if smax < 0:
        raise KochError(f"nonphysical state in cell {bad}", cell=bad)
    return params.cfl * params.dx / smax


def step(state: KochState, params: KochParams, sources: bool = True) -> tuple[KochState, float]:
    """One split step; dt from the CFL condition on max(|u| + c)."""
    U = state.U
    smax, bad = _max_speed(U, params.gamma)
    if smax < 0:
        raise KochError(f"nonphysical state in cell {bad}", cell=bad)
    dt = params.cfl * params.dx / smax
    if dt < 1e-12:
        raise KochError(f"time step underflow (dt={dt:.3g}), max wavespeed {smax:.6g}", wavespeed=smax)
    U = _transport(U, dt, params.dx, params.gamma)
    if sources:
        U = _source_step(U, dt, params.source_vector())
    return KochState.from_U(U, state.t + dt), dt


def run(params: KochParams, seed: int = 0, ignition_kernels: int | None = None, state: KochState | None = None,
        sources: bool = True) -> FieldSeries:
    """Integrate to t_final and record temperature every ``snapshot_dt`` from ``record_from``.

    The time step never bends to hit output times; each snapshot is the state at the
    first step boundary at or after its nominal time, so the trajectory does not depend
    on the output stride.
    """
    st = state or init_state(params, seed, ignition_kernels)
    U, t = st.U, st.t
    sp = params.source_vector()
    times = np.arange(params.record_from, params.t_final + 1e-9 * params.snapshot_dt, params.snapshot_dt)
    out = np.empty((params.m_x, len(times)))
    for k, te in enumerate(times):
        U, t, status, info = _advance(U, t, te, params.dx, params.cfl, sp, sources)
        if status == 1:
            raise KochError(f"nonphysical state in cell {int(info)} at t={t:.6g}", cell=int(info))
        if status == 2:
            raise KochError(f"time step underflow at t={t:.6g}, max wavespeed {info:.6g}", wavespeed=info)
        r = U[0]
        u = U[1] / r
        out[:, k] = (params.gamma - 1) * (U[2] - 0.5 * r * u * u) / (r * params.R)
    return FieldSeries(out, params.dx, params.snapshot_dt, params.L_dom, label="T")


# ---------------------------------------------------------------- wave counting

def count_peaks(T: np.ndarray) -> int:
    """Peaks of one periodic snapshot above min + range/2 with prominence >= range/4."""
    lo, hi = float(T.min()), float(T.max())
    rng = hi - lo
    if rng <= 1e-3 * max(abs(lo), abs(hi), 1e-12):
        return 0
    Tr = np.roll(T, -int(np.argmin(T)))
    pk, _ = find_peaks(Tr, height=lo + 0.5 * rng, prominence=0.25 * rng)
    return len(pk)


@dataclass(frozen=True)
class WaveCount:
    count: int
    label: str
    mode_fraction: float
    max_rel_std: float


def count_waves(series: FieldSeries, window: tuple[int, int] | None = None) -> WaveCount:
    """Modal per-snapshot peak count over a window; 'pulsing' when the spatial maximum
    varies by more than 20% (relative std) across the window."""
    a, b = window if window is not None else (0, series.m)
    if not 0 <= a < b <= series.m:
        raise ValueError(f"empty or out-of-range window ({a}, {b})")
    T = series.data[:, a:b]
    counts = np.array([count_peaks(T[:, k]) for k in range(T.shape[1])])
    bc = np.bincount(counts)
    mode = int(np.argmax(bc))
    mx = T.max(axis=0)
    rs = float(mx.std() / abs(mx.mean())) if mx.mean() != 0 else 0.0
    return WaveCount(mode, "pulsing" if rs > 0.2 else f"steady-{mode}", float(bc[mode] / len(counts)), rs)


def drift_speed(series: FieldSeries, window: tuple[int, int] | None = None) -> float:
    """Mean pattern speed (length per time), positive for motion toward +x.

    Unwraps the phase of the strongest nonzero Fourier mode over time and fits a line, so
    sub-cell displacements per snapshot are resolved.
    """
    a, b = window if window is not None else (0, series.m)
    if b - a < 2:
        return 0.0
    F = np.fft.rfft(series.data[:, a:b], axis=0)
    k = 1 + int(np.argmax(np.abs(F[1:]).mean(axis=1)))
    phase = np.unwrap(np.angle(F[k]))
    t = np.arange(b - a) * series.dt
    slope = np.polyfit(t, phase, 1)[0]
    return float(-slope * series.domain_length / (2 * np.pi * k))


# ---------------------------------------------------------------- scalar analog

@dataclass(frozen=True)
class AnalogParams:
    q: float = 1.0
    k: float = 1.0
    u_c: float = 1.1
    alpha_act: float = 0.3
    eps_loss: float = 0.15
    beta_recovery: float = 0.25
    u_p: float = 0.5
    nu: float = 0.1

    def __post_init__(self):
        if not self.alpha_act > 0:
            raise ConfigError("alpha_act must be positive")
        if self.eps_loss < 0 or self.nu < 0:
            raise ConfigError("eps_loss and nu must be nonnegative")


@dataclass(frozen=True)
class AnalogGrid:
    n: int = 128
    length: float = 2 * np.pi
    dt: float = 1e-3
    t_final: float = 10.0
    out_every: int = 10

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.length / self.n


def spectral_dx(u: np.ndarray, length: float, order: int = 1) -> np.ndarray:
    from .sindy import spectral_derivative_array

    return spectral_derivative_array(u, order, length)


def analog_rhs(u: np.ndarray, lam: np.ndarray, x_grid: np.ndarray, p: AnalogParams,
               length: float | None = None):
    """du/dt = -u u_x + q k (1-lam) exp((u-u_c)/alpha) - eps u^2 + nu u_xx,
    dlam/dt = (1-lam) k exp((u-u_c)/alpha) - beta_recovery lam H(u_p - u)."""
    u = np.asarray(u, dtype=np.float64)
    if length is None:
        length = float(x_grid[1] - x_grid[0]) * len(x_grid)
    ux = spectral_dx(u, length, 1)
    w = p.k * np.exp((u - p.u_c) / p.alpha_act)
    du = -u * ux + p.q * (1 - lam) * w - p.eps_loss * u * u
    if p.nu:
        du = du + p.nu * spectral_dx(u, length, 2)
    dlam = (1 - lam) * w - p.beta_recovery * lam * (u < p.u_p)
    return du, dlam


def analog_initial(grid: AnalogGrid) -> tuple[np.ndarray, np.ndarray]:
    x = grid.x
    L = grid.length
    d = (x - L / 2 + L / 2) % L - L / 2
    u0 = 0.3 + 0.8 * np.exp(-((d - 0.0) / (L / 20)) ** 2) + 0.2 * np.sin(2 * np.pi * x / L)
    return u0, np.zeros_like(x)


def _corr_vars(model, allowed: set[str], mode: str):
    missing = model.variables() - allowed
    if missing:
        raise ConfigError(f"{mode} correction references unavailable variables {sorted(missing)}")


def integrate_corrected(params: AnalogParams, correction=None, gamma_scale: float = 0.0, mode: str = "direct",
                        gamma_lf: float = 0.0, gamma_hf: float = 0.0, grid: AnalogGrid = AnalogGrid(),
                        u0: np.ndarray | None = None, lam0: np.ndarray | None = None,
                        u_hf0: np.ndarray | None = None) -> FieldSeries:
    """Heun (RK2) integration of the analog model with an optional discovered correction.

    direct: du/dt += gamma_scale * h(u, u_x, ...), h a ``direct_missing`` model.
    hierarchical: du/dt += gamma_lf * f + gamma_hf * g with ``correction = (f, g)``.
    In hierarchical mode the uncorrected trajectory u_base and an HF component u_hf are
    advanced alongside u, with du = u - u_base, u_lf = u - u_hf and du_hf/dt = gamma_hf * g.
    """
    if u0 is None:
        u0, lam0 = analog_initial(grid)
    lam0 = np.zeros_like(u0) if lam0 is None else lam0
    L = grid.length
    x = grid.x
    f_lf = g_hf = None
    if mode == "direct":
        if correction is not None:
            if isinstance(correction, tuple) or correction.target != "direct_missing":
                raise ConfigError("direct mode needs a direct_missing model")
            _corr_vars(correction, {"u"}, mode)
    elif mode == "hierarchical":
        if not (isinstance(correction, tuple) and len(correction) == 2):
            raise ConfigError("hierarchical mode needs an (lf_correction, hf_dynamics) model pair")
        f_lf, g_hf = correction
        if f_lf.target != "lf_correction" or g_hf.target != "hf_dynamics":
            raise ConfigError("hierarchical mode needs lf_correction and hf_dynamics models")
        _corr_vars(f_lf, {"u", "du", "u_lf"}, mode)
        _corr_vars(g_hf, {"u", "u_hf", "u_lf"}, mode)
    else:
        raise ConfigError(f"unknown correction mode {mode!r}")

    def rhs(y):
        u, lam = y[0], y[1]
        du, dl = analog_rhs(u, lam, x, params, L)
        if mode == "direct":
            if correction is not None:
                du = du + gamma_scale * correction.evaluate({"u": u}, L)
            return [du, dl]
        ub, lb, uh = y[2], y[3], y[4]
        dub, dlb = analog_rhs(ub, lb, x, params, L)
        f = f_lf.evaluate({"u": u, "du": u - ub, "u_lf": u - uh}, L)
        g = g_hf.evaluate({"u": u, "u_hf": uh, "u_lf": u - uh}, L)
        return [du + gamma_lf * f + gamma_hf * g, dl, dub, dlb, gamma_hf * g]

    y = [np.array(u0, dtype=np.float64), np.array(lam0, dtype=np.float64)]
    if mode == "hierarchical":
        y += [y[0].copy(), y[1].copy(), np.zeros_like(y[0]) if u_hf0 is None else np.array(u_hf0, float)]
    nsteps = int(round(grid.t_final / grid.dt))
    dt = grid.dt
    out = [y[0].copy()]
    for i in range(1, nsteps + 1):
        k1 = rhs(y)
        k2 = rhs([a + dt * b for a, b in zip(y, k1)])
        y = [a + 0.5 * dt * (b + c) for a, b, c in zip(y, k1, k2)]
        if not np.all(np.isfinite(y[0])):
            raise KochError(f"analog integration diverged at t={i * dt:.4g}")
        if i % grid.out_every == 0:
            out.append(y[0].copy())
    return FieldSeries(np.array(out).T, L / grid.n, dt * grid.out_every, L, label="u")


def analog_run(params: AnalogParams, grid: AnalogGrid = AnalogGrid(), u0=None, lam0=None) -> FieldSeries:
    return integrate_corrected(params, None, 0.0, "direct", grid=grid, u0=u0, lam0=lam0)


def params_with(params: KochParams, **changes) -> KochParams:
    return replace(params, **changes)


def params_dict(params) -> dict:
    return asdict(params)
