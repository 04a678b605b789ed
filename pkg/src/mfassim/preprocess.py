"""Preprocessing: scattered-data interpolation, ring extraction, derotation, scaling,
sensor sampling, lagged datasets and the synthetic reality generator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .fields import FieldError, FieldSeries, SensorTrace


@dataclass(frozen=True)
class PointCloud:
    coords: np.ndarray  # N_s x 3
    values: np.ndarray  # N_s

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if c.ndim != 2 or c.shape[1] != 3 or v.shape != (c.shape[0],):
            raise FieldError("point cloud needs N x 3 coords and N values")
        if c.shape[0] == 0:
            raise FieldError("empty point cloud")
        if not np.all(np.isfinite(c)):
            raise FieldError("non-finite coordinates")
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class ScalerParams:
    min: float
    max: float

    def __post_init__(self):
        if not self.max > self.min:
            raise FieldError(f"scaler needs max > min, got [{self.min}, {self.max}]")


def idw_weights(cloud: PointCloud, targets: np.ndarray, k: int = 8, eps: float | None = None):
    """Neighbour indices and normalized weights (d + eps)^-1/2 over the k nearest sources.

    Neighbours are ordered by (distance, index) so equidistant sources never depend
    on the tree traversal order.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    ns = cloud.coords.shape[0]
    if not 1 <= k <= ns:
        raise FieldError(f"need 1 <= k <= N_s, got k={k}, N_s={ns}")
    if eps is None:
        span = np.ptp(cloud.coords, axis=0)
        eps = 1e-6 * float(np.linalg.norm(span)) or 1e-12
    if eps <= 0:
        raise FieldError("eps must be positive")
    tree = cKDTree(cloud.coords)
    # one extra neighbour so a tie straddling the k-th slot can be resolved by index
    kq = min(k + 1, ns)
    d, idx = tree.query(targets, k=kq)
    d, idx = d.reshape(len(targets), kq), idx.reshape(len(targets), kq)
    order = np.lexsort((idx, d), axis=1)
    d = np.take_along_axis(d, order, 1)[:, :k]
    idx = np.take_along_axis(idx, order, 1)[:, :k]
    w = (d + eps) ** -0.5
    w /= w.sum(axis=1, keepdims=True)
    return idx, w


def idw_interpolate(cloud: PointCloud, targets: np.ndarray, k: int = 8, eps: float | None = None) -> np.ndarray:
    idx, w = idw_weights(cloud, targets, k, eps)
    return np.sum(w * cloud.values[idx], axis=1)


def ring_extract(cyl: np.ndarray, heights: np.ndarray, h_star: float, dx: float = 1.0,
                 dt: float = 1.0, domain_length: float | None = None) -> FieldSeries:
    """Average over the radial points at height h_star.

    ``cyl`` is (m, n_r, n_phi, n_h): per snapshot a cylindrical grid, here n_r = 3.
    Returns an n_phi x m series.
    """
    cyl = np.asarray(cyl, dtype=np.float64)
    if cyl.ndim == 3:
        cyl = cyl[None]
    heights = np.asarray(heights, dtype=np.float64)
    j = np.flatnonzero(np.isclose(heights, h_star, rtol=0, atol=1e-9 * max(1.0, np.ptp(heights))))
    if j.size == 0:
        raise FieldError(f"h*={h_star} is not a grid plane")
    ring = cyl[:, :, :, j[0]].mean(axis=1)  # m x n_phi
    n = ring.shape[1]
    return FieldSeries(ring.T, dx, dt, domain_length if domain_length is not None else n * dx)


def derotate(series: FieldSeries, rate: float) -> FieldSeries:
    """Shift snapshot i back by round(i * rate * n / 2pi) cells (rate in radians per snapshot)."""
    n, m = series.data.shape
    out = np.empty_like(series.data)
    for i in range(m):
        out[:, i] = np.roll(series.data[:, i], -int(round(i * rate * n / (2 * np.pi))))
    return series.with_data(out)


def minmax_scale(series: FieldSeries, params: ScalerParams | None = None):
    if params is None:
        lo, hi = float(series.data.min()), float(series.data.max())
        if not hi > lo:
            raise FieldError("cannot min-max scale a constant field")
        params = ScalerParams(lo, hi)
    return series.with_data((series.data - params.min) / (params.max - params.min)), params


def unscale(series: FieldSeries, params: ScalerParams) -> FieldSeries:
    return series.with_data(series.data * (params.max - params.min) + params.min)


def subsample(series: FieldSeries, start: int, end: int, stride: int) -> FieldSeries:
    if stride < 1 or not 0 <= start < end <= series.m:
        raise FieldError(f"bad subsample range ({start}, {end}, {stride}) for m={series.m}")
    return series.with_data(series.data[:, start:end:stride], dt=series.dt * stride)


def uniform_sensors(n: int, p: int) -> np.ndarray:
    if not 1 <= p <= n:
        raise FieldError(f"need 1 <= p <= n, got p={p}")
    return (np.arange(p) * n) // p


def sensor_sample(series: FieldSeries, indices) -> SensorTrace:
    idx = np.asarray(indices, dtype=np.int64)
    return SensorTrace(series.data[idx], idx, series.n, series.dt)


def lagged_dataset(trace, lags: int, pad: bool = True):
    """Histories (samples x lags x p) and the target snapshot index of each sample.

    History row ``lags-1`` is the newest measurement, taken at the target index.
    """
    data = trace.data if isinstance(trace, SensorTrace) else np.asarray(trace, dtype=np.float64)
    if lags < 1:
        raise FieldError("lags must be >= 1")
    p, m = data.shape
    if pad:
        src = np.concatenate([np.zeros((p, lags - 1)), data], axis=1)
        targets = np.arange(m)
    else:
        if m < lags:
            return np.zeros((0, lags, p)), np.zeros(0, dtype=np.int64)
        src = data
        targets = np.arange(lags - 1, m)
    off = 0 if pad else lags - 1
    hist = np.stack([src[:, t - off:t - off + lags].T for t in targets])
    return hist, targets


def lowpass_modes(u: np.ndarray, kmax: int) -> np.ndarray:
    uh = np.fft.rfft(u, axis=0)
    uh[kmax + 1:] = 0
    return np.fft.irfft(uh, n=u.shape[0], axis=0)


def dominant_phase(u: np.ndarray, k: int) -> np.ndarray:
    """Unwrapped phase psi(t) such that mode k of each column looks like cos(k*2pi*x/L - psi)."""
    uh = np.fft.rfft(u, axis=0)[k]
    return np.unwrap(-np.angle(uh))


def synth_reality(base: FieldSeries,
                  harmonics: Sequence[tuple[int, float, bool]] = ((3, 0.06, True), (6, 0.04, True), (9, 0.025, True)),
                  perturbed: FieldSeries | Callable[[], FieldSeries] | None = None,
                  noise_sigma: float = 0.01, seed: int = 0, envelope_gain: float = 0.25,
                  align_phase: bool = True, lock_mode: int | None = None) -> FieldSeries:
    """Structured stand-in for a rich simulation built around the cheap one.

    ``base`` and ``perturbed`` are raw (unscaled) fields on the same grid. The core
    field is the perturbed run when given, otherwise the base; it is min-max scaled
    with the base's range, so with no harmonics, perturbation or noise the result is
    exactly the scaled base. Harmonic k adds a_k * env * cos(k*2pi*x/L - theta_k(t)),
    where env = 1 + g * (normalized k<=3 content of the core) and, when locked,
    theta_k follows the phase of the core's dominant mode.
    """
    n, m = base.data.shape
    for k, _, _ in harmonics:
        if not 0 < k < n / 2:
            raise FieldError(f"harmonic k={k} must satisfy 0 < k < n/2 = {n / 2}")
    _, sc = minmax_scale(base)
    core_raw = perturbed() if callable(perturbed) else perturbed
    if core_raw is None:
        core_raw = base
    if core_raw.data.shape != base.data.shape:
        raise FieldError("perturbed run must match the base grid")
    core = (core_raw.data - sc.min) / (sc.max - sc.min)
    base_s = (base.data - sc.min) / (sc.max - sc.min)
    kd = lock_mode or int(np.argmax(np.abs(np.fft.rfft(base_s, axis=0))[1:].mean(axis=1)) + 1)
    if align_phase and core_raw is not base:
        # integer-cell shift putting the core's dominant front where the base has it
        dpsi = dominant_phase(base_s, kd) - dominant_phase(core, kd)
        for i in range(m):
            core[:, i] = np.roll(core[:, i], int(round(dpsi[i] / kd * n / (2 * np.pi))))
    out = core.copy()
    if harmonics:
        x = np.arange(n) * base.dx * 2 * np.pi / base.domain_length
        lf = lowpass_modes(core, 3) - core.mean(axis=0)
        scale = np.abs(lf).max()
        env = 1.0 + envelope_gain * (lf / scale if scale > 0 else 0.0)
        psi = dominant_phase(core, kd)
        for k, a, locked in harmonics:
            theta = (k / kd) * psi if locked else np.zeros(m)
            out += a * env * np.cos(k * x[:, None] - theta[None, :])
    if noise_sigma > 0:
        out += np.random.default_rng(seed).normal(0.0, noise_sigma, size=out.shape)
    return base.with_data(out, label="reality")
