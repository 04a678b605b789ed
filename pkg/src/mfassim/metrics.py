"""Error metrics, spectral diagnostics and the plain-text metrics report."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from scipy.ndimage import uniform_filter

from .fields import FieldSeries, _atomic_write_text


def _arr(a) -> np.ndarray:
    return a.data if isinstance(a, FieldSeries) else np.asarray(a, dtype=np.float64)


def rmse(a, b, window: tuple[int, int] | None = None) -> float:
    """Root-mean-square difference, optionally restricted to snapshot columns [start, stop)."""
    x, y = _arr(a), _arr(b)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    if window is not None:
        x, y = x[:, window[0]:window[1]], y[:, window[0]:window[1]]
    if x.size == 0:
        raise ValueError("empty window")
    d = np.abs(x - y)
    m = d.max()
    if m == 0:
        return 0.0
    # scaled so tiny nonzero differences do not underflow to an RMSE of zero
    return float(m * np.sqrt(np.mean((d / m) ** 2)))


def ssim(a, b, win: int = 7) -> float:
    """Mean local SSIM of two (x, t) images with a uniform win x win window.

    The dynamic range D is taken from ``a``; a constant ``a`` falls back to D = 1.
    Borders use reflection so every pixel contributes a window.
    """
    x, y = _arr(a), _arr(b)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    d = float(x.max() - x.min()) or 1.0
    c1, c2 = (0.01 * d) ** 2, (0.03 * d) ** 2
    f = lambda z: uniform_filter(z, size=win, mode="reflect")
    mx, my = f(x), f(y)
    sxx = f(x * x) - mx * mx
    syy = f(y * y) - my * my
    sxy = f(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


@dataclass(frozen=True)
class SpectrumReport:
    magnitude: np.ndarray  # |u_hat(k)| averaged over snapshots, k = 0..n//2
    energy: np.ndarray  # |u_hat(k)|^2 averaged over snapshots

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.arange(self.magnitude.size)

    def fractions(self) -> np.ndarray:
        tot = self.energy.sum()
        return self.energy / tot if tot > 0 else np.zeros_like(self.energy)


def power_spectrum(series) -> SpectrumReport:
    """Real-FFT of every snapshot (column), magnitude and energy averaged over time."""
    u = _arr(series)
    uh = np.fft.rfft(u, axis=0)
    mag = np.abs(uh)
    return SpectrumReport(mag.mean(axis=1), (mag**2).mean(axis=1))


def band_energy_fraction(report: SpectrumReport, bins: Iterable[int], within: Iterable[int] | None = None) -> float:
    """Energy in ``bins`` over energy in ``within`` (all bins by default)."""
    e = report.energy
    pool = np.arange(e.size) if within is None else np.asarray(sorted(set(within)), dtype=int)
    tot = e[pool].sum()
    sel = [k for k in set(bins) if k in set(pool.tolist())]
    return float(e[sel].sum() / tot) if tot > 0 else 0.0


def write_report(path, values: Mapping[str, object]) -> None:
    """key: value lines; sequences are written space-separated with repr floats."""
    lines = []
    for k, v in values.items():
        if isinstance(v, (list, tuple, np.ndarray)):
            v = " ".join(repr(float(x)) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{k}: {v}")
    _atomic_write_text(Path(path), "\n".join(lines) + "\n")


def read_report(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if ":" in line:
            k, v = line.split(":", 1)
            out[k.strip()] = v.strip()
    return out
