"""PNG figures, each written next to a CSV holding exactly the plotted numbers."""

from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .fields import FieldSeries, _atomic_write_bytes, _atomic_write_text  # noqa: E402
from .metrics import power_spectrum  # noqa: E402

KINDS = ("heatmap", "slice", "spectrum", "curves")


def _save_png(fig, path: Path) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=80)
    plt.close(fig)
    _atomic_write_bytes(path, buf.getvalue())


def _csv(rows, header: str | None = None) -> str:
    lines = [header] if header else []
    lines += [",".join(repr(float(v)) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


def heatmap(series: FieldSeries, out: Path) -> tuple[Path, Path]:
    """Space on the horizontal axis, time upward; the CSV is the n x m data block."""
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(series.data.T, origin="lower", aspect="auto", cmap="inferno",
                   extent=(0, series.domain_length, 0, series.m * series.dt))
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    ax.set_title(series.label)
    fig.colorbar(im, ax=ax)
    png, csv = out.with_suffix(".png"), out.with_suffix(".csv")
    _save_png(fig, png)
    _atomic_write_text(csv, _csv(series.data))
    return png, csv


def slices(series: list[FieldSeries], out: Path, snapshot: int = -1) -> tuple[Path, Path]:
    """One snapshot of each series overlaid; CSV columns are x then one column per series."""
    k = snapshot % series[0].m
    x = series[0].x
    fig, ax = plt.subplots(figsize=(6, 3))
    for s in series:
        ax.plot(x, s.data[:, k], label=s.label)
    ax.set_xlabel("x")
    ax.legend()
    png, csv = out.with_suffix(".png"), out.with_suffix(".csv")
    _save_png(fig, png)
    _atomic_write_text(csv, _csv(np.column_stack([x] + [s.data[:, k] for s in series])))
    return png, csv


def spectrum(series: FieldSeries, out: Path) -> tuple[Path, Path]:
    """Time-averaged energy per wavenumber; one CSV row ``k,energy`` per bin (n//2 + 1 rows)."""
    rep = power_spectrum(series)
    k = rep.wavenumbers
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.semilogy(k, np.maximum(rep.energy, 1e-300), "o-")
    ax.set_xlabel("k")
    ax.set_ylabel("energy")
    ax.set_title(series.label)
    png, csv = out.with_suffix(".png"), out.with_suffix(".csv")
    _save_png(fig, png)
    _atomic_write_text(csv, _csv(np.column_stack([k, rep.energy])))
    return png, csv


def curves(curve_files: list[Path], out: Path) -> tuple[Path, Path]:
    """Training curves (epoch, train, valid) stacked; CSV columns stage, epoch, train, valid."""
    fig, ax = plt.subplots(figsize=(6, 3))
    rows = []
    for j, f in enumerate(curve_files):
        a = np.loadtxt(f, delimiter=",", skiprows=1, ndmin=2)
        ax.semilogy(a[:, 0], a[:, 1], label=f"{Path(f).stem} train")
        if a.shape[1] > 2:
            ax.semilogy(a[:, 0], a[:, 2], "--", label=f"{Path(f).stem} valid")
        rows += [(j, *r[:3]) for r in a]
    ax.set_xlabel("epoch")
    ax.legend(fontsize=7)
    png, csv = out.with_suffix(".png"), out.with_suffix(".csv")
    _save_png(fig, png)
    _atomic_write_text(csv, _csv(rows, "stage,epoch,train,valid"))
    return png, csv
