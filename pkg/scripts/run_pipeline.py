"""Default sim2real experiment end to end: simulate, synthesize reality, train all
four stages, evaluate, and draw the standard figures.

    python3 scripts/run_pipeline.py --out runs/default [--config my.ini] [--seed 1]
"""

import argparse
import sys
import time
from pathlib import Path

from mfassim import cli
from mfassim.metrics import read_report


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/default"))
    ap.add_argument("--config", type=Path)
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()

    base = ["--out", str(args.out)]
    if args.config:
        base += ["--config", str(args.config)]
    if args.seed is not None:
        base += ["--seed", str(args.seed)]

    t0 = time.perf_counter()
    for cmd in (["simulate"], ["synth"], ["train", "--stage", "all"], ["eval"]):
        t = time.perf_counter()
        code = cli.main(cmd + base)
        print(f"{' '.join(cmd):<18} exit {code}  {time.perf_counter() - t:6.1f} s")
        if code:
            sys.exit(code)
    print(f"total {time.perf_counter() - t0:.1f} s")

    wd = args.out
    plots = [["--kind", "heatmap", str(wd / "real.fld"), "--out", str(wd / "fig_real")],
             ["--kind", "heatmap", str(wd / "recon_full.fld"), "--out", str(wd / "fig_recon")],
             ["--kind", "spectrum", str(wd / "recon_hf.fld"), "--out", str(wd / "fig_hf_spectrum")],
             ["--kind", "slice", str(wd / "real.fld"), str(wd / "recon_lf.fld"), str(wd / "recon_full.fld"),
              "--out", str(wd / "fig_slice")],
             ["--kind", "curves", *map(str, sorted(wd.glob("stage*_curve.csv"))),
              "--out", str(wd / "fig_curves")]]
    for p in plots:
        cli.main(["plot"] + p)

    m = read_report(wd / "metrics.txt")
    full, lf = float(m["rmse_valid"]), float(m["rmse_valid_lf"])
    print(f"validation RMSE  LF {lf:.4f}  LF+HF {full:.4f}  ratio {full / lf:.3f}")
    print(f"HF energy fraction in k = 3, 6, 9: {float(m['hf_band_fraction']):.3f}")


if __name__ == "__main__":
    main()
