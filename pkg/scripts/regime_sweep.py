"""Wave count versus injection slot width s for the reactive-Euler Koch solver.

    python3 scripts/regime_sweep.py --s 0.04 0.05 0.06 0.07 --seeds 0 1 2 --out runs/sweep
"""

import argparse
import csv
import time
from dataclasses import replace
from pathlib import Path

from mfassim import koch
from mfassim.fields import write_field


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--s", type=float, nargs="+", default=[0.04, 0.05, 0.06, 0.07])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--t-final", type=float, help="override the run length")
    ap.add_argument("--out", type=Path, default=Path("runs/sweep"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    rows = []
    for s in args.s:
        for seed in args.seeds:
            p = koch.KochParams(s=s)
            if args.t_final is not None:
                p = replace(p, t_final=args.t_final)
            t0 = time.perf_counter()
            raw = koch.run(p, seed=seed)
            wall = time.perf_counter() - t0
            wc = koch.count_waves(raw, (raw.m - raw.m // 4, raw.m))
            speed = koch.drift_speed(raw, (raw.m - raw.m // 4, raw.m))
            write_field(args.out / f"s{s:g}_seed{seed}.fld", raw)
            rows.append((s, seed, wc.count, wc.label, wc.mode_fraction, speed, wall))
            print(f"s={s:g} seed={seed}: {wc.label:<10} mode fraction {wc.mode_fraction:.2f}  "
                  f"speed {speed:+.3f}  {wall:.1f} s")

    with open(args.out / "regimes.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["s", "seed", "count", "label", "mode_fraction", "speed", "seconds"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
