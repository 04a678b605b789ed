"""``c2r`` command line: simulate, synth, train, eval, discover, correct, plot.

Exit codes: 0 success, 2 configuration error, 3 missing prerequisite, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import koch, pipeline, plots
from .config import RunConfig, dump_config, load_config, with_section
from .fields import FieldError, _atomic_write_text, read_field, write_field
from .nn import TrainingError
from .sindy import SindyError, TARGETS

log = logging.getLogger("c2r")

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC = 0, 2, 3, 4


def _sweep_values(spec: str) -> tuple[str, list[float]]:
    """``s=0.04:0.07:0.01`` -> ("s", [0.04, 0.05, 0.06, 0.07]); also accepts ``s=0.04,0.06``."""
    if "=" not in spec:
        raise koch.ConfigError(f"sweep {spec!r} is not name=start:stop:step or name=v1,v2")
    name, rng = spec.split("=", 1)
    try:
        if ":" in rng:
            a, b, h = (float(v) for v in rng.split(":"))
            if h <= 0:
                raise ValueError("step must be positive")
            vals = [round(v, 12) for v in np.arange(a, b + 0.5 * h, h)]
        else:
            vals = [float(v) for v in rng.split(",")]
    except ValueError as e:
        raise koch.ConfigError(f"sweep {spec!r}: {e}") from None
    return name.strip(), vals


def _sweep_one(args):
    cfg, name, value = args
    params = replace(cfg.koch, **{name: value})
    raw = koch.run(params, seed=cfg.synth.seed)
    wc = koch.count_waves(raw, (raw.m - raw.m // 4, raw.m))
    out = cfg.workdir / f"sweep_{name}_{value:g}.fld"
    write_field(out, raw)
    return value, wc


def cmd_simulate(cfg: RunConfig, sweep: str | None, workers: int) -> None:
    if sweep is None:
        sim = pipeline.cmd_simulate(cfg)
        log.info("wrote %s (%d x %d)", cfg.workdir / "sim.fld", sim.n, sim.m)
        return
    name, vals = _sweep_values(sweep)
    if name not in koch.params_dict(cfg.koch):
        raise koch.ConfigError(f"sweep parameter {name!r} is not a koch field")
    jobs = [(cfg, name, v) for v in vals]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            res = list(ex.map(_sweep_one, jobs))
    else:
        res = [_sweep_one(j) for j in jobs]
    lines = [f"{name},count,label,mode_fraction,max_rel_std"]
    for v, wc in res:
        lines.append(f"{v!r},{wc.count},{wc.label},{wc.mode_fraction!r},{wc.max_rel_std!r}")
        print(f"{name}={v:g}: {wc.label} (mode fraction {wc.mode_fraction:.2f})")
    _atomic_write_text(cfg.workdir / f"sweep_{name}.csv", "\n".join(lines) + "\n")


def cmd_plot(cfg: RunConfig, kind: str, inputs: list[str], out: Path | None) -> None:
    wd = cfg.workdir
    if kind == "curves":
        files = [Path(p) for p in inputs] or sorted(wd.glob("stage[134]_curve.csv"))
        if not files:
            raise pipeline.MissingPrerequisite(f"no training curves in {wd}")
        for f in files:
            if not f.exists():
                raise pipeline.MissingPrerequisite(f"missing prerequisite {f}")
        paths = plots.curves(files, out or wd / "curves")
    else:
        files = [Path(p) for p in inputs] or [wd / "real.fld"]
        for f in files:
            if not f.exists():
                raise pipeline.MissingPrerequisite(f"missing prerequisite {f}")
        series = [read_field(f) for f in files]
        if kind == "slice":
            paths = plots.slices(series, out or wd / "slice")
        else:
            fn = plots.heatmap if kind == "heatmap" else plots.spectrum
            if len(series) > 1 and out is not None:
                raise koch.ConfigError("--out takes a single input for heatmap and spectrum plots")
            paths = ()
            for f, s in zip(files, series):
                paths += fn(s, out or wd / f"{kind}_{f.stem}")
    for p in paths:
        print(p)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="c2r", description="Multi-fidelity reconstruction pipeline")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="INI run configuration (defaults when omitted)")
        p.add_argument("--out", type=Path, help="work directory (or output stem for plot)")
        p.add_argument("--seed", type=int, help="override [train] seed and [synth] seed")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    sim = common(sub.add_parser("simulate", help="run the cheap solver and record the dataset window"))
    sim.add_argument("--sweep", help="parameter sweep such as s=0.04:0.07:0.01")
    sim.add_argument("--workers", type=int, default=1)
    common(sub.add_parser("synth", help="build the synthetic reality from the recorded run"))
    tr = common(sub.add_parser("train", help="train one stage or all four"))
    tr.add_argument("--stage", choices=["1", "2", "3", "4", "all"], default="all")
    common(sub.add_parser("eval", help="reconstruct reality and write metrics"))
    dc = common(sub.add_parser("discover", help="sparse regression for one discrepancy target"))
    dc.add_argument("--target", choices=TARGETS, required=True)
    co = common(sub.add_parser("correct", help="integrate the analog model with discovered corrections"))
    co.add_argument("--gamma", type=float, default=1.0)
    co.add_argument("--model", action="append", default=[], help="model file; repeat for an LF/HF pair")
    pl = common(sub.add_parser("plot", help="PNG figure plus CSV of the plotted data"))
    pl.add_argument("--kind", choices=plots.KINDS, required=True)
    pl.add_argument("inputs", nargs="*")
    common(sub.add_parser("config", help="print the effective configuration"))
    return ap


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = with_section(with_section(cfg, "train", seed=args.seed), "synth", seed=args.seed)
    if args.out is not None and args.command != "plot":
        cfg = with_section(cfg, "paths", workdir=str(args.out))
    return cfg


def run(args) -> None:
    cfg = _config(args)
    cmd = args.command
    if cmd == "config":
        print(dump_config(cfg), end="")
        return
    if cmd == "plot":
        if args.out is not None:
            args.out.parent.mkdir(parents=True, exist_ok=True)
        cmd_plot(cfg, args.kind, args.inputs, args.out)
        return
    cfg.workdir.mkdir(parents=True, exist_ok=True)
    if cmd == "simulate":
        cmd_simulate(cfg, args.sweep, args.workers)
    elif cmd == "synth":
        pipeline.cmd_synth(cfg)
    elif cmd == "train":
        stages = [1, 2, 3, 4] if args.stage == "all" else [int(args.stage)]
        for s in stages:
            log.info("stage %d", s)
            pipeline.train(cfg, s)
    elif cmd == "eval":
        rep = pipeline.evaluate(cfg)
        for k in ("rmse_valid", "rmse_valid_lf", "ssim_full", "hf_band_fraction"):
            print(f"{k}: {rep[k]:.6g}")
    elif cmd == "discover":
        print(pipeline.cmd_discover(cfg, args.target).to_text(), end="")
    elif cmd == "correct":
        models = args.model or [cfg.workdir / "model_direct_missing.txt"]
        pipeline.cmd_correct(cfg, models, args.gamma)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        run(args)
    except pipeline.MissingPrerequisite as e:
        print(f"c2r: {e}", file=sys.stderr)
        return EXIT_MISSING
    except (koch.ConfigError, FieldError) as e:
        print(f"c2r: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (koch.KochError, TrainingError, SindyError, FloatingPointError) as e:
        print(f"c2r: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
