"""End-to-end stages operating on a work directory.

Layout of the work directory::

    sim_raw.fld        recorded temperature window of the cheap run (derotated)
    sim.fld            the same, min-max scaled to [0, 1]
    real.fld           synthetic reality on the sim scale
    lf.ckpt            stage 1   (+ stage1_curve.csv)
    gan.ckpt           stage 2   (+ stage2_log.csv)
    hf_stage3.ckpt     stage 3   (+ stage3_curve.csv)
    hf.ckpt            stage 4   (+ stage4_curve.csv)
    metrics.txt, recon_{full,lf,hf}.fld, spectrum.csv       eval
    model_<target>.txt                                       discover
    corrected.fld, uncorrected.fld                           correct

Every file is written to a temporary name first and renamed into place.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import koch
from .config import RunConfig
from .fields import FieldSeries, SensorTrace, _atomic_write_text, read_field, write_field
from .hf_pathway import (HfConfig, HfModel, SparsityConfig, estimate_tau, finetune_stage4, lf_predictions,
                         reconstruct, residual_windows, train_stage3)
from .latent_gan import GanConfig, GanPair, train_stage2
from .metrics import band_energy_fraction, power_spectrum, rmse, ssim, write_report
from .nn import DTYPE, load_checkpoint, load_into, save_checkpoint, state_tensors
from .preprocess import (derotate, lagged_dataset, minmax_scale, sensor_sample, subsample, synth_reality,
                         uniform_sensors)
from .shred_lf import LfConfig, LfModel, chrono_split, train_stage1
from .sindy import discover, read_model, write_model


class MissingPrerequisite(FileNotFoundError):
    pass


STAGE_FILES = {1: "lf.ckpt", 2: "gan.ckpt", 3: "hf_stage3.ckpt", 4: "hf.ckpt"}
SIM_FILES = ("sim_raw.fld", "sim.fld")


def _need(workdir: Path, *names: str) -> list[Path]:
    paths = [Path(workdir) / n for n in names]
    for p in paths:
        if not p.exists():
            raise MissingPrerequisite(f"missing prerequisite {p}")
    return paths


def _write_csv(path: Path, header: str, rows) -> None:
    lines = [header] if header else []
    lines += [",".join(repr(float(v)) if not isinstance(v, (int, np.integer)) else str(int(v)) for v in r)
              for r in rows]
    _atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------- data

def cut_window(raw: FieldSeries, snapshots: int, stride: int, derot: bool) -> FieldSeries:
    """Last ``snapshots`` columns taken every ``stride``, optionally moved into the wave frame."""
    start = raw.m - snapshots * stride
    if start < 0:
        raise koch.ConfigError(f"run has {raw.m} snapshots, need snapshots*stride = {snapshots * stride}")
    win = subsample(raw, start, raw.m, stride)
    assert win.m == snapshots
    if derot:
        c = koch.drift_speed(win)
        win = derotate(win, c * win.dt * 2 * np.pi / win.domain_length)
    return win


def simulate(cfg: RunConfig, params: koch.KochParams | None = None) -> FieldSeries:
    raw = koch.run(params or cfg.koch, seed=cfg.synth.seed)
    return cut_window(raw, cfg.synth.snapshots, cfg.synth.stride, cfg.synth.derotate)


def cmd_simulate(cfg: RunConfig) -> FieldSeries:
    win = simulate(cfg)
    scaled, _ = minmax_scale(win)
    write_field(cfg.workdir / "sim_raw.fld", win)
    write_field(cfg.workdir / "sim.fld", scaled.with_data(scaled.data, label="sim"))
    return scaled


def perturbed_params(cfg: RunConfig) -> koch.KochParams:
    k = cfg.koch
    return koch.params_with(k, Da=k.Da * cfg.synth.da_factor, T_ign=k.T_ign * cfg.synth.t_ign_factor)


def cmd_synth(cfg: RunConfig) -> FieldSeries:
    raw_path, _ = _need(cfg.workdir, *SIM_FILES)
    base = read_field(raw_path)
    sc = cfg.synth
    perturbed = None
    if sc.da_factor != 1 or sc.t_ign_factor != 1:
        perturbed = simulate(cfg, perturbed_params(cfg))
    real = synth_reality(base, sc.harmonics, perturbed, sc.noise_sigma, sc.seed, sc.envelope_gain)
    write_field(cfg.workdir / "real.fld", real)
    return real


# ---------------------------------------------------------------- models

def lf_config(cfg: RunConfig) -> LfConfig:
    m = cfg.model
    return LfConfig(m.p, cfg.koch.m_x, m.d_z, m.hidden, m.layers, m.k_c, m.dropout)


def gan_config(cfg: RunConfig) -> GanConfig:
    t = cfg.train
    return GanConfig(cfg.model.d_z, cfg.model.gan_hidden, cfg.model.gan_hidden, t.epochs2, t.lr_g, t.lr_d,
                     batch=t.batch, anchor=cfg.model.gan_anchor)


def hf_config(cfg: RunConfig) -> HfConfig:
    m = cfg.model
    return HfConfig(m.p, cfg.koch.m_x, m.lags, m.d_z, m.layers, m.attn_hidden, m.hidden, m.shift_hidden,
                    m.amp_hidden, m.gamma0, m.delta_max)


def sparsity_config(cfg: RunConfig, tau: float) -> SparsityConfig:
    m = cfg.model
    return SparsityConfig(m.lambda_sparse, m.beta_oob, m.mu_mag, tau, m.k_c, cfg.train.warmup_fraction)


def _load(module: torch.nn.Module, path: Path) -> torch.nn.Module:
    load_into(module, load_checkpoint(path))
    module.eval()
    return module


def load_lf(cfg: RunConfig) -> LfModel:
    (p,) = _need(cfg.workdir, STAGE_FILES[1])
    return _load(LfModel(lf_config(cfg), cfg.train.seed), p)


def load_gan(cfg: RunConfig) -> GanPair:
    (p,) = _need(cfg.workdir, STAGE_FILES[2])
    return _load(GanPair(gan_config(cfg), cfg.train.seed), p)


def load_hf(cfg: RunConfig, stage: int = 4) -> HfModel:
    (p,) = _need(cfg.workdir, STAGE_FILES[stage])
    return _load(HfModel(hf_config(cfg), cfg.train.seed), p)


@dataclass
class Data:
    sim: FieldSeries
    real: FieldSeries
    indices: np.ndarray
    sim_trace: SensorTrace
    real_trace: SensorTrace
    sim_hist: np.ndarray
    real_hist: np.ndarray
    train_idx: np.ndarray
    valid_idx: np.ndarray


def load_data(cfg: RunConfig, need_real: bool = True) -> Data:
    (sim_p,) = _need(cfg.workdir, "sim.fld")
    sim = read_field(sim_p)
    real = read_field(_need(cfg.workdir, "real.fld")[0]) if need_real else sim
    idx = uniform_sensors(sim.n, cfg.model.p)
    st, rt = sensor_sample(sim, idx), sensor_sample(real, idx)
    sh, _ = lagged_dataset(st, cfg.model.lags, pad=True)
    rh, _ = lagged_dataset(rt, cfg.model.lags, pad=True)
    tr, va = chrono_split(sim.m, cfg.train.valid_fraction)
    return Data(sim, real, idx, st, rt, sh, rh, tr, va)


def real_residuals(cfg: RunConfig, d: Data, lf: LfModel, gan: GanPair) -> np.ndarray:
    u_lf = lf_predictions(lf, gan, d.real_hist)
    return residual_windows(d.real_trace.data, u_lf, d.indices, cfg.model.lags)


def train(cfg: RunConfig, stage: int) -> None:
    """Run one training stage; earlier stages must already have written their checkpoints."""
    wd, t = cfg.workdir, cfg.train
    torch.set_num_threads(1)
    if stage == 1:
        d = load_data(cfg, need_real=False)
        res = train_stage1(d.sim_hist, d.sim.data.T, lf_config(cfg), t.epochs1, t.lr1, t.batch,
                           t.valid_fraction, t.seed)
        save_checkpoint(wd / STAGE_FILES[1], state_tensors(res.model))
        _write_csv(wd / "stage1_curve.csv", "epoch,train_loss,valid_loss", res.curve)
    elif stage == 2:
        lf = load_lf(cfg)
        d = load_data(cfg)
        with torch.no_grad():
            zs = lf.encode(torch.as_tensor(d.sim_hist[d.train_idx], dtype=DTYPE)).numpy()
            zr = lf.encode(torch.as_tensor(d.real_hist[d.train_idx], dtype=DTYPE)).numpy()
        gan, log = train_stage2(zs, zr, gan_config(cfg), t.seed)
        save_checkpoint(wd / STAGE_FILES[2], state_tensors(gan))
        _write_csv(wd / "stage2_log.csv", "step,d_loss,g_loss,d_acc",
                   [(i, a, b, c) for i, (a, b, c) in enumerate(zip(log.d_loss, log.g_loss, log.d_acc))])
    elif stage in (3, 4):
        lf, gan = load_lf(cfg), load_gan(cfg)
        d = load_data(cfg)
        with torch.no_grad():
            R = real_residuals(cfg, d, lf, gan)
        tau = estimate_tau(R, cfg.model.tau_factor, len(d.train_idx))
        scfg = sparsity_config(cfg, tau)
        if stage == 3:
            res = train_stage3(R, d.indices, hf_config(cfg), scfg, t.epochs3, t.lr3, t.batch, t.valid_fraction,
                               t.seed)
        else:
            res = finetune_stage4(load_hf(cfg, 3), R, d.indices, scfg, t.epochs4, t.lr4, t.batch,
                                  t.valid_fraction, t.seed)
        save_checkpoint(wd / STAGE_FILES[stage], state_tensors(res.model))
        _write_csv(wd / f"stage{stage}_curve.csv", "epoch,train_loss,valid_loss", res.curve)
    else:
        raise ValueError(f"unknown stage {stage}")


# ---------------------------------------------------------------- evaluation

HF_BINS = (3, 6, 9)


def evaluate(cfg: RunConfig) -> dict:
    lf, gan, hf = load_lf(cfg), load_gan(cfg), load_hf(cfg)
    d = load_data(cfg)
    with torch.no_grad():
        rec = reconstruct(d.real_trace, lf, gan, hf, cfg.model.lags, d.real)
    va = (int(d.valid_idx[0]), d.real.m)
    wd = cfg.workdir
    write_field(wd / "recon_full.fld", rec.full)
    write_field(wd / "recon_lf.fld", rec.lf)
    write_field(wd / "recon_hf.fld", rec.hf)
    spec = {k: power_spectrum(v) for k, v in (("real", d.real), ("full", rec.full), ("lf", rec.lf),
                                              ("hf", rec.hf))}
    _write_csv(wd / "spectrum.csv", "k,real,full,lf,hf",
               [(k, *(spec[s].energy[k] for s in ("real", "full", "lf", "hf")))
                for k in range(spec["real"].energy.size)])
    inband = range(cfg.model.k_c + 1)
    report = {
        "rmse_valid": rmse(rec.full, d.real, va),
        "rmse_valid_lf": rmse(rec.lf, d.real, va),
        "ssim_full": ssim(d.real, rec.full),
        "ssim_lf": ssim(d.real, rec.lf),
        "band_fractions": spec["hf"].fractions()[: cfg.model.k_c + 1],
        "hf_band_fraction": band_energy_fraction(spec["hf"], HF_BINS, inband),
    }
    write_report(wd / "metrics.txt", report)
    return report


# ---------------------------------------------------------------- discovery and correction

def cmd_discover(cfg: RunConfig, target: str):
    wd = cfg.workdir
    lib = cfg.sindy.library or None
    if target == "direct_missing":
        sim, real = (read_field(p) for p in _need(wd, "sim.fld", "real.fld"))
        model = discover(target, u_sim=sim, u_real=real, library=lib, alpha0=cfg.sindy.alpha0)
    elif target == "lf_correction":
        sim, lf = (read_field(p) for p in _need(wd, "sim.fld", "recon_lf.fld"))
        model = discover(target, u_sim=sim, u_lf=lf, library=lib, alpha0=cfg.sindy.alpha0)
    elif target == "hf_dynamics":
        lf, hf = (read_field(p) for p in _need(wd, "recon_lf.fld", "recon_hf.fld"))
        model = discover(target, u_lf=lf, u_hf=hf, library=lib, alpha0=cfg.sindy.alpha0)
    else:
        raise koch.ConfigError(f"unknown discovery target {target!r}")
    write_model(wd / f"model_{target}.txt", model)
    return model


def cmd_correct(cfg: RunConfig, model_files, gamma: float) -> FieldSeries:
    """Integrate the analog model with discovered corrections scaled by ``gamma``.

    One direct_missing model runs in direct mode; an lf_correction plus hf_dynamics pair
    runs hierarchically with ``gamma`` on the HF term and ``[sindy] gamma_lf`` on the LF term.
    """
    paths = [Path(p) for p in model_files]
    for p in paths:
        if not p.exists():
            raise MissingPrerequisite(f"missing prerequisite {p}")
    models = {m.target: m for m in (read_model(p) for p in paths)}
    grid = koch.AnalogGrid(t_final=cfg.sindy.t_final)
    ap = koch.AnalogParams()
    if set(models) == {"direct_missing"}:
        out = koch.integrate_corrected(ap, models["direct_missing"], gamma, "direct", grid=grid)
    elif set(models) == {"lf_correction", "hf_dynamics"}:
        out = koch.integrate_corrected(ap, (models["lf_correction"], models["hf_dynamics"]), mode="hierarchical",
                                       gamma_lf=cfg.sindy.gamma_lf, gamma_hf=gamma, grid=grid)
    else:
        raise koch.ConfigError(f"need one direct_missing model or an lf_correction + hf_dynamics pair, "
                               f"got {sorted(models)}")
    write_field(cfg.workdir / "corrected.fld", out)
    write_field(cfg.workdir / "uncorrected.fld", koch.analog_run(ap, grid))
    return out
