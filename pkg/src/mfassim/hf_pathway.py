"""High-frequency pathway: sensor residuals, derivative embedding, lag-attention
encoder, deformation decoder, spectral-sparsity training and two-pathway inference."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .fields import FieldSeries, SensorTrace
from .latent_gan import GanPair
from .nn import DTYPE, LSTM, MLP, TrainingError, deterministic, make_optimizer
from .shred_lf import LfModel, TrainResult, _batches, chrono_split


def residual_history(sensors: np.ndarray, lf_preds: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """r_l = s'_l - M u_LF(l) for every lag; sensors L x p, lf_preds L x n."""
    sensors = np.asarray(sensors, dtype=np.float64)
    lf_preds = np.asarray(lf_preds, dtype=np.float64)
    if sensors.shape[0] != lf_preds.shape[0]:
        raise ValueError("sensor window and LF predictions must have the same number of lags")
    return sensors - lf_preds[..., indices]


def derivative_embed(R, dt: float = 1.0):
    """[r, r_dot, r_ddot] along the lag axis (second to last); central differences inside,
    first-order one-sided differences at the first and last lag."""
    is_t = isinstance(R, torch.Tensor)
    if R.shape[-2] < 3:
        raise ValueError("derivative embedding needs at least 3 lags")
    cat = (lambda xs: torch.cat(xs, dim=-2)) if is_t else (lambda xs: np.concatenate(xs, axis=-2))
    d1_mid = (R[..., 2:, :] - R[..., :-2, :]) / (2 * dt)
    d1 = cat([(R[..., 1:2, :] - R[..., 0:1, :]) / dt, d1_mid, (R[..., -1:, :] - R[..., -2:-1, :]) / dt])
    d2_mid = (R[..., 2:, :] - 2 * R[..., 1:-1, :] + R[..., :-2, :]) / dt**2
    d2 = cat([(d1[..., 1:2, :] - d1[..., 0:1, :]) / dt, d2_mid, (d1[..., -1:, :] - d1[..., -2:-1, :]) / dt])
    return torch.cat([R, d1, d2], dim=-1) if is_t else np.concatenate([R, d1, d2], axis=-1)


@dataclass
class HfConfig:
    p: int = 25
    n: int = 100
    lags: int = 25
    d_z: int = 32
    layers: int = 2
    attn_hidden: int = 64
    hidden: tuple[int, ...] = (128, 128)
    shift_hidden: int = 128
    amp_hidden: int = 64
    gamma0: float = 0.5
    delta_max: float = 10.0
    dt: float = 1.0


class HfModel(nn.Module):
    def __init__(self, cfg: HfConfig, seed: int = 0):
        super().__init__()
        if cfg.delta_max < 0:
            raise ValueError("delta_max must be nonnegative")
        gen = deterministic(seed)
        self.cfg = cfg
        w = 3 * cfg.p
        self.lstm_all = LSTM(w, cfg.d_z, 1, gen)
        self.lstm_main = LSTM(w, cfg.d_z, cfg.layers, gen)
        self.norm = nn.LayerNorm(cfg.d_z, eps=1e-5, dtype=DTYPE)
        self.attn = MLP((cfg.d_z, cfg.attn_hidden, cfg.lags), "tanh", gen=gen)
        self.dec = MLP((cfg.d_z, *cfg.hidden, cfg.n), "relu", gen=gen)
        self.shift = MLP((cfg.d_z, cfg.shift_hidden, cfg.n), "relu", gen=gen)
        self.amp = MLP((cfg.d_z, cfg.amp_hidden, cfg.n), "relu", gen=gen)
        self.gamma = nn.Parameter(torch.tensor(cfg.gamma0, dtype=DTYPE))

    def encode(self, r_aug: torch.Tensor):
        H, _ = self.lstm_all(r_aug)
        _, hf = self.lstm_main(r_aug)
        alpha = torch.softmax(self.attn(self.norm(hf)), dim=-1)
        z = torch.einsum("bl,bld->bd", alpha, H)
        return z, alpha

    def decode(self, z: torch.Tensor):
        base = self.gamma * self.dec(z)
        delta = torch.tanh(self.shift(z)) * self.cfg.delta_max
        a = 0.5 * nn.functional.softplus(self.amp(z)) + 0.5
        return warp(base, delta, a), {"base": base, "delta": delta, "amp": a}

    def forward(self, R: torch.Tensor) -> torch.Tensor:
        z, _ = self.encode(derivative_embed(R, self.cfg.dt))
        return self.decode(z)[0]


def warp(base: torch.Tensor, delta: torch.Tensor, a: torch.Tensor) -> torch.Tensor:
    """u(x_i) = a_i * base((i + delta_i) mod n), linear between the bracketing cells."""
    n = base.shape[-1]
    pos = torch.arange(n, dtype=DTYPE) + delta
    j0 = torch.floor(pos)
    w = pos - j0
    i0 = torch.remainder(j0.long(), n)
    i1 = torch.remainder(i0 + 1, n)
    b0 = torch.gather(base, -1, i0.expand_as(base) if i0.dim() == base.dim() else i0)
    b1 = torch.gather(base, -1, i1.expand_as(base) if i1.dim() == base.dim() else i1)
    return a * ((1 - w) * b0 + w * b1)


@dataclass
class SparsityConfig:
    lambda_sparse: float = 0.1
    beta_oob: float = 100.0
    mu_mag: float = 1.0
    tau: float = 1.0
    k_c: int = 12
    warmup_fraction: float = 0.2
    eps: float = 1e-8

    def __post_init__(self):
        if self.beta_oob < 1 or self.lambda_sparse < 0 or not 0 <= self.warmup_fraction <= 1:
            raise ValueError("need beta_oob >= 1, lambda_sparse >= 0, warmup_fraction in [0, 1]")


def sparsity_penalty(u, k_c: int, beta: float = 100.0, eps: float = 1e-8):
    """In-band L1/L2 ratio of |u_hat| plus beta times the energy fraction above k_c.

    Works on the last axis; batched inputs give one value per row.
    """
    t = torch.as_tensor(u, dtype=DTYPE)
    mag = torch.abs(torch.fft.rfft(t, dim=-1))
    inb = mag[..., : k_c + 1]
    ratio = inb.sum(-1) / torch.sqrt((inb**2).sum(-1) + eps)
    oob = (mag[..., k_c + 1:] ** 2).sum(-1) / ((mag**2).sum(-1) + eps)
    out = ratio + beta * oob
    return out if isinstance(u, torch.Tensor) else out.numpy()


def l1_size(u):
    """Mean absolute value per point: the size measure shared by fields and sensor residuals."""
    return u.abs().mean(-1) if isinstance(u, torch.Tensor) else np.mean(np.abs(u), axis=-1)


def magnitude_penalty(u, tau: float):
    t = torch.as_tensor(u, dtype=DTYPE)
    out = torch.clamp(l1_size(t) - tau, min=0.0) ** 2
    return out if isinstance(u, torch.Tensor) else out.numpy()


@torch.no_grad()
def lf_predictions(lf: LfModel, gan: GanPair | None, hist: np.ndarray) -> np.ndarray:
    """Aligned, band-limited LF fields for every sensor-history sample (samples x n)."""
    lf.eval()
    z = lf.encode(torch.as_tensor(hist, dtype=DTYPE))
    if gan is not None:
        gan.eval()
        z = gan.align(z)
    return lf.decode(z).numpy()


def residual_windows(trace: np.ndarray, lf_fields: np.ndarray, indices: np.ndarray, lags: int) -> np.ndarray:
    """Zero-padded residual histories for every snapshot: m x lags x p.

    ``trace`` is p x m and ``lf_fields`` m x n (row t is the LF estimate at snapshot t).
    Lags before the first snapshot are zero.
    """
    res = trace.T - lf_fields[:, indices]  # m x p
    pad = np.concatenate([np.zeros((lags - 1, res.shape[1])), res])
    return np.stack([pad[t:t + lags] for t in range(res.shape[0])])


def _ramp(ep: int, epochs: int, cfg: SparsityConfig) -> float:
    w = int(round(cfg.warmup_fraction * epochs))
    return cfg.lambda_sparse * min(1.0, ep / w) if w > 0 else cfg.lambda_sparse


def _fit_hf(model: HfModel, R: np.ndarray, indices: np.ndarray, cfg: SparsityConfig, epochs: int, lr: float,
            batch: int, valid_fraction: float, seed: int, warmup: bool, stage: int) -> TrainResult:
    gen = deterministic(seed)
    X = torch.as_tensor(R, dtype=DTYPE)
    Y = X[:, -1, :]
    idx = torch.as_tensor(indices, dtype=torch.long)
    tr, va = chrono_split(len(X), valid_fraction)
    if len(va) == 0:
        va = tr
    opt = make_optimizer(model.parameters(), lr)
    res = TrainResult(model)
    best, best_state = np.inf, None
    for ep in range(epochs):
        lam = _ramp(ep, epochs, cfg) if warmup else cfg.lambda_sparse
        model.train()
        tot = 0.0
        for b in _batches(tr, batch, gen):
            u = model(X[b])
            l_sens = torch.mean((u[:, idx] - Y[b]) ** 2)
            loss = l_sens
            if lam > 0:
                loss = loss + lam * sparsity_penalty(u, cfg.k_c, cfg.beta_oob, cfg.eps).mean()
            if cfg.mu_mag > 0:
                loss = loss + cfg.mu_mag * magnitude_penalty(u, cfg.tau).mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
            tot += l_sens.item() * len(b)
        model.eval()
        with torch.no_grad():
            vl = torch.mean((model(X[va])[:, idx] - Y[va]) ** 2).item()
        tl = tot / len(tr)
        if not (np.isfinite(tl) and np.isfinite(vl)):
            raise TrainingError(f"stage {stage} loss is not finite at epoch {ep}")
        res.curve.append((ep, tl, vl))
        if vl < best:
            best, best_state, res.best_epoch = vl, copy.deepcopy(model.state_dict()), ep
    model.load_state_dict(best_state)
    model.eval()
    return res


def estimate_tau(R: np.ndarray, factor: float = 1.5, train_count: int | None = None) -> float:
    cur = R[:train_count, -1, :] if train_count else R[:, -1, :]
    return float(factor * np.mean(l1_size(cur)))


def train_stage3(R: np.ndarray, indices: np.ndarray, hcfg: HfConfig, scfg: SparsityConfig, epochs: int = 500,
                 lr: float = 1e-3, batch: int = 32, valid_fraction: float = 0.2, seed: int = 0) -> TrainResult:
    """Train a fresh HF model on residual windows R (samples x lags x p) from real sensors only."""
    if len(R) == 0:
        raise TrainingError("empty residual dataset")
    model = HfModel(hcfg, seed)
    return _fit_hf(model, R, indices, scfg, epochs, lr, batch, valid_fraction, seed, True, 3)


def finetune_stage4(model: HfModel, R: np.ndarray, indices: np.ndarray, scfg: SparsityConfig, epochs: int = 300,
                    lr: float = 3e-4, batch: int = 32, valid_fraction: float = 0.2, seed: int = 0) -> TrainResult:
    """Continue training with the sparsity weight cut to a tenth, no warmup."""
    cfg = SparsityConfig(**{**scfg.__dict__, "lambda_sparse": 0.1 * scfg.lambda_sparse})
    return _fit_hf(model, R, indices, cfg, epochs, lr, batch, valid_fraction, seed, False, 4)


@dataclass
class Reconstruction:
    full: FieldSeries
    lf: FieldSeries
    hf: FieldSeries
    extras: dict = field(default_factory=dict)


@torch.no_grad()
def reconstruct(trace: SensorTrace, lf: LfModel, gan: GanPair | None, hf: HfModel | None, lags: int,
                like: FieldSeries) -> Reconstruction:
    """Two-pathway estimate for every snapshot of ``trace``.

    The HF component is stored as full - lf, so full - lf - hf is exactly zero in
    floating point.
    """
    from .preprocess import lagged_dataset

    hist, _ = lagged_dataset(trace, lags, pad=True)
    u_lf = lf_predictions(lf, gan, hist)  # m x n
    if hf is None:
        u_hf = np.zeros_like(u_lf)
    else:
        hf.eval()
        R = residual_windows(trace.data, u_lf, trace.sensor_indices, lags)
        u_hf = hf(torch.as_tensor(R, dtype=DTYPE)).numpy()
    full = u_lf + u_hf
    hf_exact = full - u_lf
    return Reconstruction(like.with_data(full.T, label="full"), like.with_data(u_lf.T, label="lf"),
                          like.with_data(hf_exact.T, label="hf"), {"hf_raw": u_hf.T})
