"""Low-frequency pathway: LSTM sensor encoder, MLP decoder, band-limiting projection."""

from __future__ import annotations

import copy
import warnings
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .nn import DTYPE, LSTM, MLP, TrainingError, deterministic, make_optimizer


def lowpass_project(u, k_c: int):
    """Zero every real-FFT bin above k_c along the last axis (numpy or torch input)."""
    is_t = isinstance(u, torch.Tensor)
    n = u.shape[-1]
    if k_c >= n / 2:
        warnings.warn(f"k_c={k_c} >= n/2: projection is the identity", stacklevel=2)
        return u
    if is_t:
        uh = torch.fft.rfft(u, dim=-1)
        mask = torch.zeros(uh.shape[-1], dtype=DTYPE)
        mask[: k_c + 1] = 1.0
        return torch.fft.irfft(uh * mask, n=n, dim=-1)
    uh = np.fft.rfft(u, axis=-1)
    uh[..., k_c + 1:] = 0
    return np.fft.irfft(uh, n=n, axis=-1)


@dataclass
class LfConfig:
    p: int = 25
    n: int = 100
    d_z: int = 32
    hidden: tuple[int, ...] = (128, 128)
    layers: int = 2
    k_c: int = 12
    dropout: float = 0.1


class LfModel(nn.Module):
    def __init__(self, cfg: LfConfig, seed: int = 0):
        super().__init__()
        if cfg.k_c >= cfg.n / 2:
            raise ValueError("k_c must be below n/2")
        self.cfg = cfg
        gen = deterministic(seed)
        self.encoder = LSTM(cfg.p, cfg.d_z, cfg.layers, gen)
        self.norm = nn.LayerNorm(cfg.d_z, eps=1e-5, dtype=DTYPE)
        self.decoder = MLP((cfg.d_z, *cfg.hidden, cfg.n), "relu", cfg.dropout, gen)

    def encode(self, hist: torch.Tensor) -> torch.Tensor:
        _, h = self.encoder(hist)
        return self.norm(h)

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        return lowpass_project(self.decoder(z), self.cfg.k_c)

    def forward(self, hist: torch.Tensor) -> torch.Tensor:
        return self.decode(self.encode(hist))


@dataclass
class TrainResult:
    model: nn.Module
    curve: list[tuple[int, float, float]] = field(default_factory=list)
    best_epoch: int = -1


def chrono_split(count: int, valid_fraction: float = 0.2) -> tuple[np.ndarray, np.ndarray]:
    n_val = int(round(count * valid_fraction))
    return np.arange(count - n_val), np.arange(count - n_val, count)


def _batches(idx: np.ndarray, size: int, gen: torch.Generator):
    perm = idx[torch.randperm(len(idx), generator=gen).numpy()]
    for i in range(0, len(perm), size):
        yield perm[i:i + size]


def train_stage1(hist: np.ndarray, fields: np.ndarray, cfg: LfConfig, epochs: int = 500, lr: float = 1e-3,
                 batch: int = 32, valid_fraction: float = 0.2, seed: int = 0) -> TrainResult:
    """Fit encoder+decoder to (sensor history, full state) pairs by mean squared error.

    ``hist`` is samples x L x p, ``fields`` samples x n, both in time order. The last
    ``valid_fraction`` of samples is held out; the best-validation weights are returned.
    """
    if len(hist) == 0:
        raise TrainingError("empty dataset")
    model = LfModel(cfg, seed)
    gen = deterministic(seed)
    X, Y = torch.as_tensor(hist, dtype=DTYPE), torch.as_tensor(fields, dtype=DTYPE)
    tr, va = chrono_split(len(X), valid_fraction)
    if len(va) == 0:
        va = tr
    opt = make_optimizer(model.parameters(), lr)
    res = TrainResult(model)
    best, best_state = np.inf, None
    for ep in range(epochs):
        model.train()
        tot = 0.0
        for b in _batches(tr, batch, gen):
            opt.zero_grad()
            loss = torch.mean((model(X[b]) - Y[b]) ** 2)
            loss.backward()
            opt.step()
            tot += loss.item() * len(b)
        tl = tot / len(tr)
        model.eval()
        with torch.no_grad():
            vl = torch.mean((model(X[va]) - Y[va]) ** 2).item()
        if not (np.isfinite(tl) and np.isfinite(vl)):
            raise TrainingError(f"stage 1 loss is not finite at epoch {ep}")
        res.curve.append((ep, tl, vl))
        if vl < best:
            best, best_state, res.best_epoch = vl, copy.deepcopy(model.state_dict()), ep
    model.load_state_dict(best_state)
    model.eval()
    return res
