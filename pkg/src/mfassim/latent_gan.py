"""Latent alignment: residual generator z -> z + G(z) trained against a discriminator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .nn import DTYPE, MLP, TrainingError, deterministic, make_optimizer


@dataclass
class GanConfig:
    d_z: int = 32
    g_hidden: int = 64
    d_hidden: int = 64
    epochs: int = 200
    lr_g: float = 1e-4
    lr_d: float = 1e-4
    betas: tuple[float, float] = (0.5, 0.999)
    batch: int = 32
    real_label: float = 0.9
    # weight of mean |G(z)|^2 in the generator loss; keeps G at the smallest correction D accepts
    anchor: float = 0.03


class GanPair(nn.Module):
    def __init__(self, cfg: GanConfig, seed: int = 0):
        super().__init__()
        gen = deterministic(seed)
        self.cfg = cfg
        self.G = MLP((cfg.d_z, cfg.g_hidden, cfg.d_z), "leaky_relu", gen=gen, zero_last=True)
        self.D = MLP((cfg.d_z, cfg.d_hidden, 1), "leaky_relu", gen=gen)

    def align(self, z: torch.Tensor) -> torch.Tensor:
        return z + self.G(z)

    def discriminate(self, z: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.D(z)).squeeze(-1)

    def d_logits(self, z: torch.Tensor) -> torch.Tensor:
        return self.D(z).squeeze(-1)


@dataclass
class GanLog:
    d_loss: list[float] = field(default_factory=list)
    g_loss: list[float] = field(default_factory=list)
    d_acc: list[float] = field(default_factory=list)


def train_stage2(sim_latents, real_latents, cfg: GanConfig | None = None, seed: int = 0):
    """Alternate one discriminator and one generator update per minibatch.

    The discriminator labels real latents as real (smoothed to ``real_label``) and
    generator-transformed simulation latents as fake; the generator uses the
    non-saturating loss -log D(z + G(z)) plus ``anchor`` * mean |G(z)|^2. Without the
    anchor, G can wander along maps that leave the latent distribution unchanged
    (rotations of an isotropic cloud, say) and D gives no signal against it.
    """
    cfg = cfg or GanConfig(d_z=np.shape(sim_latents)[1])
    zs = torch.as_tensor(np.asarray(sim_latents), dtype=DTYPE)
    zr = torch.as_tensor(np.asarray(real_latents), dtype=DTYPE)
    if len(zs) == 0 or len(zr) == 0:
        raise TrainingError("both latent sets must be nonempty")
    gan = GanPair(cfg, seed)
    gen = deterministic(seed + 1)
    opt_d = make_optimizer(gan.D.parameters(), cfg.lr_d, cfg.betas)
    opt_g = make_optimizer(gan.G.parameters(), cfg.lr_g, cfg.betas)
    bce = nn.functional.binary_cross_entropy_with_logits
    log = GanLog()
    for ep in range(cfg.epochs):
        perm_s = torch.randperm(len(zs), generator=gen)
        perm_r = torch.randint(len(zr), (len(zs),), generator=gen)
        for i in range(0, len(zs), cfg.batch):
            bs, br = zs[perm_s[i:i + cfg.batch]], zr[perm_r[i:i + cfg.batch]]
            fake = gan.align(bs)
            lr_, lf_ = gan.d_logits(br), gan.d_logits(fake.detach())
            d_loss = bce(lr_, torch.full_like(lr_, cfg.real_label)) + bce(lf_, torch.zeros_like(lf_))
            opt_d.zero_grad()
            d_loss.backward()
            opt_d.step()
            lg = gan.d_logits(gan.align(bs))
            g_loss = bce(lg, torch.ones_like(lg))
            if cfg.anchor > 0:
                g_loss = g_loss + cfg.anchor * (gan.G(bs) ** 2).sum(-1).mean()
            opt_g.zero_grad()
            g_loss.backward()
            opt_g.step()
            if not (torch.isfinite(d_loss) and torch.isfinite(g_loss)):
                raise TrainingError(f"stage 2 loss is not finite at epoch {ep}")
            with torch.no_grad():
                acc = 0.5 * ((lr_ > 0).double().mean() + (lf_ <= 0).double().mean())
            log.d_loss.append(d_loss.item())
            log.g_loss.append(g_loss.item())
            log.d_acc.append(acc.item())
    gan.eval()
    return gan, log


def mmd(a: np.ndarray, b: np.ndarray, bandwidth: float | None = None) -> float:
    """Biased squared MMD with a Gaussian kernel; median-heuristic bandwidth by default."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    allz = np.vstack([a, b])
    d2 = np.sum((allz[:, None] - allz[None]) ** 2, axis=-1)
    if bandwidth is None:
        bandwidth = np.sqrt(0.5 * np.median(d2[d2 > 0]))
    k = np.exp(-d2 / (2 * bandwidth**2))
    na = len(a)
    return float(k[:na, :na].mean() + k[na:, na:].mean() - 2 * k[:na, na:].mean())
