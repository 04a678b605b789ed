"""Small float64 network pieces on top of torch, gradient checking and checkpoints.

Everything here runs in double precision on one CPU thread so training runs are
bit-reproducible for a fixed seed.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import torch
from torch import nn

from .fields import _atomic_write_bytes

DTYPE = torch.float64
MAGIC = b"C2RW"
VERSION = 1

ACTIVATIONS: dict[str, Callable[[torch.Tensor], torch.Tensor]] = {
    "relu": torch.relu,
    "leaky_relu": lambda x: torch.nn.functional.leaky_relu(x, 0.2),
    "tanh": torch.tanh,
    "softplus": torch.nn.functional.softplus,
}


class TrainingError(RuntimeError):
    pass


def deterministic(seed: int) -> torch.Generator:
    """Pin torch to one thread, seed the global RNG and hand back a private generator."""
    torch.set_num_threads(1)
    torch.manual_seed(seed)
    g = torch.Generator()
    g.manual_seed(seed)
    return g


def tensor(x) -> torch.Tensor:
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def _uniform_(t: torch.Tensor, fan_in: int, gen: torch.Generator | None) -> None:
    bound = 1.0 / np.sqrt(fan_in)
    with torch.no_grad():
        t.copy_(torch.rand(t.shape, generator=gen, dtype=DTYPE) * 2 * bound - bound)


def linear(n_in: int, n_out: int, gen: torch.Generator | None = None, zero: bool = False) -> nn.Linear:
    lay = nn.Linear(n_in, n_out, dtype=DTYPE)
    if zero:
        nn.init.zeros_(lay.weight)
        nn.init.zeros_(lay.bias)
    else:
        _uniform_(lay.weight, n_in, gen)
        _uniform_(lay.bias, n_in, gen)
    return lay


def dropout(x: torch.Tensor, rate: float, training: bool, gen: torch.Generator | None = None) -> torch.Tensor:
    """Inverted dropout; identity outside training or at rate 0."""
    if not training or rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    keep = torch.rand(x.shape, generator=gen, dtype=x.dtype) >= rate
    return x * keep / (1.0 - rate)


class MLP(nn.Module):
    """Dense stack ``sizes[0] -> ... -> sizes[-1]``; activation between layers, none after the last."""

    def __init__(self, sizes: Sequence[int], activation: str = "relu", dropout_rate: float = 0.0,
                 gen: torch.Generator | None = None, zero_last: bool = False):
        super().__init__()
        if len(sizes) < 2:
            raise ValueError("MLP needs at least input and output sizes")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.act = activation
        self.dropout_rate = dropout_rate
        self.gen = gen
        n = len(sizes) - 1
        self.layers = nn.ModuleList(
            linear(a, b, gen, zero=zero_last and i == n - 1) for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        f = ACTIVATIONS[self.act]
        for i, lay in enumerate(self.layers):
            x = lay(x)
            if i < len(self.layers) - 1:
                x = dropout(f(x), self.dropout_rate, self.training, self.gen)
        return x


class LSTM(nn.Module):
    """Batch-first multi-layer LSTM (gate order i, f, g, o) with zero initial state.

    Returns (all top-layer hidden states B x L x H, final top-layer hidden B x H).
    """

    def __init__(self, n_in: int, hidden: int, layers: int = 2, gen: torch.Generator | None = None):
        super().__init__()
        self.core = nn.LSTM(n_in, hidden, num_layers=layers, batch_first=True, dtype=DTYPE)
        for name, p in self.core.named_parameters():
            fan = n_in if name.endswith("_l0") and "ih" in name else hidden
            _uniform_(p, fan, gen)
        self.hidden = hidden

    def forward(self, seq: torch.Tensor):
        if seq.dim() == 2:
            seq = seq.unsqueeze(0)
        if seq.shape[-1] != self.core.input_size:
            raise ValueError(f"LSTM expects width {self.core.input_size}, got {seq.shape[-1]}")
        out, (h, _) = self.core(seq)
        return out, h[-1]


def layer_norm(x: torch.Tensor, gain: torch.Tensor | None = None, bias: torch.Tensor | None = None,
               eps: float = 1e-5) -> torch.Tensor:
    return torch.nn.functional.layer_norm(x, x.shape[-1:], gain, bias, eps)


def make_optimizer(params: Iterable[torch.Tensor], lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
                   weight_decay: float = 0.0, decoupled: bool = False) -> torch.optim.Optimizer:
    cls = torch.optim.AdamW if decoupled else torch.optim.Adam
    return cls(list(params), lr=lr, betas=betas, eps=eps, weight_decay=weight_decay)


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def grad_check(loss_fn: Callable[[], torch.Tensor], params: Sequence[torch.Tensor], tol: float = 1e-4,
               n_check: int = 64, h: float = 1e-5, seed: int = 0,
               grads: Sequence[torch.Tensor] | None = None) -> GradCheckReport:
    """Reverse-mode gradients against central differences on a random parameter subset.

    ``grads`` overrides the autograd result (used to prove a corrupted gradient fails).
    """
    params = list(params)
    for p in params:
        p.grad = None
    loss = loss_fn()
    if grads is None:
        grads = torch.autograd.grad(loss, params, allow_unused=True)
    grads = [torch.zeros_like(p) if g is None else g.detach() for p, g in zip(params, grads)]
    sizes = [p.numel() for p in params]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    picks = np.sort(rng.choice(total, size=min(n_check, total), replace=False))
    offsets = np.cumsum([0] + sizes)
    worst = 0.0
    with torch.no_grad():
        for flat in picks:
            j = int(np.searchsorted(offsets, flat, side="right") - 1)
            k = int(flat - offsets[j])
            view = params[j].view(-1)
            old = view[k].item()
            view[k] = old + h
            fp = loss_fn().item()
            view[k] = old - h
            fm = loss_fn().item()
            view[k] = old
            num = (fp - fm) / (2 * h)
            ana = grads[j].reshape(-1)[k].item()
            err = abs(num - ana) / max(abs(num), abs(ana), 1e-8)
            worst = max(worst, err)
    return GradCheckReport(worst, len(picks), tol)


def state_tensors(module: nn.Module, prefix: str = "") -> dict[str, torch.Tensor]:
    return {prefix + k: v for k, v in module.state_dict().items()}


def save_checkpoint(path, tensors: dict[str, torch.Tensor | np.ndarray]) -> None:
    """C2RW binary: magic, u32 version, then per tensor: u32 name length, name,
    u32 rank, u64 dims, little-endian float64 payload. Records are name-sorted."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    for name in sorted(tensors):
        arr = tensors[name]
        arr = arr.detach().cpu().numpy() if isinstance(arr, torch.Tensor) else np.asarray(arr)
        arr = np.ascontiguousarray(arr, dtype="<f8")
        nb = name.encode()
        buf.write(struct.pack("<I", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    _atomic_write_bytes(Path(path), buf.getvalue())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a C2RW checkpoint")
    (ver,) = struct.unpack_from("<I", raw, 4)
    if ver != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {ver}")
    pos, out = 8, {}
    while pos < len(raw):
        (ln,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        name = raw[pos:pos + ln].decode()
        pos += ln
        (rank,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}Q", raw, pos)
        pos += 8 * rank
        cnt = int(np.prod(dims)) if rank else 1
        out[name] = np.frombuffer(raw, dtype="<f8", count=cnt, offset=pos).reshape(dims).copy()
        pos += 8 * cnt
    return out


def load_into(module: nn.Module, tensors: dict[str, np.ndarray], prefix: str = "") -> None:
    sd = {k[len(prefix):]: torch.from_numpy(v) for k, v in tensors.items() if k.startswith(prefix)}
    module.load_state_dict(sd)


def checksum(module: nn.Module) -> float:
    with torch.no_grad():
        return float(sum(p.double().abs().sum() + p.double().sum() for p in module.parameters()))
