"""Run configuration: INI sections mapped onto dataclasses, validated before any stage runs.

Example::

    [koch]
    s = 0.07
    [synth]
    harmonics = 3:0.06:lock, 6:0.04:lock, 9:0.025:lock
    [train]
    seed = 0
    [paths]
    workdir = runs/default

Every key is optional; unknown sections or keys are rejected. ``C2R_WORKDIR`` in the
environment overrides ``[paths] workdir``.
"""

from __future__ import annotations

import configparser
import os
import typing
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .koch import ConfigError, KochParams


@dataclass(frozen=True)
class SynthConfig:
    harmonics: tuple[tuple[int, float, bool], ...] = ((3, 0.06, True), (6, 0.04, True), (9, 0.025, True))
    da_factor: float = 1.10
    t_ign_factor: float = 0.95
    noise_sigma: float = 0.01
    envelope_gain: float = 0.25
    seed: int = 0
    # dataset cut from the recorded run: the last `snapshots` columns taken every `stride`
    snapshots: int = 250
    stride: int = 1
    derotate: bool = True

    def __post_init__(self):
        for k, a, _ in self.harmonics:
            if k < 1:
                raise ConfigError(f"synth.harmonics: wavenumber {k} must be >= 1")
            if a < 0:
                raise ConfigError(f"synth.harmonics: amplitude {a} must be nonnegative")
        for name in ("da_factor", "t_ign_factor"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"synth.{name} must be positive")
        if self.noise_sigma < 0:
            raise ConfigError("synth.noise_sigma must be nonnegative")
        if self.snapshots < 10:
            raise ConfigError("synth.snapshots must be at least 10")
        if self.stride < 1:
            raise ConfigError("synth.stride must be at least 1")


@dataclass(frozen=True)
class ModelConfig:
    p: int = 25
    lags: int = 25
    d_z: int = 32
    k_c: int = 12
    hidden: tuple[int, ...] = (128, 128)
    layers: int = 2
    dropout: float = 0.1
    gan_hidden: int = 64
    gan_anchor: float = 0.03
    attn_hidden: int = 64
    shift_hidden: int = 128
    amp_hidden: int = 64
    delta_max: float = 10.0
    gamma0: float = 0.5
    lambda_sparse: float = 0.1
    beta_oob: float = 100.0
    mu_mag: float = 1.0
    tau_factor: float = 1.5

    def __post_init__(self):
        for name in ("p", "lags", "d_z", "layers", "gan_hidden", "attn_hidden", "shift_hidden", "amp_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} must be at least 1")
        if self.k_c < 1:
            raise ConfigError("model.k_c must be at least 1")
        if not self.hidden or min(self.hidden) < 1:
            raise ConfigError("model.hidden must list positive widths")
        if not 0 <= self.dropout < 1:
            raise ConfigError("model.dropout must lie in [0, 1)")
        if self.delta_max < 0:
            raise ConfigError("model.delta_max must be nonnegative")
        if self.gan_anchor < 0:
            raise ConfigError("model.gan_anchor must be nonnegative")
        if self.lambda_sparse < 0:
            raise ConfigError("model.lambda_sparse must be nonnegative")
        if self.beta_oob < 1:
            raise ConfigError("model.beta_oob must be at least 1")
        if self.mu_mag < 0 or self.tau_factor <= 0:
            raise ConfigError("model.mu_mag must be nonnegative and model.tau_factor positive")


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    batch: int = 32
    valid_fraction: float = 0.2
    epochs1: int = 500
    lr1: float = 1e-3
    epochs2: int = 200
    lr_g: float = 1e-4
    lr_d: float = 1e-4
    epochs3: int = 500
    lr3: float = 1e-3
    epochs4: int = 300
    lr4: float = 3e-4
    warmup_fraction: float = 0.2

    def __post_init__(self):
        if self.batch < 1:
            raise ConfigError("train.batch must be at least 1")
        if not 0 < self.valid_fraction < 1:
            raise ConfigError("train.valid_fraction must lie in (0, 1)")
        for name in ("epochs1", "epochs2", "epochs3", "epochs4"):
            if getattr(self, name) < 1:
                raise ConfigError(f"train.{name} must be at least 1")
        for name in ("lr1", "lr_g", "lr_d", "lr3", "lr4"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"train.{name} must be positive")
        if not 0 <= self.warmup_fraction <= 1:
            raise ConfigError("train.warmup_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class SindyConfig:
    alpha0: float = 1e-3
    library: tuple[str, ...] = ()
    # analog model run used by `correct`
    t_final: float = 10.0
    gamma_lf: float = 1.0

    def __post_init__(self):
        if not self.alpha0 > 0:
            raise ConfigError("sindy.alpha0 must be positive")
        if not self.t_final > 0:
            raise ConfigError("sindy.t_final must be positive")


@dataclass(frozen=True)
class PathsConfig:
    workdir: str = "runs/default"


@dataclass(frozen=True)
class RunConfig:
    koch: KochParams = field(default_factory=KochParams)
    synth: SynthConfig = field(default_factory=SynthConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sindy: SindyConfig = field(default_factory=SindyConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def __post_init__(self):
        if self.model.p > self.koch.m_x:
            raise ConfigError(f"model.p={self.model.p} exceeds the grid size koch.m_x={self.koch.m_x}")
        if self.model.k_c >= self.koch.m_x / 2:
            raise ConfigError(f"model.k_c={self.model.k_c} must be below m_x/2")
        for k, _, _ in self.synth.harmonics:
            if k >= self.koch.m_x / 2:
                raise ConfigError(f"synth.harmonics: wavenumber {k} aliases on a {self.koch.m_x}-cell grid")

    @property
    def workdir(self) -> Path:
        return Path(os.environ.get("C2R_WORKDIR") or self.paths.workdir)


SECTIONS = {"koch": KochParams, "synth": SynthConfig, "model": ModelConfig, "train": TrainConfig,
            "sindy": SindyConfig, "paths": PathsConfig}


def _parse_harmonics(text: str) -> tuple[tuple[int, float, bool], ...]:
    out = []
    for item in filter(None, (t.strip() for t in text.split(","))):
        parts = item.split(":")
        if len(parts) not in (2, 3):
            raise ValueError(f"harmonic {item!r} is not k:amplitude[:lock|free]")
        lock = parts[2].strip().lower() if len(parts) == 3 else "lock"
        if lock not in ("lock", "free"):
            raise ValueError(f"harmonic {item!r}: third part must be lock or free")
        out.append((int(parts[0]), float(parts[1]), lock == "lock"))
    return tuple(out)


def _convert(section: str, name: str, text: str, hint):
    text = text.strip()
    if name == "harmonics":
        return _parse_harmonics(text)
    if hint is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if hint is int:
        return int(text)
    if hint is float:
        return float(text)
    if hint is str:
        return text
    args = typing.get_args(hint)
    if typing.get_origin(hint) is tuple and args:
        items = [t.strip() for t in text.split(",") if t.strip()]
        return tuple(_convert(section, name, t, args[0]) for t in items)
    raise ValueError(f"unsupported field type {hint}")


def _build(section: str, cls, values: dict[str, str]):
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, text in values.items():
        if key not in known:
            raise ConfigError(f"[{section}] unknown key {key!r}")
        try:
            kwargs[key] = _convert(section, key, text, hints[key])
        except ValueError as e:
            raise ConfigError(f"[{section}] {key}: {e}") from None
    try:
        return cls(**kwargs)
    except ConfigError as e:
        msg = str(e)
        raise ConfigError(msg if msg.startswith(f"{section}.") or "[" in msg else f"[{section}] {msg}") from None


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#", ";"),
                                   interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from None
    parts = {}
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        parts[section] = _build(section, SECTIONS[section], dict(cp.items(section)))
    return RunConfig(**parts)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config(text)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ", ".join(f"{k}:{a!r}:{'lock' if lk else 'free'}" for k, a, lk in value)
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for section in SECTIONS:
        lines.append(f"[{section}]")
        obj = getattr(cfg, section)
        for f in fields(obj):
            lines.append(f"{f.name} = {_format(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)


def with_section(cfg: RunConfig, section: str, **changes) -> RunConfig:
    return replace(cfg, **{section: replace(getattr(cfg, section), **changes)})
