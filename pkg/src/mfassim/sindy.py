"""Sparse regression of time derivatives onto a library of candidate terms (STLSQ).

Terms are written as products of factors joined by ``*``. A factor is a variable
name with an optional spatial-derivative suffix ``_x`` / ``_xx`` and an optional
integer power ``^p``; ``1`` is the constant term. Examples: ``u``, ``u^3``,
``u*u_x``, ``du_x``, ``u_lf^2*u_hf``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid
import scipy.linalg

from .fields import FieldSeries, _atomic_write_text

TARGETS = ("lf_correction", "hf_dynamics", "direct_missing")

DIRECT_LIBRARY = ("1", "u", "u^2", "u^3", "u_x", "u_xx", "u*u_x")
LF_LIBRARY = ("1", "du", "du_x", "du_xx", "u_lf", "u_lf_x", "u_lf*du", "u_lf^2")
HF_LIBRARY = ("u_hf", "u_hf_x", "u_hf_xx", "u_lf", "u_lf*u_hf", "u_lf^2*u_hf", "u_hf^2")

_NAME = re.compile(r"^[A-Za-z][A-Za-z0-9_]*$")


class SindyError(ValueError):
    pass


def parse_factor(tok: str) -> tuple[str, int, int]:
    """'u_lf_x^2' -> ('u_lf', 1, 2)."""
    name, _, pw = tok.partition("^")
    d = 0
    for suffix, order in (("_xx", 2), ("_x", 1)):
        if name.endswith(suffix):
            name, d = name[: -len(suffix)], order
            break
    if not _NAME.match(name) or (pw and not pw.isdigit()):
        raise SindyError(f"cannot parse term factor {tok!r}")
    return name, d, int(pw) if pw else 1


def term_variables(descriptor: str) -> set[str]:
    if descriptor == "1":
        return set()
    return {parse_factor(t)[0] for t in descriptor.split("*")}


def spectral_derivative_array(u: np.ndarray, order: int, length: float) -> np.ndarray:
    """d^order/dx^order along axis 0 of a periodic array."""
    n = u.shape[0]
    k = 2 * np.pi * np.fft.rfftfreq(n, d=length / n)
    mult = (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        mult[-1] = 0.0  # Nyquist mode has no well-defined odd derivative
    uh = np.fft.rfft(u, axis=0)
    shape = (-1,) + (1,) * (u.ndim - 1)
    return np.fft.irfft(uh * mult.reshape(shape), n=n, axis=0)


def spectral_derivative(series: FieldSeries, order: int = 1) -> FieldSeries:
    if order not in (1, 2):
        raise SindyError("order must be 1 or 2")
    return series.with_data(spectral_derivative_array(series.data, order, series.domain_length))


def time_derivative_array(u: np.ndarray, dt: float) -> np.ndarray:
    """Central differences along axis 1, first-order one-sided at both ends."""
    if u.shape[1] < 2:
        raise SindyError("need at least two snapshots for a time derivative")
    return np.gradient(u, dt, axis=1, edge_order=1)


def time_derivative(series: FieldSeries) -> FieldSeries:
    return series.with_data(time_derivative_array(series.data, series.dt))


def evaluate_term(descriptor: str, fields: Mapping[str, np.ndarray], length: float,
                  cache: dict | None = None) -> np.ndarray:
    """Pointwise value of one term on n x m (or n) arrays."""
    cache = {} if cache is None else cache
    if descriptor == "1":
        ref = next(iter(fields.values()))
        return np.ones_like(ref)
    out = None
    for tok in descriptor.split("*"):
        name, d, pw = parse_factor(tok)
        if name not in fields:
            raise SindyError(f"term {descriptor!r} needs variable {name!r}, have {sorted(fields)}")
        key = (name, d)
        if key not in cache:
            cache[key] = fields[name] if d == 0 else spectral_derivative_array(fields[name], d, length)
        v = cache[key] ** pw if pw != 1 else cache[key]
        out = v if out is None else out * v
    return out


@dataclass(frozen=True)
class LibrarySpec:
    terms: tuple[str, ...]

    def __post_init__(self):
        terms = tuple(self.terms)
        if len(terms) < 2:
            raise SindyError("library needs at least two terms")
        if len(set(terms)) != len(terms):
            raise SindyError("duplicate library terms")
        for t in terms:
            if t != "1":
                for tok in t.split("*"):
                    parse_factor(tok)
        object.__setattr__(self, "terms", terms)


def build_library(fields: Mapping[str, FieldSeries | np.ndarray], spec: LibrarySpec,
                  length: float | None = None):
    """Theta with unit-norm columns over the space-major flattened grid, plus the raw norms."""
    arrs = {}
    for k, v in fields.items():
        if isinstance(v, FieldSeries):
            length = v.domain_length if length is None else length
            arrs[k] = v.data
        else:
            arrs[k] = np.asarray(v, dtype=np.float64)
    if length is None:
        raise SindyError("domain length unknown: pass FieldSeries or length=")
    shapes = {a.shape for a in arrs.values()}
    if len(shapes) != 1:
        raise SindyError(f"fields are not shape-aligned: {shapes}")
    cache: dict = {}
    cols, norms = [], []
    for t in spec.terms:
        c = evaluate_term(t, arrs, length, cache).reshape(-1)
        nrm = float(np.linalg.norm(c))
        if nrm == 0.0:
            raise SindyError(f"library term {t!r} is identically zero")
        cols.append(c / nrm)
        norms.append(nrm)
    return np.column_stack(cols), np.array(norms)


def lstsq(theta: np.ndarray, y: np.ndarray) -> np.ndarray:
    """QR least squares; ridge 1e-10*trace(Theta^T Theta) when Theta is rank deficient."""
    q, r = np.linalg.qr(theta)
    diag = np.abs(np.diag(r))
    if diag.size and diag.min() > 1e-12 * max(diag.max(), 1e-300):
        return scipy.linalg.solve_triangular(r, q.T @ y)
    g = theta.T @ theta
    lam = 1e-10 * np.trace(g)
    return np.linalg.solve(g + lam * np.eye(g.shape[0]), theta.T @ y)


def stlsq(theta: np.ndarray, target: np.ndarray, alpha: float, max_iter: int = 25) -> np.ndarray:
    """Sequential thresholded least squares on normalized columns.

    Returns coefficients for the normalized columns; every surviving entry has
    magnitude >= alpha.
    """
    y = np.asarray(target, dtype=np.float64).reshape(-1)
    t = theta.shape[1]
    active = np.ones(t, dtype=bool)
    xi = np.zeros(t)
    for _ in range(max_iter):
        xi = np.zeros(t)
        if active.any():
            xi[active] = lstsq(theta[:, active], y)
        keep = np.abs(xi) >= alpha
        if np.array_equal(keep, active):
            break
        active = keep
    xi[~active] = 0.0
    if not active.any():
        raise SindyError(f"all coefficients thresholded at alpha={alpha:g}")
    return xi


@dataclass(frozen=True)
class SindyModel:
    terms: tuple[str, ...]
    coefficients: np.ndarray  # physical (de-normalized) coefficients, one per term
    alpha: float
    residual: float
    target: str
    degenerate: bool = False
    notes: str = ""

    def __post_init__(self):
        if self.target not in TARGETS:
            raise SindyError(f"unknown target kind {self.target!r}")
        c = np.asarray(self.coefficients, dtype=np.float64)
        if len(c) != len(self.terms) or not np.all(np.isfinite(c)):
            raise SindyError("coefficients must be finite, one per term")
        object.__setattr__(self, "coefficients", c)

    @property
    def active(self) -> dict[str, float]:
        return {t: float(c) for t, c in zip(self.terms, self.coefficients) if c != 0.0}

    def variables(self) -> set[str]:
        out: set[str] = set()
        for t in self.active:
            out |= term_variables(t)
        return out

    def evaluate(self, fields: Mapping[str, np.ndarray], length: float) -> np.ndarray:
        cache: dict = {}
        ref = np.asarray(next(iter(fields.values())))
        out = np.zeros_like(ref, dtype=np.float64)
        for t, c in self.active.items():
            out = out + c * evaluate_term(t, fields, length, cache)
        return out

    def to_text(self) -> str:
        lines = [f"# target: {self.target}", f"# alpha: {self.alpha!r}", f"# residual: {self.residual!r}"]
        if self.degenerate:
            lines.append("# degenerate: true")
        for t, c in self.active.items():
            lines.append(f"{c!r} * {t}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SindyModel":
        head, terms, coefs = {}, [], []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                k, _, v = line[1:].partition(":")
                head[k.strip()] = v.strip()
                continue
            c, _, t = line.partition("*")
            terms.append(t.strip())
            coefs.append(float(c))
        if "target" not in head:
            raise SindyError("model text lacks a target header")
        return cls(tuple(terms), np.array(coefs), float(head.get("alpha", "nan")),
                   float(head.get("residual", "nan")), head["target"], head.get("degenerate") == "true")


def write_model(path, model: SindyModel) -> None:
    _atomic_write_text(Path(path), model.to_text())


def read_model(path) -> SindyModel:
    return SindyModel.from_text(Path(path).read_text())


def _fit(theta, norms, y, alpha):
    xi_n = stlsq(theta, y, alpha)
    res = float(np.linalg.norm(theta @ xi_n - y) / max(np.linalg.norm(y), 1e-300))
    return xi_n / norms, xi_n, res


def adaptive_discover(theta: np.ndarray, norms: np.ndarray, target: np.ndarray, terms: Sequence[str],
                      kind: str, alpha0: float = 1e-3, growth: float = 1.5, min_terms: int = 2,
                      max_terms: int = 8, max_steps: int = 200) -> SindyModel:
    """Raise alpha geometrically from alpha0 until the model has min_terms..max_terms terms.

    Targets with (numerically) no signal, or searches that never land in the window,
    come back flagged as degenerate rather than as a silent dense fit.
    """
    y = np.asarray(target, dtype=np.float64).reshape(-1)
    ynorm = float(np.linalg.norm(y))
    terms = tuple(terms)
    if ynorm == 0.0 or not np.isfinite(ynorm):
        return SindyModel(terms, np.zeros(len(terms)), alpha0, 0.0, kind, True, "zero target")
    # thresholds act on normalized columns against a unit-norm target
    yn = y / ynorm
    last = None
    alpha = alpha0
    for _ in range(max_steps):
        try:
            coef, xi_n, res = _fit(theta, norms, yn, alpha)
        except SindyError:
            break
        nact = int(np.count_nonzero(xi_n))
        last = (coef, alpha, res)
        if min_terms <= nact <= max_terms:
            break
        if nact < min_terms:
            break
        alpha *= growth
    if last is None:
        return SindyModel(terms, np.zeros(len(terms)), alpha, 1.0, kind, True, "empty model")
    coef, alpha, res = last
    nact = int(np.count_nonzero(coef))
    degenerate = not (min_terms <= nact <= max_terms)
    # a fit that explains almost nothing of the target is noise, not dynamics
    if res > 0.9:
        degenerate = True
    return SindyModel(terms, coef * ynorm, alpha, res, kind, degenerate,
                      "" if not degenerate else f"{nact} active terms, residual {res:.3g}")


def discover(kind: str, *, u_sim: FieldSeries | None = None, u_lf: FieldSeries | None = None,
             u_hf: FieldSeries | None = None, u_real: FieldSeries | None = None,
             library: Sequence[str] | None = None, alpha0: float = 1e-3) -> SindyModel:
    """Assemble the target and library for one of the three discrepancy problems and fit it."""
    if kind == "direct_missing":
        need = {"u_sim": u_sim, "u_real": u_real}
    elif kind == "lf_correction":
        need = {"u_sim": u_sim, "u_lf": u_lf}
    elif kind == "hf_dynamics":
        need = {"u_lf": u_lf, "u_hf": u_hf}
    else:
        raise SindyError(f"unknown target kind {kind!r}")
    missing = [k for k, v in need.items() if v is None]
    if missing:
        raise SindyError(f"{kind} discovery needs {missing}")
    ref = next(iter(need.values()))
    for k, v in need.items():
        if v.data.shape != ref.data.shape:
            raise SindyError(f"{k} shape {v.data.shape} differs from {ref.data.shape}")
    if kind == "direct_missing":
        d = u_real.data - u_sim.data
        fields = {"u": u_sim.data, "du": d}
        lib = library or DIRECT_LIBRARY
    elif kind == "lf_correction":
        d = u_lf.data - u_sim.data
        fields = {"u": u_sim.data, "du": d, "u_lf": u_lf.data}
        lib = library or LF_LIBRARY
    else:
        d = u_hf.data
        fields = {"u_hf": u_hf.data, "u_lf": u_lf.data}
        lib = library or HF_LIBRARY
    y = time_derivative_array(d, ref.dt)
    if not np.any(d):
        return SindyModel(tuple(lib), np.zeros(len(lib)), alpha0, 0.0, kind, True, "zero target")
    theta, norms = build_library(fields, LibrarySpec(tuple(lib)), ref.domain_length)
    return adaptive_discover(theta, norms, y, lib, kind, alpha0=alpha0)


def inject_correction(u_sim: FieldSeries, model: SindyModel, gamma: float = 1.0) -> FieldSeries:
    """u_sim + gamma * int_0^t h(u_sim) dt (trapezoid in time), so d/dt of the gap is h(u_sim)."""
    h = model.evaluate({"u": u_sim.data}, u_sim.domain_length)
    gap = cumulative_trapezoid(h, dx=u_sim.dt, axis=1, initial=0.0)
    return u_sim.with_data(u_sim.data + gamma * gap, label="u_real")
