"""PML-strength convergence study on the exceptional Floquet grid.

For every PML strength the cell problems at the ``2N`` Floquet samples are
solved with the PML-modified boundary symbol, the field is synthesized on
a horizontal line, and compared with the strongest-PML run.
"""
from __future__ import annotations

import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import yaml
from scipy.integrate import trapezoid

from . import kernels
from .fem import (CellSolveError, ExactDtN, Pml, SourceTerm, assemble_cell, default_truncation,
                  solve_cell)
from .kernels import PmlSpec, Wavenumber
from .mesh import SurfaceProfile, build_cell_mesh
from .quadrature import FloquetGrid, floquet_grid, fold

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class StudyError(RuntimeError):
    """A cell solve failed during a study; carries the offending ``(rho, alpha)``."""

    def __init__(self, rho, alpha, cause):
        super().__init__(f"cell solve failed at rho={rho}, alpha={alpha!r}: {cause}")
        self.rho = rho
        self.alpha = alpha


_SURFACE_KEYS = {"mean", "sin", "cos"}
_PML_KEYS = {"lambda", "m", "chi_modulus", "chi_phase", "rho", "rho_reference"}
_SOURCE_KEYS = {"shape", "center", "radius", "kx", "ky"}
_TOP_KEYS = {"k", "surface", "H", "pml", "N", "h", "J", "eval_height", "eval_interval",
             "source", "trace_points", "denominator", "workers"}


@dataclass
class StudyConfig:
    k: float
    surface_mean: float
    surface_sin: tuple
    surface_cos: tuple
    H: float
    lam: float
    rho: tuple
    rho_reference: float
    m: int = 1
    chi_modulus: float = 1.0
    chi_phase: float = math.pi / 4
    N: int = 16
    h: float = 0.05
    J: int | None = None
    eval_height: float = 2.4
    eval_interval: tuple = (-math.pi, math.pi)
    source_center: tuple = (-0.4, 1.8)
    source_radius: float = 0.4
    source_kx: float = 2 * math.pi
    source_ky: float = 2 * math.pi
    trace_points: int = 512
    denominator: str = "tested"
    workers: int = 1

    def __post_init__(self):
        self.rho = tuple(float(r) for r in self.rho)
        self.surface_sin = tuple(float(a) for a in self.surface_sin)
        self.surface_cos = tuple(float(a) for a in self.surface_cos)
        self.eval_interval = tuple(float(a) for a in self.eval_interval)
        self.validate()

    @classmethod
    def benchmark(cls, k: float = 1.0, **overrides) -> "StudyConfig":
        """The numerical setup of the reference experiment."""
        base = dict(k=k, surface_mean=1.5, surface_sin=(1 / 3,), surface_cos=(0.0, -0.25),
                    H=2.5, lam=1.5, rho=(2, 4, 6, 8, 10, 12, 14, 16), rho_reference=25.0)
        base.update(overrides)
        return cls(**base)

    @property
    def chi(self) -> complex:
        return self.chi_modulus * complex(math.cos(self.chi_phase), math.sin(self.chi_phase))

    @property
    def truncation(self) -> int:
        return default_truncation(self.k) if self.J is None else int(self.J)

    def surface(self) -> SurfaceProfile:
        return SurfaceProfile.trig(self.surface_mean, self.surface_sin, self.surface_cos, H=self.H)

    def source(self) -> SourceTerm:
        return SourceTerm.disk_trig(self.source_center, self.source_radius,
                                    self.source_kx, self.source_ky)

    def pml(self, rho: float) -> PmlSpec:
        return PmlSpec(self.lam, rho, self.m, self.chi, self.H)

    def validate(self) -> None:
        try:
            wn = Wavenumber(float(self.k))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not wn.exceptional:
            raise ConfigError(f"k={self.k}: 2k must be an integer")
        if len(set(self.rho)) < 2:
            raise ConfigError("need at least two distinct PML strengths")
        if any(r <= 0 for r in self.rho):
            raise ConfigError("PML strengths must be positive")
        if not self.rho_reference > max(self.rho):
            raise ConfigError("rho_reference must exceed every rho in the sweep")
        if self.lam <= 0 or self.m < 1 or int(self.m) != self.m:
            raise ConfigError("invalid PML thickness or exponent")
        if not (self.chi_modulus > 0 and 0 < self.chi_phase < math.pi / 2):
            raise ConfigError("chi needs positive real and imaginary parts")
        if self.N < 1 or self.h <= 0 or self.trace_points < 2 or self.workers < 1:
            raise ConfigError("N, h, trace_points and workers must be positive")
        if self.denominator not in ("tested", "reference"):
            raise ConfigError("denominator must be 'tested' or 'reference'")
        lo, hi = self.eval_interval
        if not lo < hi:
            raise ConfigError("empty evaluation interval")
        try:
            surf = self.surface()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not surf.zeta_max < self.eval_height <= self.H:
            raise ConfigError("eval_height must satisfy zeta_max < eval_height <= H")
        if self.J is not None and self.J < math.ceil(self.k) + 1:
            raise ConfigError(f"J must be at least {math.ceil(self.k) + 1}")
        try:
            self.source().check_inside(surf.zeta, self.H)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_mapping(cls, data: dict) -> "StudyConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        _reject_unknown(data, _TOP_KEYS, "")
        try:
            surf = data["surface"]
            pml = data["pml"]
            _reject_unknown(surf, _SURFACE_KEYS, "surface.")
            _reject_unknown(pml, _PML_KEYS, "pml.")
            kwargs = dict(
                k=float(data["k"]),
                surface_mean=float(surf["mean"]),
                surface_sin=tuple(surf.get("sin", ())),
                surface_cos=tuple(surf.get("cos", ())),
                H=float(data["H"]),
                lam=float(pml["lambda"]),
                m=int(pml.get("m", 1)),
                chi_modulus=float(pml.get("chi_modulus", 1.0)),
                chi_phase=float(pml.get("chi_phase", math.pi / 4)),
                rho=tuple(pml["rho"]),
                rho_reference=float(pml["rho_reference"]),
                N=int(data.get("N", 16)),
                h=float(data.get("h", 0.05)),
                J=None if data.get("J") is None else int(data["J"]),
                eval_height=float(data["eval_height"]),
                eval_interval=tuple(data.get("eval_interval", (-math.pi, math.pi))),
                trace_points=int(data.get("trace_points", 512)),
                denominator=str(data.get("denominator", "tested")),
                workers=int(data.get("workers", 1)),
            )
            if "source" in data:
                src = data["source"]
                _reject_unknown(src, _SOURCE_KEYS, "source.")
                if src.get("shape", "disk") != "disk":
                    raise ConfigError("only disk sources are supported")
                kwargs.update(source_center=tuple(float(c) for c in src["center"]),
                              source_radius=float(src["radius"]),
                              source_kx=float(src.get("kx", 2 * math.pi)),
                              source_ky=float(src.get("ky", 2 * math.pi)))
        except KeyError as exc:
            raise ConfigError(f"missing config key {exc}") from exc
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad config value: {exc}") from exc
        return cls(**kwargs)

    def to_mapping(self) -> dict:
        return {
            "k": self.k,
            "surface": {"mean": self.surface_mean, "sin": list(self.surface_sin),
                        "cos": list(self.surface_cos)},
            "H": self.H,
            "pml": {"lambda": self.lam, "m": self.m, "chi_modulus": self.chi_modulus,
                    "chi_phase": self.chi_phase, "rho": list(self.rho),
                    "rho_reference": self.rho_reference},
            "N": self.N, "h": self.h, "J": self.J,
            "eval_height": self.eval_height, "eval_interval": list(self.eval_interval),
            "source": {"shape": "disk", "center": list(self.source_center),
                       "radius": self.source_radius, "kx": self.source_kx, "ky": self.source_ky},
            "trace_points": self.trace_points, "denominator": self.denominator,
            "workers": self.workers,
        }


def _reject_unknown(data, allowed, prefix):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'} must be a mapping")
    extra = sorted(set(data) - allowed)
    if extra:
        raise ConfigError(f"unknown config keys: {', '.join(prefix + e for e in extra)}")


def load_config(path) -> StudyConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    return StudyConfig.from_mapping(data)


@dataclass(frozen=True)
class ErrorRecord:
    rho: float
    k: float
    error: float


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    r_squared: float


def regression(records: Sequence[ErrorRecord]) -> RegressionFit:
    """Least-squares line through ``(log rho, log(-log error))``."""
    if len(records) < 2:
        raise ValueError("need at least two records")
    rho = np.array([r.rho for r in records], dtype=float)
    err = np.array([r.error for r in records], dtype=float)
    bad = [r for r in records if not 0 < r.error < 1]
    if bad:
        raise ValueError(f"errors must lie in (0, 1) for the fit; offending: {bad}")
    x = np.log(rho)
    y = np.log(-np.log(err))
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0:
        raise ValueError("need at least two distinct rho values")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    ss_tot = float(np.sum((y - ym) ** 2))
    ss_res = float(np.sum((y - (intercept + slope * x)) ** 2))
    if len(records) == 2 or ss_tot == 0:
        r2 = 1.0
    else:
        r2 = max(0.0, 1.0 - ss_res / ss_tot)
    return RegressionFit(slope, intercept, r2)


@dataclass
class StudyResult:
    config: StudyConfig
    records: list
    fit: RegressionFit | None
    x1: np.ndarray
    traces: dict = field(default_factory=dict)  # rho -> complex trace
    reference: np.ndarray | None = None
    notes: list = field(default_factory=list)


class CellPipeline:
    """Mesh, Floquet grid and trace interpolation shared by all solves of a study."""

    def __init__(self, config: StudyConfig, N: int | None = None, h: float | None = None):
        self.config = config
        self.N = config.N if N is None else N
        self.h = config.h if h is None else h
        self.surface = config.surface()
        self.mesh = build_cell_mesh(self.surface, config.H, self.h)
        self.grid: FloquetGrid = floquet_grid(config.k, self.N)
        self.source = config.source()
        lo, hi = config.eval_interval
        self.x1 = np.linspace(lo, hi, config.trace_points)
        red, _ = fold(self.x1)
        pts = np.column_stack([red, np.full_like(red, config.eval_height)])
        self.interp = self.mesh.interpolation_matrix(pts)
        self.phases = np.exp(1j * np.outer(self.grid.alpha, self.x1))

    def solve(self, alpha: float, bc):
        system = assemble_cell(self.mesh, alpha, self.config.k, bc, self.config.truncation,
                               self.source)
        return solve_cell(system)

    def trace(self, bc, label=None, workers: int | None = None) -> np.ndarray:
        """Synthesized field on the evaluation line for one boundary condition."""
        workers = self.config.workers if workers is None else workers
        alphas = list(self.grid.alpha)

        def one(a):
            try:
                return self.interp @ self.solve(a, bc).values
            except CellSolveError as exc:
                raise StudyError(label, a, exc) from exc

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                values = list(pool.map(one, alphas))
        else:
            values = [one(a) for a in alphas]
        out = np.zeros(self.x1.size, dtype=complex)
        for w, ph, v in zip(self.grid.weight, self.phases, values):
            out += w * ph * v
        return out


def l2_line(x, u) -> float:
    return float(np.sqrt(trapezoid(np.abs(u) ** 2, x)))


def relative_error(x, u, ref, denominator: str = "tested") -> float:
    den = l2_line(x, u if denominator == "tested" else ref)
    return l2_line(x, u - ref) / den


def run_study(config: StudyConfig, pipeline: CellPipeline | None = None) -> StudyResult:
    """Sweep the PML strengths and compare each trace with the reference strength."""
    pipe = pipeline or CellPipeline(config)
    traces = {}
    for rho in (*config.rho, config.rho_reference):
        if rho in traces:
            continue
        sig = kernels.sigma(config.pml(rho))
        log.info("k=%g rho=%g sigma=%s", config.k, rho, sig)
        traces[rho] = pipe.trace(Pml(sig), label=rho)
    ref = traces[config.rho_reference]
    records = [ErrorRecord(rho, config.k,
                           relative_error(pipe.x1, traces[rho], ref, config.denominator))
               for rho in config.rho]
    try:
        fit = regression(records)
    except ValueError as exc:
        log.warning("regression skipped: %s", exc)
        fit = None
    return StudyResult(config, records, fit, pipe.x1, traces, ref)


def dtn_reference(config: StudyConfig, pipeline: CellPipeline | None = None) -> np.ndarray:
    """Trace of the exact-DtN synthesis on the evaluation line (no PML)."""
    pipe = pipeline or CellPipeline(config)
    return pipe.trace(ExactDtN(), label="dtn")


def quadrature_delta(config: StudyConfig) -> float:
    """Relative change of the reference-strength trace when N is doubled."""
    sig = kernels.sigma(config.pml(config.rho_reference))
    base = CellPipeline(config)
    a = base.trace(Pml(sig))
    b = CellPipeline(config, N=2 * config.N).trace(Pml(sig))
    return l2_line(base.x1, b - a) / l2_line(base.x1, b)


def write_csv(result: StudyResult, stream=None) -> str:
    """CSV with one row per PML strength; the fit is appended as ``#`` lines."""
    cfg = result.config
    buf = io.StringIO()
    buf.write("rho,k,error,n_quadrature,mesh_h,truncation_J\n")
    for r in result.records:
        buf.write(f"{r.rho:.17g},{r.k:.17g},{r.error:.17e},{cfg.N},{cfg.h:.17g},{cfg.truncation}\n")
    if result.fit is not None:
        buf.write("# regression: log(-log error) = slope * log(rho) + intercept\n")
        buf.write(f"# slope={result.fit.slope:.17g}\n")
        buf.write(f"# intercept={result.fit.intercept:.17g}\n")
        buf.write(f"# r_squared={result.fit.r_squared:.17g}\n")
    else:
        buf.write("# regression: unavailable (errors outside (0, 1))\n")
    for note in result.notes:
        buf.write(f"# {note}\n")
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text
