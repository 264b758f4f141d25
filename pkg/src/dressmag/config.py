"""Run configuration: YAML in, validated dataclasses out.

Every physical key carries its unit in the name. Unknown keys are rejected
with their full key path. ``PROVENANCE`` tags each physical default as
``paper`` (a number quoted from the experiment), ``standard-domain``
(textbook value) or ``plumbing`` (a numerical/presentation choice).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from . import __version__
from .models import (
    ATTENUATION_DB,
    G_MAGNON_DEDUCTION,
    G_MAGNON_FIG1B,
    G_QM_MEASURED,
    G_QUBIT,
    K_FIT,
    NU_CAVITY,
    NU_QUBIT,
    DriveSpec,
    SystemParams,
)

BUNDLED = ("fig1b", "fig2b", "fig3", "fig4")

# g_m has two quoted values; configs pick one by name.
G_M_CONSTANTS = {"fig1b": G_MAGNON_FIG1B, "deduction": G_MAGNON_DEDUCTION}


class ConfigError(ValueError):
    pass


@dataclass
class SystemSection:
    nu_q_mhz: float = NU_QUBIT
    nu_m_mhz: float = NU_QUBIT
    nu_c_mhz: float = NU_CAVITY
    g_q_mhz: float = G_QUBIT
    g_m_mhz: float | None = None
    g_m_constant: str = "deduction"
    g_qm_mhz: float | None = G_QM_MEASURED
    gamma_q_mhz: float = 0.0
    gamma_m_mhz: float = 0.0
    gamma_c_mhz: float = 0.0

    def params(self) -> SystemParams:
        if self.g_m_mhz is not None:
            g_m = self.g_m_mhz
        elif self.g_m_constant in G_M_CONSTANTS:
            g_m = G_M_CONSTANTS[self.g_m_constant]
        else:
            raise ConfigError(f"system.g_m_constant: must be one of {sorted(G_M_CONSTANTS)}")
        return SystemParams(self.nu_q_mhz, self.nu_m_mhz, self.nu_c_mhz, self.g_q_mhz, g_m,
                            self.gamma_q_mhz, self.gamma_m_mhz, self.gamma_c_mhz, self.g_qm_mhz)


@dataclass
class DriveSection:
    nu_d_mhz: float | None = None       # defaults to the qubit frequency
    power_dbm: float = 1.0
    k_mhz_per_sqrt_mw: float = K_FIT
    attenuation_db: float = ATTENUATION_DB
    power_plane: str = "source"
    omega_d_mhz: float | None = None    # forces the Rabi rate, bypassing k and power

    def spec(self, nu_q: float) -> DriveSpec:
        nu_d = nu_q if self.nu_d_mhz is None else self.nu_d_mhz
        return DriveSpec(nu_d, self.power_dbm, self.k_mhz_per_sqrt_mw, self.attenuation_db,
                         self.power_plane)


@dataclass
class MeanFieldSection:
    A: float = 1.0
    n_magnons: int = 0


@dataclass
class NumericsSection:
    n_max: int = 20
    cavity_cutoff: int = 1
    n_levels: int = 8
    convergence_tol_mhz: float = 1e-6


@dataclass
class SweepSection:
    pair: str = "qubit_magnon"          # or cavity_magnon
    axis: str = "nu_m_mhz"              # or field_mt
    start: float = 6390.0
    stop: float = 6590.0
    num: int = 201
    window_lo_mhz: float | None = None
    window_hi_mhz: float | None = None
    b0_mt: float | None = None


@dataclass
class SpectrumSection:
    gamma_mhz: float = 3.0
    depth: float = 0.6
    step_mhz: float | None = None
    half_span_mhz: float | None = None
    excitation: str = "sigma_x"
    min_prominence: float = 0.1


@dataclass
class PowerMapSection:
    powers_dbm: list = field(default_factory=lambda: [1.0, 3.0, 5.0, 7.0, 11.0, 13.0, 15.0, 17.0])
    sources: list = field(default_factory=lambda: ["meanfield", "exact"])


@dataclass
class FitSection:
    n_magnons: int = 0
    n_scan: list | None = None


@dataclass
class RunConfig:
    name: str = "custom"
    model: str = "exact"
    system: SystemSection = field(default_factory=SystemSection)
    drive: DriveSection = field(default_factory=DriveSection)
    meanfield: MeanFieldSection = field(default_factory=MeanFieldSection)
    numerics: NumericsSection = field(default_factory=NumericsSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    spectrum: SpectrumSection = field(default_factory=SpectrumSection)
    powermap: PowerMapSection = field(default_factory=PowerMapSection)
    fit: FitSection = field(default_factory=FitSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


MODELS = ("exact", "meanfield", "threemode")

PROVENANCE = {
    "system.nu_q_mhz": "paper",
    "system.nu_m_mhz": "paper",
    "system.nu_c_mhz": "paper",
    "system.g_q_mhz": "paper",
    "system.g_m_mhz": "paper",
    "system.g_m_constant": "paper",
    "system.g_qm_mhz": "paper",
    "system.gamma_q_mhz": "plumbing",
    "system.gamma_m_mhz": "plumbing",
    "system.gamma_c_mhz": "plumbing",
    "drive.nu_d_mhz": "paper",
    "drive.power_dbm": "paper",
    "drive.k_mhz_per_sqrt_mw": "paper",
    "drive.attenuation_db": "paper",
    "drive.power_plane": "plumbing",
    "drive.omega_d_mhz": "plumbing",
    "meanfield.A": "paper",
    "meanfield.n_magnons": "paper",
    "numerics.n_max": "plumbing",
    "numerics.cavity_cutoff": "plumbing",
    "numerics.n_levels": "plumbing",
    "numerics.convergence_tol_mhz": "plumbing",
    "sweep.b0_mt": "standard-domain",
    "spectrum.gamma_mhz": "plumbing",
    "spectrum.depth": "plumbing",
    "powermap.powers_dbm": "paper",
    "fit.n_magnons": "paper",
}


def _build(cls, data: Any, path: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        kp = f"{path}.{key}" if path else str(key)
        if key not in known:
            raise ConfigError(f"{kp}: unknown key")
        default = getattr(cls(), key)
        if dataclasses.is_dataclass(default):
            kwargs[key] = _build(type(default), value, kp)
        else:
            kwargs[key] = _coerce(value, default, kp)
    return cls(**kwargs)


def _coerce(value, default, kp: str):
    if value is None:
        return None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{kp}: expected a boolean")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{kp}: expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, float) or (default is None and isinstance(value, (int, float))):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{kp}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, list) or (default is None and isinstance(value, list)):
        if not isinstance(value, list):
            raise ConfigError(f"{kp}: expected a list")
        return list(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{kp}: expected a string, got {value!r}")
        return value
    return value


def validate(cfg: RunConfig) -> RunConfig:
    if cfg.model not in MODELS:
        raise ConfigError(f"model: must be one of {MODELS}, got {cfg.model!r}")
    if cfg.sweep.pair not in ("qubit_magnon", "cavity_magnon"):
        raise ConfigError("sweep.pair: must be 'qubit_magnon' or 'cavity_magnon'")
    if cfg.sweep.axis not in ("nu_m_mhz", "field_mt"):
        raise ConfigError("sweep.axis: must be 'nu_m_mhz' or 'field_mt'")
    if cfg.sweep.num < 3:
        raise ConfigError("sweep.num: need at least 3 samples")
    if cfg.numerics.n_max < 1:
        raise ConfigError("numerics.n_max: must be >= 1")
    if cfg.drive.power_plane not in ("source", "cavity-input"):
        raise ConfigError("drive.power_plane: must be 'source' or 'cavity-input'")
    if cfg.spectrum.excitation not in ("sigma_x", "magnon", "mixture"):
        raise ConfigError("spectrum.excitation: must be sigma_x, magnon or mixture")
    if cfg.spectrum.gamma_mhz <= 0:
        raise ConfigError("spectrum.gamma_mhz: must be > 0")
    for s in cfg.powermap.sources:
        if s not in ("meanfield", "exact"):
            raise ConfigError(f"powermap.sources: unknown source {s!r}")
    for i, p in enumerate(cfg.powermap.powers_dbm):
        if isinstance(p, bool) or not isinstance(p, (int, float)):
            raise ConfigError(f"powermap.powers_dbm[{i}]: expected a number, got {p!r}")
    cfg.powermap.powers_dbm = [float(p) for p in cfg.powermap.powers_dbm]
    if cfg.fit.n_scan is not None and (len(cfg.fit.n_scan) != 2 or cfg.fit.n_scan[0] > cfg.fit.n_scan[1]):
        raise ConfigError("fit.n_scan: expected [lo, hi] with lo <= hi")
    try:
        cfg.system.params()
    except ValueError as exc:
        raise ConfigError(f"system: {exc}") from None
    return cfg


def from_dict(data: dict | None) -> RunConfig:
    return validate(_build(RunConfig, data or {}, ""))


def load(ref: str | Path | None) -> RunConfig:
    """Load a bundled config by name (``fig1b`` ...) or a YAML file path; ``None`` gives defaults."""
    if ref is None:
        return from_dict({})
    ref = str(ref)
    if ref in BUNDLED:
        text = resources.files("dressmag").joinpath("configs", f"{ref}.yaml").read_text()
    else:
        p = Path(ref)
        if not p.is_file():
            raise ConfigError(f"config not found: {ref} (bundled: {', '.join(BUNDLED)})")
        text = p.read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{ref}: YAML parse error: {exc}") from None
    return from_dict(data)


def echo(cfg: RunConfig, outdir: Path) -> None:
    """Write the resolved config, its provenance tags and a version stamp into ``outdir``."""
    outdir.mkdir(parents=True, exist_ok=True)
    doc = {"config": cfg.to_dict(), "provenance": dict(sorted(PROVENANCE.items()))}
    (outdir / "config_echo.yaml").write_text(yaml.safe_dump(doc, sort_keys=True))
    (outdir / "VERSION").write_text(f"dressmag {__version__}\n")
