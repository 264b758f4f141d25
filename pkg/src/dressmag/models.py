"""Hamiltonians of the cavity / qubit / Kittel-magnon system.

Every frequency, coupling and linewidth is an ordinary frequency
nu = omega / 2pi in MHz; matrices built here are in MHz as well. Time, where
it appears, is in microseconds so that ``2 * pi * nu * t`` is a phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .hilbert import (
    Operator,
    SpaceError,
    SpaceSpec,
    boson,
    pauli,
)

# Measured/quoted device numbers (MHz, dB, MHz/mW^1/2).
NU_CAVITY = 6990.0          # TE102 cavity mode
NU_QUBIT = 6490.0
G_MAGNON_FIG1B = 43.0       # from the ~86 MHz magnon-polariton splitting
G_MAGNON_DEDUCTION = 42.0   # value used when deducing g_q
G_QUBIT = 239.0
G_QM_MEASURED = 20.1        # from the vacuum Rabi splitting
DETUNING = 500.0            # cavity-qubit detuning
K_FIT = 103.0               # drive calibration, MHz / mW^1/2
ATTENUATION_DB = 45.0

DISPERSIVE_FACTOR = 3.0


class DispersiveValidityError(ValueError):
    """Effective-model constructor used outside the dispersive regime."""


class SingularDetuningError(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class SystemParams:
    """Mode frequencies, couplings and HWHM linewidths, all in MHz.

    ``g_qm`` optionally pins the effective qubit-magnon coupling (e.g. to the
    measured 20.1 MHz); when left as ``None`` it is derived from ``g_q``,
    ``g_m`` and the cavity detunings.
    """

    nu_q: float = NU_QUBIT
    nu_m: float = NU_QUBIT
    nu_c: float = NU_CAVITY
    g_q: float = G_QUBIT
    g_m: float = G_MAGNON_DEDUCTION
    gamma_q: float = 0.0
    gamma_m: float = 0.0
    gamma_c: float = 0.0
    g_qm: float | None = None

    def __post_init__(self):
        for name in ("nu_q", "nu_m", "nu_c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)!r}")
        for name in ("g_q", "g_m", "gamma_q", "gamma_m", "gamma_c"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)!r}")
        if self.g_qm is not None and self.g_qm < 0:
            raise ValueError(f"g_qm must be >= 0, got {self.g_qm!r}")

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    @property
    def dispersive_ok(self) -> bool:
        return (abs(self.nu_c - self.nu_q) > DISPERSIVE_FACTOR * self.g_q
                and abs(self.nu_c - self.nu_m) > DISPERSIVE_FACTOR * self.g_m)


@dataclass(frozen=True)
class DriveSpec:
    """Monochromatic qubit drive.

    ``k`` converts power in mW at ``power_plane`` into the Rabi rate:
    Omega_d = k * sqrt(P_mW). With ``power_plane='source'`` the attenuation
    is recorded but not applied; with ``'cavity-input'`` it is subtracted
    from the source power first.
    """

    nu_d: float = NU_QUBIT
    power_dbm: float = 0.0
    k: float = K_FIT
    attenuation_db: float = ATTENUATION_DB
    power_plane: str = "source"

    def __post_init__(self):
        if self.power_plane not in ("source", "cavity-input"):
            raise ValueError(f"power_plane must be 'source' or 'cavity-input', got {self.power_plane!r}")
        if not math.isfinite(self.power_dbm):
            raise ValueError("power_dbm must be finite")
        if self.k < 0:
            raise ValueError("k must be >= 0")

    @property
    def effective_power_dbm(self) -> float:
        if self.power_plane == "cavity-input":
            return self.power_dbm - self.attenuation_db
        return self.power_dbm

    @property
    def power_mw(self) -> float:
        return 10.0 ** (self.effective_power_dbm / 10.0)

    @property
    def omega_d(self) -> float:
        return rabi_rate(self)


@dataclass(frozen=True)
class Detunings:
    delta_q: float
    delta_m: float
    Delta_q: float
    Delta_m: float


def detunings(p: SystemParams, d: DriveSpec | None = None) -> Detunings:
    """Drive detunings (delta) and cavity detunings (Delta), recomputed on every call."""
    nu_d = d.nu_d if d is not None else float("nan")
    return Detunings(
        delta_q=p.nu_q - nu_d,
        delta_m=p.nu_m - nu_d,
        Delta_q=p.nu_c - p.nu_q,
        Delta_m=p.nu_c - p.nu_m,
    )


def rabi_rate(d: DriveSpec) -> float:
    """Omega_d = k * sqrt(P_mW) in MHz, honouring the drive's power plane."""
    return d.k * math.sqrt(d.power_mw)


def check_dispersive(p: SystemParams) -> None:
    if not p.dispersive_ok:
        raise DispersiveValidityError(
            "dispersive regime not satisfied: need |nu_c - nu_q| > "
            f"{DISPERSIVE_FACTOR:g} g_q ({abs(p.nu_c - p.nu_q):g} vs {DISPERSIVE_FACTOR * p.g_q:g}) "
            f"and |nu_c - nu_m| > {DISPERSIVE_FACTOR:g} g_m "
            f"({abs(p.nu_c - p.nu_m):g} vs {DISPERSIVE_FACTOR * p.g_m:g}); "
            "pass unchecked=True to override"
        )


def g_effective(p: SystemParams, *, unchecked: bool = False) -> float:
    """Cavity-mediated qubit-magnon coupling (1/2) g_q g_m (1/Delta_q + 1/Delta_m).

    For Delta_q = Delta_m = Delta this is g_q g_m / Delta.
    """
    det = detunings(p)
    if det.Delta_q == 0 or det.Delta_m == 0:
        raise SingularDetuningError("cavity detuning is zero; effective coupling diverges")
    if not unchecked:
        check_dispersive(p)
    return 0.5 * p.g_q * p.g_m * (1.0 / det.Delta_q + 1.0 / det.Delta_m)


def resolve_g_qm(p: SystemParams, g_qm: float | None = None, *, unchecked: bool = False) -> float:
    """Explicit ``g_qm`` > ``p.g_qm`` > derived from the three-mode parameters.

    Only the derived route is subject to the dispersive precondition; a
    supplied coupling is taken as measured.
    """
    if g_qm is not None:
        return float(g_qm)
    if p.g_qm is not None:
        return float(p.g_qm)
    return g_effective(p, unchecked=unchecked)


def _jc_coupling(space: SpaceSpec) -> Operator:
    sp, sm = pauli("plus", space), pauli("minus", space)
    b, bd = boson("annihilate", "magnon", space), boson("create", "magnon", space)
    return sp @ b + sm @ bd


def h_three_mode(p: SystemParams, space: SpaceSpec) -> Operator:
    """Qubit and magnon both coupled to the TE102 cavity (RWA)::

        (nu_q/2) sz + nu_c c^dag c + nu_m b^dag b
            + g_q (s+ c + s- c^dag) + g_m (c^dag b + c b^dag)
    """
    if not space.has_cavity:
        raise SpaceError("h_three_mode needs a space with a cavity factor")
    sz, sp, sm = pauli("z", space), pauli("plus", space), pauli("minus", space)
    b, bd = boson("annihilate", "magnon", space), boson("create", "magnon", space)
    c, cd = boson("annihilate", "cavity", space), boson("create", "cavity", space)
    h = (0.5 * p.nu_q) * sz + p.nu_c * (cd @ c) + p.nu_m * (bd @ b) \
        + p.g_q * (sp @ c + sm @ cd) + p.g_m * (cd @ b + c @ bd)
    return h.as_hermitian("H_three_mode")


def h_effective(p: SystemParams, space: SpaceSpec, g_qm: float | None = None, *,
                unchecked: bool = False) -> Operator:
    """(nu_q/2) sz + nu_m b^dag b + g_qm (s+ b + s- b^dag) on qubit (x) magnon."""
    if space.has_cavity:
        raise SpaceError("h_effective lives on qubit (x) magnon; drop the cavity factor")
    g = resolve_g_qm(p, g_qm, unchecked=unchecked)
    sz = pauli("z", space)
    n = boson("number", "magnon", space)
    h = (0.5 * p.nu_q) * sz + p.nu_m * n + g * _jc_coupling(space)
    return h.as_hermitian("H_qm")


def h_rotating(p: SystemParams, d: DriveSpec, space: SpaceSpec, *, omega_d: float | None = None,
               g_qm: float | None = None, unchecked: bool = False) -> Operator:
    """Driven Hamiltonian in the frame rotating at ``d.nu_d``::

        (delta_q/2) sz + (Omega_d/2) sx + delta_m b^dag b + g_qm (s+ b + s- b^dag)

    ``omega_d`` overrides the Rabi rate derived from ``d``.
    """
    if space.has_cavity:
        raise SpaceError("h_rotating lives on qubit (x) magnon; drop the cavity factor")
    om = rabi_rate(d) if omega_d is None else float(omega_d)
    if om < 0:
        raise ValueError("Omega_d must be >= 0")
    g = resolve_g_qm(p, g_qm, unchecked=unchecked)
    det = detunings(p, d)
    h = (0.5 * det.delta_q) * pauli("z", space) + (0.5 * om) * pauli("x", space) \
        + det.delta_m * boson("number", "magnon", space) + g * _jc_coupling(space)
    return h.as_hermitian("H_rot")


def h_resonant(g_qm: float, omega_d: float, space: SpaceSpec) -> Operator:
    """(Omega_d/2) sx + g_qm (s+ b + s- b^dag): the drive-resonant case delta_q = delta_m = 0."""
    if omega_d < 0:
        raise ValueError("Omega_d must be >= 0")
    if space.has_cavity:
        raise SpaceError("h_resonant lives on qubit (x) magnon; drop the cavity factor")
    h = (0.5 * omega_d) * pauli("x", space) + g_qm * _jc_coupling(space)
    return h.as_hermitian("H_res")


def h_lab(p: SystemParams, d: DriveSpec, t_us: float, space: SpaceSpec, *,
          omega_d: float | None = None, g_qm: float | None = None,
          unchecked: bool = False) -> Operator:
    """Instantaneous lab-frame Hamiltonian H_qm + (Omega_d/2) cos(2 pi nu_d t) sx.

    Under the RWA this drive term leaves (Omega_d/4) sx in the rotating frame,
    half the coefficient :func:`h_rotating` uses; the rotating-frame form is
    the one used everywhere else in the package.
    """
    om = rabi_rate(d) if omega_d is None else float(omega_d)
    h0 = h_effective(p, space, g_qm, unchecked=unchecked)
    drive = (0.5 * om * math.cos(2.0 * math.pi * d.nu_d * t_us)) * pauli("x", space)
    return (h0 + drive).as_hermitian("H_lab")


def frame_generator(space: SpaceSpec) -> Operator:
    """sz/2 + b^dag b: H_rot = H_qm - nu_d * (this) when Omega_d = 0."""
    return (0.5 * pauli("z", space) + boson("number", "magnon", space)).as_hermitian("frame")


def dressed_rabi_frequency(omega_d: float, delta_q: float) -> float:
    """Generalised Rabi frequency sqrt(Omega_d^2 + delta_q^2)."""
    return math.hypot(omega_d, delta_q)


def single_excitation_matrix(p: SystemParams) -> np.ndarray:
    """Three-mode Hamiltonian restricted to {|e,0,0>, |g,1,0>, |g,0,1>}, offset by -nu_q/2."""
    return np.array([
        [p.nu_q, 0.0, p.g_q],
        [0.0, p.nu_m, p.g_m],
        [p.g_q, p.g_m, p.nu_c],
    ])
