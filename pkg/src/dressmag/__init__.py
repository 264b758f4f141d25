"""Driven qubit-magnon hybrid: Hamiltonians, spectra, mean-field splittings and fits."""

from __future__ import annotations

__version__ = "0.1.0"

from .hilbert import Operator, SpaceSpec  # noqa: E402
from .meanfield import MeanFieldParams, lambdas, splittings  # noqa: E402
from .models import (  # noqa: E402
    DriveSpec,
    SystemParams,
    g_effective,
    h_effective,
    h_resonant,
    h_rotating,
    h_three_mode,
    rabi_rate,
)
from .spectral import anticrossing_sweep, eig, eigvals  # noqa: E402
from .fitcore import SplittingDataset, fit_k, predict  # noqa: E402

__all__ = [
    "__version__",
    "Operator",
    "SpaceSpec",
    "MeanFieldParams",
    "lambdas",
    "splittings",
    "DriveSpec",
    "SystemParams",
    "g_effective",
    "h_effective",
    "h_resonant",
    "h_rotating",
    "h_three_mode",
    "rabi_rate",
    "anticrossing_sweep",
    "eig",
    "eigvals",
    "SplittingDataset",
    "fit_k",
    "predict",
]
