"""Drive-calibration fit: splitting-vs-power data -> k (MHz / mW^1/2).

The model is the particle-hole splitting pair with g~ = g_qm and
Omega_d = k sqrt(P_mW)::

    outer = Omega_d/2 + sqrt((Omega_d/2)^2 + 4 g_qm^2 (N+1))
    inner = outer - Omega_d
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from .meanfield import MeanFieldParams, splittings

log = logging.getLogger(__name__)

K_BRACKET = (1.0, 1e4)


class DatasetError(ValueError):
    pass


class FitError(RuntimeError):
    pass


def dbm_to_mw(p_dbm):
    return 10.0 ** (np.asarray(p_dbm, dtype=float) / 10.0)


@dataclass(frozen=True)
class SplittingDataset:
    """Measured (or synthetic) splittings; powers stored in mW internally."""

    power_mw: np.ndarray
    outer: np.ndarray
    inner: np.ndarray
    sigma: np.ndarray | None = None
    power_unit: str = "dbm"     # unit of the source column, for round-tripping

    def __post_init__(self):
        arrs = {}
        for name in ("power_mw", "outer", "inner"):
            arrs[name] = np.asarray(getattr(self, name), dtype=float)
        n = len(arrs["power_mw"])
        if any(len(a) != n for a in arrs.values()):
            raise DatasetError("power, outer and inner columns differ in length")
        if n < 3:
            raise DatasetError(f"need at least 3 rows, got {n}")
        if np.any(arrs["power_mw"] < 0) or not np.all(np.isfinite(arrs["power_mw"])):
            raise DatasetError("powers must be finite and non-negative")
        if len(np.unique(arrs["power_mw"])) != n:
            raise DatasetError("powers must be distinct")
        if np.any(arrs["outer"] < 0) or np.any(arrs["inner"] < 0):
            raise DatasetError("splittings must be >= 0")
        for k, v in arrs.items():
            object.__setattr__(self, k, v)
        if self.sigma is not None:
            s = np.asarray(self.sigma, dtype=float)
            if s.shape != (n,) or np.any(s <= 0):
                raise DatasetError("sigma must be positive, one per row")
            object.__setattr__(self, "sigma", s)

    @classmethod
    def from_dbm(cls, power_dbm, outer, inner, sigma=None) -> "SplittingDataset":
        return cls(dbm_to_mw(power_dbm), outer, inner, sigma, "dbm")

    @property
    def power_dbm(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(self.power_mw)

    def __len__(self):
        return len(self.power_mw)

    def weights(self) -> np.ndarray:
        return np.ones(len(self)) if self.sigma is None else 1.0 / self.sigma

    def sanity_flags(self) -> list[str]:
        """Rows that break outer - inner increasing with power (outer - inner = Omega_d grows as sqrt(P))."""
        order = np.argsort(self.power_mw)
        diff = (self.outer - self.inner)[order]
        flags = []
        for j in range(1, len(diff)):
            if diff[j] < diff[j - 1]:
                flags.append(
                    f"outer-inner decreases between P={self.power_mw[order[j - 1]]:.4g} mW "
                    f"and P={self.power_mw[order[j]]:.4g} mW"
                )
        return flags


def predict(k: float, N: int, g_qm: float, power_mw) -> tuple[np.ndarray, np.ndarray]:
    """(outer, inner) splittings in MHz at powers in mW."""
    om = k * np.sqrt(np.asarray(power_mw, dtype=float))
    pairs = [splittings(MeanFieldParams(g_qm, float(o), 1.0, N)) for o in np.atleast_1d(om)]
    outer = np.array([s.split_outer for s in pairs])
    inner = np.array([s.split_inner for s in pairs])
    if np.ndim(power_mw) == 0:
        return outer[0], inner[0]
    return outer, inner


def _residuals(k: float, N: int, g_qm: float, data: SplittingDataset) -> tuple[np.ndarray, np.ndarray]:
    om = k * np.sqrt(data.power_mw)
    half = 0.5 * om
    root = np.sqrt(half * half + 4.0 * g_qm * g_qm * (N + 1))
    outer = half + root
    inner = root - half
    return outer - data.outer, inner - data.inner


def objective(k: float, N: int, g_qm: float, data: SplittingDataset) -> float:
    """Sum over rows of (outer and inner) squared residuals divided by sigma^2."""
    ro, ri = _residuals(k, N, g_qm, data)
    w = data.weights()
    return float(np.sum((ro * w) ** 2 + (ri * w) ** 2))


def _parabolic_finish(fun, a: float, x: float, b: float) -> float:
    """One parabolic step through (a, x, b), kept only when it lowers the objective."""
    fa, fx, fb = fun(a), fun(x), fun(b)
    den = (x - a) * (fx - fb) - (x - b) * (fx - fa)
    if den != 0:
        xp = x - 0.5 * ((x - a) ** 2 * (fx - fb) - (x - b) ** 2 * (fx - fa)) / den
        if a < xp < b and fun(xp) < fx:
            return xp
    return x


def minimize_k(N: int, g_qm: float, data: SplittingDataset, bracket=K_BRACKET,
               n_coarse: int = 400, rtol: float = 1e-8) -> float:
    """Coarse log-spaced scan to bracket the minimum, then golden section with a parabolic finish."""
    lo, hi = bracket
    grid = np.geomspace(lo, hi, n_coarse)
    vals = np.array([objective(k, N, g_qm, data) for k in grid])
    i = int(np.argmin(vals))
    if i == 0 or i == len(grid) - 1:
        raise FitError(f"no minimum inside the k bracket [{lo:g}, {hi:g}] MHz/mW^1/2 (edge at {grid[i]:g})")
    fun = lambda k: objective(k, N, g_qm, data)
    sol = minimize_scalar(fun, bracket=(grid[i - 1], grid[i], grid[i + 1]), method="golden",
                          options={"xtol": rtol})
    x = float(np.clip(sol.x, grid[i - 1], grid[i + 1]))
    return _parabolic_finish(fun, grid[i - 1], x, grid[i + 1])


@dataclass(frozen=True)
class FitResult:
    k: float
    N: int
    residual_rms: float
    per_point_residuals: list = field(default_factory=list)
    k_stderr: float = float("nan")

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(d, indent=2, sort_keys=False, default=_json_default) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FitResult":
        d = json.loads(text)
        return cls(**d)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def _round12(x: float) -> float:
    return float(f"{x:.12g}")


def _curvature(fun, x: float) -> float:
    h = max(1e-4 * abs(x), 1e-8)
    return (fun(x + h) - 2 * fun(x) + fun(x - h)) / (h * h)


def fit_k(data: SplittingDataset, g_qm: float, N: int | tuple[int, int] = 0, *,
          bracket=K_BRACKET) -> FitResult:
    """Least-squares k with ``N`` fixed, or scanned over an inclusive ``(lo, hi)`` range.

    With a scan the smallest objective wins, ties going to the smaller N.
    ``per_point_residuals`` holds ``[power_mw, outer_obs - outer_fit,
    inner_obs - inner_fit]`` rows in dataset order.
    """
    if len(np.unique(data.power_mw)) < 2:
        raise FitError("degenerate dataset: all powers equal")
    for flag in data.sanity_flags():
        log.warning("dataset check: %s", flag)

    if isinstance(N, tuple):
        lo, hi = N
        if lo < 0 or hi < lo:
            raise ValueError(f"bad N scan range {N!r}")
        best = None
        for n in range(lo, hi + 1):
            try:
                k = minimize_k(n, g_qm, data, bracket)
            except FitError:
                continue
            obj = objective(k, n, g_qm, data)
            if best is None or obj < best[2]:
                best = (k, n, obj)
        if best is None:
            raise FitError("no N in the scan range produced an interior minimum")
        k, n_best, _ = best
    else:
        n_best = int(N)
        k = minimize_k(n_best, g_qm, data, bracket)

    ro, ri = _residuals(k, n_best, g_qm, data)
    res = np.concatenate([ro, ri])
    rms = float(np.sqrt(np.mean(res ** 2)))
    fun = lambda kk: objective(kk, n_best, g_qm, data)
    curv = _curvature(fun, k)
    dof = max(2 * len(data) - 1, 1)
    scale = 1.0 if data.sigma is not None else fun(k) / dof
    k_stderr = math.sqrt(2.0 * scale / curv) if curv > 0 else float("inf")
    rows = [[_round12(p), _round12(-a), _round12(-b)] for p, a, b in zip(data.power_mw, ro, ri)]
    return FitResult(_round12(k), n_best, _round12(rms), rows, _round12(k_stderr))


def fit_k_and_gqm(data: SplittingDataset, k0: float, g0: float, N: int = 0) -> tuple[float, float]:
    """Joint (k, g_qm) least squares. Not the calibrated procedure: g_qm normally comes from Omega_0."""
    def resid(x):
        ro, ri = _residuals(x[0], N, x[1], data)
        w = data.weights()
        return np.concatenate([ro * w, ri * w])

    sol = least_squares(resid, [k0, g0], bounds=([0, 0], np.inf))
    return float(sol.x[0]), float(sol.x[1])


# -- residual report ----------------------------------------------------------------

@dataclass(frozen=True)
class ResidualReport:
    power_mw: np.ndarray
    outer_residual: np.ndarray      # observed - model
    inner_residual: np.ndarray
    strong_drive_signature: bool
    strong_outer_mean: float
    strong_inner_mean: float

    def rows(self) -> list[tuple[float, float, float]]:
        return list(zip(self.power_mw.tolist(), self.outer_residual.tolist(),
                        self.inner_residual.tolist()))


def residual_report(data: SplittingDataset, result: FitResult, g_qm: float, *,
                    threshold: float | None = None) -> ResidualReport:
    """Signed residuals (observed - model), sorted by power.

    Flags the strong-drive signature: over the stronger half of the powers
    the model's outer splitting sits below the data and its inner splitting
    above it, both by more than ``threshold`` (default: the residual RMS of
    the weaker half, at least 1e-9 MHz).
    """
    order = np.argsort(data.power_mw, kind="stable")
    p = data.power_mw[order]
    mo, mi = predict(result.k, result.N, g_qm, p)
    ro = data.outer[order] - mo
    ri = data.inner[order] - mi
    half = len(p) // 2
    strong = slice(half, None)
    if threshold is None:
        weak = np.concatenate([ro[:half], ri[:half]])
        threshold = max(float(np.sqrt(np.mean(weak ** 2))) if len(weak) else 0.0, 1e-9)
    so, si = float(np.mean(ro[strong])), float(np.mean(ri[strong]))
    flag = so > threshold and si < -threshold
    return ResidualReport(p, ro, ri, bool(flag), so, si)


# -- CSV ------------------------------------------------------------------------------

def read_dataset_csv(path: str | Path) -> SplittingDataset:
    """``power_dbm,outer_mhz,inner_mhz[,sigma_mhz]`` (or ``power_mw`` as the first column)."""
    path = Path(path)
    rows = []
    header = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            cells = [c.strip() for c in line.split(",")]
            if header is None:
                header = cells
                if header[:3] not in (["power_dbm", "outer_mhz", "inner_mhz"],
                                      ["power_mw", "outer_mhz", "inner_mhz"]) \
                        or len(header) not in (3, 4) or (len(header) == 4 and header[3] != "sigma_mhz"):
                    raise DatasetError(f"{path}:{lineno}: bad header {line!r}")
                continue
            if len(cells) != len(header):
                raise DatasetError(f"{path}:{lineno}: expected {len(header)} columns, got {len(cells)}")
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-numeric value in {line!r}") from None
    if header is None:
        raise DatasetError(f"{path}: empty file")
    arr = np.array(rows, dtype=float).reshape(-1, len(header))
    sigma = arr[:, 3] if len(header) == 4 else None
    try:
        if header[0] == "power_mw":
            return SplittingDataset(arr[:, 0], arr[:, 1], arr[:, 2], sigma, "mw")
        return SplittingDataset.from_dbm(arr[:, 0], arr[:, 1], arr[:, 2], sigma)
    except DatasetError as exc:
        raise DatasetError(f"{path}: {exc}") from None


def write_dataset_csv(data: SplittingDataset, path: str | Path) -> Path:
    path = Path(path)
    cols = ["power_mw" if data.power_unit == "mw" else "power_dbm", "outer_mhz", "inner_mhz"]
    if data.sigma is not None:
        cols.append("sigma_mhz")
    p = data.power_mw if data.power_unit == "mw" else data.power_dbm
    lines = [",".join(cols)]
    for i in range(len(data)):
        vals = [p[i], data.outer[i], data.inner[i]]
        if data.sigma is not None:
            vals.append(data.sigma[i])
        lines.append(",".join(f"{float(v):.12g}" for v in vals))
    path.write_text("\n".join(lines) + "\n")
    return path


def synthetic_dataset(k: float, N: int, g_qm: float, powers_dbm: Sequence[float],
                      noise: float = 0.0, seed: int | None = None) -> SplittingDataset:
    """Splittings from :func:`predict`, optionally with Gaussian noise (MHz) from a seeded generator."""
    mw = dbm_to_mw(powers_dbm)
    outer, inner = predict(k, N, g_qm, mw)
    if noise:
        rng = np.random.default_rng(seed)
        outer = outer + rng.normal(0.0, noise, len(mw))
        inner = inner + rng.normal(0.0, noise, len(mw))
        inner = np.abs(inner)
    return SplittingDataset(mw, outer, inner, None, "dbm")
