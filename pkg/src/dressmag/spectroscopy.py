"""Phenomenological dispersive-readout traces and dip extraction.

A trace is ``T(nu) = max(0, 1 - sum_j d_j gamma_j^2 / ((nu - nu_j)^2 + gamma_j^2))``:
one Lorentzian dip per transition, depth proportional to its weight and
scaled so the strongest dip has depth ``depth``. Only dip *positions* carry
physics; depths and widths are presentation.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks

from .hilbert import Operator, SpaceSpec, boson, pauli
from .meanfield import MeanFieldParams, SplittingPrediction, splittings
from .models import DriveSpec, SystemParams, h_rotating, rabi_rate, resolve_g_qm
from .spectral import eig, worker_count

log = logging.getLogger(__name__)

DEFAULT_GAMMA = 3.0             # MHz HWHM, display choice only
DEFAULT_DEPTH = 0.6
GYROMAGNETIC_MHZ_PER_MT = 28.0  # free-electron Kittel slope, 28 GHz/T
FLOAT_FMT = "{:.12g}"


class DipExtractionError(ValueError):
    def __init__(self, message: str, candidates: Sequence[float] = ()):
        self.candidates = tuple(float(c) for c in candidates)
        super().__init__(message)


# -- line sources ---------------------------------------------------------------------

@dataclass(frozen=True)
class LineList:
    """Transition frequencies (absolute, MHz) with non-negative weights."""

    centers: np.ndarray
    weights: np.ndarray
    model: str = ""
    params: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.centers)


def merge_lines(centers, weights, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Combine lines closer than ``tol * max(1, |nu|)``; weights add."""
    centers = np.asarray(centers, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if len(centers) == 0:
        return centers, weights
    order = np.argsort(centers, kind="stable")
    c, w = centers[order], weights[order]
    out_c, out_w = [c[0]], [w[0]]
    for x, y in zip(c[1:], w[1:]):
        if x - out_c[-1] <= tol * max(1.0, abs(x)):
            tot = out_w[-1] + y
            if tot > 0:
                out_c[-1] = (out_c[-1] * out_w[-1] + x * y) / tot
            out_w[-1] = tot
        else:
            out_c.append(x)
            out_w.append(y)
    return np.array(out_c), np.array(out_w)


def excitation_operator(space: SpaceSpec, kind: str = "sigma_x", mix: float = 0.5) -> np.ndarray:
    """Probe operator: ``sigma_x``, ``magnon`` (b + b^dag) or ``mixture`` of the two.

    The two pure probes anticommute or commute with sigma_z, so lines from
    |g,0> come in mirror pairs about the drive; the mixture does not.
    """
    sx = pauli("x", space).matrix
    bx = (boson("annihilate", "magnon", space) + boson("create", "magnon", space)).matrix
    if kind == "sigma_x":
        return sx
    if kind == "magnon":
        return bx
    if kind == "mixture":
        return (1.0 - mix) * sx + mix * bx
    raise ValueError(f"unknown excitation operator {kind!r}")


def _clusters(values: np.ndarray, rtol: float = 1e-9) -> list[np.ndarray]:
    scale = max(1.0, float(np.max(np.abs(values), initial=0.0)))
    groups, start = [], 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i] - values[i - 1] > rtol * scale:
            groups.append(np.arange(start, i))
            start = i
    return groups


def exact_lines(h: Operator, nu_d: float, *, excitation: str = "sigma_x", mix: float = 0.5,
                reference: str = "vacuum", prune: float = 1e-8) -> LineList:
    """Linear-response lines of a rotating-frame Hamiltonian.

    The reference state is ``|g, 0>`` (``reference='vacuum'``: the undriven
    ground state the system sits in at base temperature) or the lowest
    eigenstate of ``h`` (``'lowest'``). Its component in each eigenspace I
    feeds line I -> F at ``nu_d + E_F - E_I`` with weight
    ``|| P_F X P_I psi ||^2``, which does not depend on how degenerate
    eigenvectors are chosen. Elastic (I = F) terms are dropped.
    """
    es = eig(h)
    space = h.space
    if reference == "vacuum":
        psi = space.basis_state("g", 0)
    elif reference == "lowest":
        psi = es.vectors[:, 0]
    else:
        raise ValueError(f"unknown reference {reference!r}")
    V = es.vectors
    X = excitation_operator(space, excitation, mix)
    M = V.conj().T @ X @ V
    c = V.conj().T @ psi
    clusters = _clusters(es.values)
    energies = np.array([es.values[g].mean() for g in clusters])
    centers, weights = [], []
    for i, gi in enumerate(clusters):
        if np.sum(np.abs(c[gi]) ** 2) < prune:
            continue
        d = M[:, gi] @ c[gi]
        p = np.abs(d) ** 2
        for f, gf in enumerate(clusters):
            if f == i:
                continue
            w = float(np.sum(p[gf]))
            if w > 0:
                centers.append(nu_d + energies[f] - energies[i])
                weights.append(w)
    centers, weights = merge_lines(centers, weights)
    if len(weights):
        keep = weights >= prune * weights.max()
        centers, weights = centers[keep], weights[keep]
    return LineList(centers, weights, "exact",
                    {"reference": reference, "excitation": excitation, "dim": space.dim})


def meanfield_lines(pred: SplittingPrediction, nu_d: float) -> LineList:
    """Four equal-weight lines at ``nu_d + (lambda_+, lambda_-, -lambda_-, -lambda_+)``; coincident ones merge."""
    c, w = merge_lines(nu_d + np.array(pred.dip_offsets), np.ones(4))
    return LineList(c, w, "meanfield", {})


# -- traces ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectrumTrace:
    freq: np.ndarray
    transmission: np.ndarray
    meta: dict = field(default_factory=dict)
    unit: str = "linear"        # or "db"

    def __post_init__(self):
        f = np.asarray(self.freq, dtype=float)
        t = np.asarray(self.transmission, dtype=float)
        if f.shape != t.shape or f.ndim != 1:
            raise ValueError("freq and transmission must be 1-D arrays of equal length")
        if len(f) > 1 and not np.all(np.diff(f) > 0):
            raise ValueError("freq must be strictly ascending")
        if self.unit not in ("linear", "db"):
            raise ValueError("unit must be 'linear' or 'db'")
        if self.unit == "linear" and len(t) and (t.min() < -1e-12 or t.max() > 1 + 1e-12):
            raise ValueError("normalised transmission must lie in [0, 1]")
        object.__setattr__(self, "freq", f)
        object.__setattr__(self, "transmission", t)

    def linear(self) -> np.ndarray:
        return 10.0 ** (self.transmission / 10.0) if self.unit == "db" else self.transmission


def lorentzian_dips(freq: np.ndarray, centers, depths, gammas) -> np.ndarray:
    freq = np.asarray(freq, dtype=float)[None, :]
    c = np.asarray(centers, dtype=float)[:, None]
    d = np.asarray(depths, dtype=float)[:, None]
    g = np.asarray(gammas, dtype=float)[:, None]
    return np.sum(d * g * g / ((freq - c) ** 2 + g * g), axis=0)


def synth_trace(lines: LineList, freq, *, gamma=DEFAULT_GAMMA, depth: float = DEFAULT_DEPTH,
                lineshape: str = "lorentzian", meta: dict | None = None) -> SpectrumTrace:
    if lineshape != "lorentzian":
        raise ValueError(f"unsupported lineshape {lineshape!r}")
    if len(lines) == 0:
        raise ValueError("cannot synthesise a trace from an empty line list")
    w = np.asarray(lines.weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("line weights must be >= 0")
    gam = np.broadcast_to(np.asarray(gamma, dtype=float), w.shape)
    if np.any(gam <= 0):
        raise ValueError("linewidths must be > 0")
    depths = depth * w / w.max()
    freq = np.asarray(freq, dtype=float)
    t = np.clip(1.0 - lorentzian_dips(freq, lines.centers, depths, gam), 0.0, None)
    m = {"model": lines.model}
    m.update(meta or {})
    return SpectrumTrace(freq, t, m)


def symmetric_grid(nu_d: float, half_span: float, step: float) -> np.ndarray:
    """Grid symmetric about ``nu_d`` so mirror-symmetric dips sample identically."""
    n = int(math.ceil(half_span / step))
    return nu_d + step * np.arange(-n, n + 1)


# -- dip extraction -------------------------------------------------------------------

@dataclass(frozen=True)
class DipSet:
    positions: np.ndarray
    depths: np.ndarray
    widths: np.ndarray
    labels: tuple[int, ...]
    nu_d: float | None = None

    @property
    def symmetry_defects(self) -> tuple[float, ...] | None:
        """|(pos_1 + pos_4)/2 - nu_d| and, with four dips, |(pos_2 + pos_3)/2 - nu_d|."""
        if self.nu_d is None:
            return None
        p = self.positions
        out = [abs(0.5 * (p[0] + p[-1]) - self.nu_d)]
        if len(p) == 4:
            out.append(abs(0.5 * (p[1] + p[2]) - self.nu_d))
        return tuple(out)

    @property
    def outer_split(self) -> float:
        return float(self.positions[-1] - self.positions[0])

    @property
    def inner_split(self) -> float:
        p = self.positions
        if len(p) == 4:
            return float(p[2] - p[1])
        if len(p) == 2:
            return float(p[1] - p[0])
        raise ValueError(f"inner splitting undefined for {len(p)} dips")


def _half_width(f: np.ndarray, t: np.ndarray, i: int, lo: int, hi: int) -> float:
    half = 1.0 - 0.5 * (1.0 - t[i])
    widths = []
    j = i
    while j > lo and t[j] < half:
        j -= 1
    if t[j] >= half and j < i:
        x = f[j] + (half - t[j]) * (f[j + 1] - f[j]) / (t[j + 1] - t[j])
        widths.append(f[i] - x)
    j = i
    while j < hi and t[j] < half:
        j += 1
    if t[j] >= half and j > i:
        x = f[j - 1] + (half - t[j - 1]) * (f[j] - f[j - 1]) / (t[j] - t[j - 1])
        widths.append(x - f[i])
    if not widths:
        return float(f[hi] - f[lo]) / 2
    return float(min(widths))


def _candidate_minima(t: np.ndarray, threshold: float) -> list[int]:
    # flat bottoms (a dip clamped at T = 0) report their midpoint
    peaks, _ = find_peaks(-t, height=-threshold)
    return [int(i) for i in peaks if -t[i] > -threshold]


def extract_dips(trace: SpectrumTrace, *, min_prominence: float = 0.1, expected_count: int = 4,
                 nu_d: float | None = None) -> DipSet:
    """Locate ``expected_count`` dips below ``1 - min_prominence``.

    Positions come from 3-point parabolic interpolation around each local
    minimum. Depths and HWHM widths come from a least-squares fit of a
    Lorentzian sum with the centres held at those positions, so neighbouring
    tails do not leak into the depths.
    """
    if expected_count not in (2, 4):
        raise ValueError("expected_count must be 2 or 4")
    f = trace.freq
    t = trace.linear()
    if len(f) < 5:
        raise DipExtractionError("trace too short")
    thr = 1.0 - min_prominence
    if (t[0] < thr and t[0] < t[1]) or (t[-1] < thr and t[-1] < t[-2]):
        raise DipExtractionError("dip at grid boundary: extend the frequency range")
    idx = _candidate_minima(t, thr)

    lo_bounds = [0] + [(a + b) // 2 for a, b in zip(idx[:-1], idx[1:])]
    hi_bounds = [(a + b) // 2 for a, b in zip(idx[:-1], idx[1:])] + [len(t) - 1]
    widths0 = [_half_width(f, t, i, lo, hi) for i, lo, hi in zip(idx, lo_bounds, hi_bounds)]

    if len(idx) != expected_count:
        desc = ", ".join(f"{f[i]:.4g} MHz (T={t[i]:.3g}, hwhm~{w:.3g})" for i, w in zip(idx, widths0))
        msg = f"{len(idx)} dips found, expected {expected_count}"
        if idx:
            msg += f"; candidates: {desc}"
        if 0 < len(idx) < expected_count:
            # a merged pair shows up as the candidate with the largest depth x width
            area = [(1.0 - t[i]) * w for i, w in zip(idx, widths0)]
            order = np.argsort(area)[::-1][:expected_count - len(idx)]
            merged = ", ".join(f"{f[idx[j]]:.4g}" for j in sorted(order))
            msg += f"; likely merged dips near {merged} MHz"
        raise DipExtractionError(msg, [f[i] for i in idx])

    positions = []
    for i in idx:
        x, y = f[i - 1:i + 2], t[i - 1:i + 2]
        denom = (y[0] - 2 * y[1] + y[2])
        if denom > 0 and np.allclose(np.diff(x), x[1] - x[0]):
            shift = 0.5 * (y[0] - y[2]) / denom
            positions.append(float(x[1] + shift * (x[1] - x[0])))
        else:
            positions.append(float(x[1]))
    positions = np.array(positions)

    step = float(np.median(np.diff(f)))
    if min(widths0) < 5 * step:
        log.warning("fewer than 5 samples per linewidth (hwhm %.3g, step %.3g)", min(widths0), step)

    d0 = np.array([1.0 - t[i] for i in idx])
    g0 = np.maximum(np.array(widths0), step)

    def resid(x):
        d, g = x[:len(idx)], x[len(idx):]
        return 1.0 - lorentzian_dips(f, positions, d, g) - t

    fit = least_squares(resid, np.concatenate([d0, g0]),
                        bounds=(np.concatenate([np.zeros_like(d0), np.full_like(g0, step * 1e-3)]),
                                np.inf), x_scale="jac")
    depths, widths = fit.x[:len(idx)], fit.x[len(idx):]

    if nu_d is None:
        nu_d = trace.meta.get("nu_d_mhz")
        nu_d = float(nu_d) if nu_d is not None else None
    labels = (1, 2, 3, 4) if expected_count == 4 else (1, 4)
    return DipSet(positions, depths, widths, labels, nu_d)


# -- magnetic-field axis --------------------------------------------------------------

def field_to_nu_m(field_mt, b0_mt: float, nu_ref: float) -> np.ndarray | float:
    """Linear Kittel dispersion nu_m = 28 MHz/mT * (B - B0) + nu_ref."""
    return GYROMAGNETIC_MHZ_PER_MT * (np.asarray(field_mt, dtype=float) - b0_mt) + nu_ref


def calibrate_b0(field_at_resonance_mt: float) -> float:
    """B0 is simply the field at which the Kittel mode meets ``nu_ref``."""
    return float(field_at_resonance_mt)


# -- power maps ---------------------------------------------------------------------------

def power_map(system: SystemParams, drive: DriveSpec, powers_dbm: Iterable[float], freq=None, *,
              source: str = "meanfield", A: float = 1.0, N: int = 0, n_max: int = 20,
              gamma: float = DEFAULT_GAMMA, depth: float = DEFAULT_DEPTH,
              excitation: str = "sigma_x", half_span: float | None = None,
              step: float | None = None, omega_d: float | None = None,
              workers: int | None = None) -> list[SpectrumTrace]:
    """One trace per drive power, from the mean-field or the exact resonant model.

    ``omega_d`` forces the Rabi rate (MHz) for every trace instead of k sqrt(P).

    ``freq`` fixes a common grid; otherwise each trace gets a grid symmetric
    about ``drive.nu_d`` (``half_span``/``step`` or sensible defaults).
    """
    if source not in ("meanfield", "exact"):
        raise ValueError(f"source must be 'meanfield' or 'exact', got {source!r}")
    powers = [float(p) for p in powers_dbm]
    if not all(math.isfinite(p) for p in powers):
        raise ValueError("drive powers must be finite")
    g_qm = resolve_g_qm(system)
    step = gamma / 10.0 if step is None else step

    def one(p: float) -> SpectrumTrace:
        d = DriveSpec(drive.nu_d, p, drive.k, drive.attenuation_db, drive.power_plane)
        om = rabi_rate(d) if omega_d is None else float(omega_d)
        meta = {"power_dbm": p, "nu_d_mhz": d.nu_d, "omega_d_mhz": om, "g_qm_mhz": g_qm,
                "k": d.k, "power_plane": d.power_plane, "gamma_mhz": gamma, "depth": depth}
        pred = splittings(MeanFieldParams(g_qm, om, A, N))
        if source == "meanfield":
            lines = meanfield_lines(pred, d.nu_d)
            meta.update({"A": A, "N": N})
        else:
            h = h_rotating(system.with_(g_qm=g_qm), d, SpaceSpec(n_max), omega_d=om)
            lines = exact_lines(h, d.nu_d, excitation=excitation)
            meta.update({"n_max": n_max, "excitation": excitation, "reference": "vacuum"})
        if freq is not None:
            grid = np.asarray(freq, dtype=float)
        else:
            hs = half_span
            if hs is None:
                hs = max(np.max(np.abs(lines.centers - d.nu_d)), pred.lambda_plus) + 15.0 * gamma
            grid = symmetric_grid(d.nu_d, hs, step)
        return synth_trace(lines, grid, gamma=gamma, depth=depth, meta=meta)

    n = worker_count(workers)
    if n > 1:
        with ThreadPoolExecutor(n) as pool:
            return list(pool.map(one, powers))
    return [one(p) for p in powers]


# -- CSV ------------------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return FLOAT_FMT.format(v)
    return str(v)


def trace_header(trace: SpectrumTrace) -> str:
    meta = dict(trace.meta)
    keys = ["model", "power_dbm"] + [k for k in meta if k not in ("model", "power_dbm")]
    parts = [f"{k}={_fmt(meta[k])}" for k in keys if k in meta]
    if trace.unit != "linear":
        parts.append(f"unit={trace.unit}")
    return "# " + " ".join(parts)


def write_trace_csv(trace: SpectrumTrace, path: str | Path) -> Path:
    path = Path(path)
    lines = [trace_header(trace), "freq_mhz,transmission"]
    lines += [f"{_fmt(float(x))},{_fmt(float(y))}" for x, y in zip(trace.freq, trace.transmission)]
    path.write_text("\n".join(lines) + "\n")
    return path


def _parse_value(s: str):
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    return s


def read_trace_csv(path: str | Path) -> SpectrumTrace:
    meta, rows, unit = {}, [], "linear"
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        k, v = tok.split("=", 1)
                        meta[k] = _parse_value(v)
                continue
            if line.startswith("freq_mhz"):
                continue
            try:
                x, y = line.split(",")
                rows.append((float(x), float(y)))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed trace row {line!r}") from exc
    unit = meta.pop("unit", unit)
    arr = np.array(rows, dtype=float).reshape(-1, 2)
    return SpectrumTrace(arr[:, 0], arr[:, 1], meta, unit)


def write_power_map(traces: Sequence[SpectrumTrace], outdir: str | Path,
                    index_name: str = "index.csv") -> Path:
    """One CSV per trace plus an index ``power_dbm,model,file``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    index = ["power_dbm,model,file"]
    for tr in traces:
        model = tr.meta.get("model", "trace")
        p = float(tr.meta.get("power_dbm", 0.0))
        name = f"{model}_p{_fmt(p).replace('-', 'm').replace('.', 'p')}dbm.csv"
        write_trace_csv(tr, outdir / name)
        index.append(f"{_fmt(p)},{model},{name}")
    idx = outdir / index_name
    idx.write_text("\n".join(index) + "\n")
    return idx
