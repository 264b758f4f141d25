"""Dense Hermitian diagonalisation and level-structure diagnostics."""

from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .hilbert import HermiticityError, Operator, check_hermitian

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-8
ORTHO_TOL = 1e-8
DEGENERACY_RTOL = 1e-9
CONVERGENCE_TOL = 1e-6


class EigenSolverError(RuntimeError):
    pass


class SweepWindowError(ValueError):
    def __init__(self, sample: int, count: int, axis_value: float):
        self.sample, self.count, self.axis_value = sample, count, axis_value
        super().__init__(
            f"sample {sample} (axis={axis_value:g}): tracking window holds {count} levels, expected 2"
        )


class TruncationWarning(UserWarning):
    pass


class ConvergenceError(RuntimeError):
    pass


def worker_count(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    try:
        return max(1, int(os.environ.get("DM_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class EigenSystem:
    values: np.ndarray
    vectors: np.ndarray
    residual: float
    orthonormality_defect: float

    def __len__(self):
        return len(self.values)


def _orthonormalize_clusters(values: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    scale = max(float(np.max(np.abs(values), initial=0.0)), 1.0)
    gap_tol = DEGENERACY_RTOL * scale
    out = vectors.copy()
    start = 0
    n = len(values)
    for i in range(1, n + 1):
        if i == n or values[i] - values[i - 1] >= gap_tol:
            if i - start > 1:
                q, _ = np.linalg.qr(out[:, start:i])
                out[:, start:i] = q
            start = i
    return out


def eig(h: Operator | np.ndarray) -> EigenSystem:
    """Ascending eigenvalues and orthonormal eigenvectors of a Hermitian matrix.

    LAPACK ``heevd`` via :func:`numpy.linalg.eigh`; vectors inside numerically
    degenerate clusters are re-orthonormalised. The result is checked against
    its own residual and orthonormality bounds before being returned.
    """
    if isinstance(h, Operator):
        check_hermitian(h)
        m = h.matrix
    else:
        m = np.asarray(h, dtype=complex)
        scale = float(np.max(np.abs(m), initial=0.0))
        if np.max(np.abs(m - m.conj().T), initial=0.0) > 1e-12 * scale:
            raise HermiticityError("eig() needs a Hermitian matrix")
    if not np.all(np.isfinite(m)):
        raise EigenSolverError(f"non-finite entries in {m.shape} matrix")
    try:
        values, vectors = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(f"eigensolver did not converge on {m.shape} matrix: {exc}") from exc
    vectors = _orthonormalize_clusters(values, vectors)

    dim = len(values)
    if dim:
        res = float(np.max(np.linalg.norm(m @ vectors - vectors * values, axis=0)))
        ortho = float(np.max(np.abs(vectors.conj().T @ vectors - np.eye(dim))))
    else:
        res = ortho = 0.0
    bound = RESIDUAL_TOL * (float(np.max(np.abs(values), initial=0.0)) + 1.0)
    if res > bound or ortho > ORTHO_TOL:
        raise EigenSolverError(
            f"eigensolver self-check failed: residual={res:.3e} (bound {bound:.3e}), "
            f"orthonormality defect={ortho:.3e}"
        )
    values.setflags(write=False)
    vectors.setflags(write=False)
    return EigenSystem(values, vectors, res, ortho)


def eigvals(h: Operator | np.ndarray) -> np.ndarray:
    return eig(h).values


# -- anticrossings --------------------------------------------------------------

@dataclass(frozen=True)
class LevelWindow:
    """Select the two levels whose energy lies in ``[lo, hi]`` (MHz).

    With ``relative_to_ground`` the window applies to E - E_0, i.e. to
    transition frequencies out of the lowest state.
    """

    lo: float
    hi: float
    relative_to_ground: bool = True

    def select(self, values: np.ndarray) -> np.ndarray:
        e = values - values[0] if self.relative_to_ground else values
        return values[(e >= self.lo) & (e <= self.hi)] - (values[0] if self.relative_to_ground else 0.0)


@dataclass(frozen=True)
class SweepResult:
    axis: np.ndarray
    levels: np.ndarray          # (samples, 2)
    gaps: np.ndarray
    min_splitting: float
    min_location: float
    sampled_min: float
    error_bound: float          # |second difference| of the gap at the bracketing triple


def _parabola_vertex(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    (x0, x1, x2), (y0, y1, y2) = x, y
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom
    c = (x1 * x2 * (x1 - x2) * y0 + x2 * x0 * (x2 - x0) * y1 + x0 * x1 * (x0 - x1) * y2) / denom
    if a <= 0:
        return float(x1), float(y1)
    xv = -b / (2 * a)
    return float(xv), float(c - b * b / (4 * a))


def anticrossing_sweep(builder: Callable[[float], Operator], axis: Sequence[float],
                       window: LevelWindow, *, workers: int | None = None) -> SweepResult:
    """Track the gap between the two levels inside ``window`` across ``axis``.

    The minimum is refined with a parabola through the three samples around
    the smallest sampled gap; the refined value is clipped into
    ``[0, sampled minimum]`` and its location into the bracket.
    """
    axis = np.asarray(axis, dtype=float)
    if axis.ndim != 1 or len(axis) < 3:
        raise ValueError("anticrossing_sweep needs at least 3 axis samples")

    def one(i: int) -> np.ndarray:
        sel = window.select(eigvals(builder(float(axis[i]))))
        if len(sel) != 2:
            raise SweepWindowError(i, len(sel), float(axis[i]))
        return sel

    n_workers = worker_count(workers)
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            levels = np.array(list(pool.map(one, range(len(axis)))))
    else:
        levels = np.array([one(i) for i in range(len(axis))])
    gaps = levels[:, 1] - levels[:, 0]

    i = int(np.argmin(gaps))
    sampled = float(gaps[i])
    if 0 < i < len(axis) - 1:
        xs, ys = axis[i - 1:i + 2], gaps[i - 1:i + 2]
        xv, yv = _parabola_vertex(xs, ys)
        loc = float(np.clip(xv, min(xs[0], xs[2]), max(xs[0], xs[2])))
        refined = float(np.clip(yv, 0.0, sampled))
        bound = float(abs(ys[0] - 2 * ys[1] + ys[2]))
    else:
        log.warning("gap minimum at sweep edge (sample %d); no refinement", i)
        loc, refined, bound = float(axis[i]), sampled, float("inf")
    return SweepResult(axis, levels, gaps, refined, loc, sampled, bound)


# -- symmetry and truncation ------------------------------------------------------

def chiral_defect(h: Operator | np.ndarray) -> float:
    """max_i |lambda_i + lambda_{D-1-i}| over the sorted spectrum (0 for a spectrum symmetric about 0)."""
    v = eigvals(h)
    if len(v) == 0:
        return 0.0
    return float(np.max(np.abs(v + v[::-1])))


@dataclass(frozen=True)
class ConvergenceReport:
    n_max: int
    n_levels: int
    levels: np.ndarray
    levels_doubled: np.ndarray
    drift: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.drift <= self.tolerance

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict}: lowest {self.n_levels} |E| drift {self.drift:.3e} MHz between "
                f"N_max={self.n_max} and {2 * self.n_max} (tol {self.tolerance:g})")


def convergence_check(builder: Callable[[int], Operator], n_max: int, *, n_levels: int = 8,
                      tol: float = CONVERGENCE_TOL, strict: bool = False) -> ConvergenceReport:
    """Compare the ``n_levels`` smallest |eigenvalues| at ``n_max`` and ``2 n_max``.

    ``builder`` maps a magnon cutoff to a Hamiltonian. A failed check always
    emits a :class:`TruncationWarning`; with ``strict`` it raises instead.
    """
    a = np.sort(np.abs(eigvals(builder(n_max))))
    b = np.sort(np.abs(eigvals(builder(2 * n_max))))
    k = min(n_levels, len(a), len(b))
    a, b = a[:k], b[:k]
    report = ConvergenceReport(n_max, k, a, b, float(np.max(np.abs(a - b), initial=0.0)), tol)
    if not report.passed:
        msg = "truncation not converged: " + report.summary()
        if strict:
            raise ConvergenceError(msg)
        warnings.warn(msg, TruncationWarning, stacklevel=2)
    return report
