from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dressmag import spectral
from dressmag.hilbert import HermiticityError, SpaceSpec
from dressmag.models import SystemParams, h_effective, h_resonant, h_three_mode
from dressmag.spectral import (
    ConvergenceError,
    LevelWindow,
    SweepWindowError,
    TruncationWarning,
    anticrossing_sweep,
    chiral_defect,
    convergence_check,
    eig,
    eigvals,
)

G = 20.1


def jacobi_eigvals(a: np.ndarray, sweeps: int = 100, tol: float = 1e-14) -> np.ndarray:
    """Cyclic Jacobi rotations on a real symmetric matrix; slow but independent of LAPACK's eigh."""
    a = np.array(a, dtype=float)
    n = len(a)
    for _ in range(sweeps):
        off = math.sqrt(np.sum(a ** 2) - np.sum(np.diag(a) ** 2))
        if off < tol * max(1.0, np.abs(a).max()):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p], a[:, q] = c * ap - s * aq, s * ap + c * aq
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :], a[q, :] = c * rp - s * rq, s * rp + c * rq
    return np.sort(np.diag(a))


def complex_oracle(h: np.ndarray) -> np.ndarray:
    """Eigenvalues of Hermitian A + iB from the real symmetric [[A, -B], [B, A]] (each one doubled)."""
    a, b = h.real, h.imag
    big = np.block([[a, -b], [b, a]])
    return jacobi_eigvals(big)[::2]


def test_diag_sorted():
    es = eig(np.diag([3.0, 1.0, 2.0]))
    assert np.array_equal(es.values, [1, 2, 3])
    assert es.residual < 1e-14 and es.orthonormality_defect < 1e-14


def test_random_hermitian_against_jacobi_oracle():
    rng = np.random.default_rng(30)
    m = rng.normal(size=(30, 30)) + 1j * rng.normal(size=(30, 30))
    h = 0.5 * (m + m.conj().T)
    oracle = complex_oracle(h)
    es = eig(h)
    assert np.max(np.abs(es.values - oracle)) < 1e-8
    assert es.residual <= 1e-8 * (np.abs(es.values).max() + 1)
    assert es.orthonormality_defect <= 1e-8


def test_non_hermitian_rejected():
    with pytest.raises(HermiticityError):
        eig(np.array([[0, 1], [0, 0]], dtype=complex))


def test_jc_ladder_eig():
    v = eigvals(h_resonant(G, 0.0, SpaceSpec(4)))
    expected = sorted([0.0, 0.0] + [s * G * math.sqrt(n) for n in (1, 2, 3, 4) for s in (1, -1)])
    assert np.allclose(v, expected, atol=1e-10)


@settings(max_examples=30)
@given(st.integers(1, 8), st.floats(0, 60), st.floats(0, 300))
def test_trace_equals_eigensum(n, g, om):
    h = h_resonant(g, om, SpaceSpec(n))
    v = eigvals(h)
    scale = max(np.abs(h.matrix).max(), 1e-300)
    assert abs(np.trace(h.matrix).real - v.sum()) <= 1e-8 * h.dim * scale


def test_degenerate_projectors():
    # Omega_d = 0, g = 0 makes every level (N_max+1)-fold degenerate
    h = h_resonant(0.0, 10.0, SpaceSpec(4))
    es = eig(h)
    top = es.vectors[:, es.values > 0]
    proj = top @ top.conj().T
    sx = (h.matrix / 5.0)
    assert np.allclose(proj, 0.5 * (np.eye(h.dim) + sx), atol=1e-12)
    assert es.orthonormality_defect < 1e-12


def test_sweep_two_oscillator():
    p = SystemParams(nu_q=6490, nu_c=6990, g_q=0, g_m=43)
    space = SpaceSpec(1, 1)
    axis = np.linspace(6890, 7090, 201)
    res = anticrossing_sweep(lambda x: h_three_mode(p.with_(nu_m=x), space), axis,
                             LevelWindow(6790, 7190))
    assert res.levels.shape == (201, 2)
    assert res.min_splitting == pytest.approx(86.0, abs=max(res.error_bound, 1e-9))
    assert res.min_location == pytest.approx(6990, abs=1.0)
    assert res.min_splitting <= res.sampled_min == res.gaps.min()


def test_sweep_effective_off_grid_refinement():
    p = SystemParams(nu_q=6490, g_qm=G)
    axis = np.linspace(6390.3, 6590.3, 41)   # 5 MHz steps, resonance between samples
    res = anticrossing_sweep(lambda x: h_effective(p.with_(nu_m=x), SpaceSpec(1)), axis,
                             LevelWindow(6290, 6690))
    assert res.sampled_min > 40.2
    assert abs(res.min_splitting - 40.2) <= res.error_bound
    assert abs(res.min_splitting - 40.2) < 0.05


def test_sweep_zero_coupling_crossing():
    p = SystemParams(nu_q=6490, g_qm=0.0)
    axis = np.linspace(6480, 6500, 21)
    res = anticrossing_sweep(lambda x: h_effective(p.with_(nu_m=x), SpaceSpec(1)), axis,
                             LevelWindow(6400, 6600))
    assert res.min_splitting == pytest.approx(0.0, abs=1e-9)
    assert res.min_location == pytest.approx(6490, abs=0.5)


def test_sweep_window_error_reports_sample():
    p = SystemParams(nu_q=6490, g_qm=G)
    axis = np.linspace(6400, 6800, 5)
    with pytest.raises(SweepWindowError) as info:
        anticrossing_sweep(lambda x: h_effective(p.with_(nu_m=x), SpaceSpec(1)), axis,
                           LevelWindow(6300, 6600))
    assert info.value.sample > 0


def test_sweep_parallel_matches_serial(monkeypatch):
    p = SystemParams(nu_q=6490, g_qm=G)
    axis = np.linspace(6440, 6540, 51)
    build = lambda x: h_effective(p.with_(nu_m=x), SpaceSpec(2))
    a = anticrossing_sweep(build, axis, LevelWindow(6340, 6640), workers=1)
    monkeypatch.setenv("DM_THREADS", "4")
    b = anticrossing_sweep(build, axis, LevelWindow(6340, 6640))
    assert np.array_equal(a.levels, b.levels)
    assert a.min_splitting == b.min_splitting


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("DM_THREADS", "3")
    assert spectral.worker_count() == 3
    assert spectral.worker_count(2) == 2
    monkeypatch.delenv("DM_THREADS")
    assert spectral.worker_count() == 1


def test_chiral_defect_cases():
    assert chiral_defect(h_resonant(G, 80.4, SpaceSpec(10))) <= 1e-8
    assert chiral_defect(h_effective(SystemParams(g_qm=G), SpaceSpec(3))) > 1000
    assert chiral_defect(np.zeros((4, 4))) == 0.0


def test_convergence_zero_drive_exact():
    rep = convergence_check(lambda n: h_resonant(G, 0.0, SpaceSpec(n)), 10)
    assert rep.drift == pytest.approx(0.0, abs=1e-12)
    assert rep.passed


def test_convergence_strong_drive_n1_fails_loudly():
    build = lambda n: h_resonant(G, 2 * G, SpaceSpec(n))
    with pytest.warns(TruncationWarning):
        rep = convergence_check(build, 1)
    assert not rep.passed and rep.drift > 1.0
    with pytest.raises(ConvergenceError):
        convergence_check(build, 1, strict=True)


def test_convergence_drive_2g_at_20():
    rep = convergence_check(lambda n: h_resonant(G, 2 * G, SpaceSpec(n)), 20)
    assert rep.passed and rep.n_levels == 8


@pytest.mark.xfail(strict=True, reason="drive displaces the magnon by Omega_d/2g; N_max=10 drifts by "
                   "2.5e-2 MHz, 18 is the first cutoff under 1e-6")
def test_convergence_drive_2g_at_10():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        rep = convergence_check(lambda n: h_resonant(G, 2 * G, SpaceSpec(n)), 10)
    assert rep.passed


def test_eigen_solver_rejects_non_finite():
    h = np.array([[1.0, 0.0], [0.0, np.nan]])
    with pytest.raises(spectral.EigenSolverError):
        eig(h)
