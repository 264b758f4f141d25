"""One-shot invariant suite behind ``dressmag validate``.

Checks call through module attributes (``mf.splittings`` etc.) so that a
patched implementation is what gets validated.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from . import fitcore as fc
from . import meanfield as mf
from . import models
from . import spectral
from .hilbert import SpaceSpec

SEED = 20190101


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def __post_init__(self):
        object.__setattr__(self, "passed", bool(self.passed))


def check_chiral(draws: int = 200) -> Check:
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(draws):
        g = rng.uniform(0.1, 50.0)
        om = rng.uniform(0.0, 200.0)
        n = int(rng.integers(1, 9))
        worst = max(worst, spectral.chiral_defect(models.h_resonant(g, om, SpaceSpec(n))))
    return Check("chiral_symmetry", worst <= 1e-8, f"max defect {worst:.3e} MHz over {draws} draws")


def check_meanfield_mirror(draws: int = 200) -> Check:
    rng = np.random.default_rng(SEED + 1)
    worst = 0.0
    for _ in range(draws):
        p = mf.MeanFieldParams(rng.uniform(0.1, 50), rng.uniform(0, 500), rng.uniform(0, 2),
                               int(rng.integers(0, 5)))
        s = mf.splittings(p)
        hp, hm = s.hole_lambdas
        offs = s.dip_offsets
        worst = max(worst, abs(hp + s.lambda_plus), abs(hm + s.lambda_minus),
                    abs(offs[0] + offs[3]), abs(offs[1] + offs[2]))
    return Check("meanfield_mirror", worst == 0.0, f"max |lambda + lambda_bar| = {worst:.3e}")


def check_jc_ladder(g: float = models.G_QM_MEASURED, n_max_hi: int = 12) -> Check:
    worst = 0.0
    for n_max in range(1, n_max_hi + 1):
        v = spectral.eigvals(models.h_resonant(g, 0.0, SpaceSpec(n_max)))
        ladder = [0.0, 0.0] + [s * g * math.sqrt(n + 1) for n in range(n_max) for s in (1, -1)]
        worst = max(worst, float(np.max(np.abs(np.sort(v) - np.sort(ladder)))))
    s = mf.splittings(mf.MeanFieldParams(g, 0.0, 1.0, 0))
    zero_drive = max(abs(s.split_outer - 2 * g), abs(s.split_inner - 2 * g))
    ok = worst <= 1e-9 and zero_drive <= 1e-12 * g
    return Check("jc_ladder", ok, f"ladder deviation {worst:.3e} MHz; zero-drive splitting deviation {zero_drive:.3e}")


def check_splitting_identities(draws: int = 500) -> Check:
    rng = np.random.default_rng(SEED + 2)
    worst_diff = worst_prod = 0.0
    for _ in range(draws):
        p = mf.MeanFieldParams(rng.uniform(0.1, 50), rng.uniform(0, 1000), rng.uniform(0, 2),
                               int(rng.integers(0, 6)))
        s = mf.splittings(p)
        worst_diff = max(worst_diff, abs(s.split_outer - s.split_inner - p.omega_d) / max(p.omega_d, 1.0))
        target = -p.g_tilde ** 2 * (p.N + 1)
        lp, lm = mf.lambdas(p)
        if target != 0:
            worst_prod = max(worst_prod, abs(lp * lm - target) / abs(target))
    g = 20.1
    oms = np.linspace(0, 100 * g, 400)
    outs = np.array([mf.splittings(mf.MeanFieldParams(g, o)).split_outer for o in oms])
    ins = np.array([mf.splittings(mf.MeanFieldParams(g, o)).split_inner for o in oms])
    mono = bool(np.all(np.diff(outs) > 0) and np.all(np.diff(ins) < 0))
    far = ins[-1] < 0.02 * 2 * g
    ok = worst_diff <= 1e-12 and worst_prod <= 1e-12 and mono and far
    return Check("splitting_identities", ok,
                 f"outer-inner rel err {worst_diff:.2e}, product rel err {worst_prod:.2e}, "
                 f"monotone={mono}, inner(100 g)={ins[-1]:.4g} MHz")


def check_particle_hole_operators(n_max: int = 6) -> Check:
    p = mf.MeanFieldParams(20.1, 80.4)
    hp, hh = mf.h_particle_hole(p, n_max)
    ep = np.sort(spectral.eigvals(hp))
    eh = np.sort(spectral.eigvals(hh))
    dev = float(np.max(np.abs(eh + ep[::-1])))
    lp, lm = mf.lambdas(p)
    has = bool(np.abs(ep - lp).min() < 1e-9 and np.abs(ep - lm).min() < 1e-9)
    return Check("particle_hole_operators", dev <= 1e-9 and has,
                 f"spec(H_h) + spec(H_p) reversed: {dev:.2e}; lambda_+- in spec(H_p): {has}")


def check_convergence(n_max: int, g: float = models.G_QM_MEASURED, tol: float = 1e-6) -> Check:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", spectral.TruncationWarning)
        rep = spectral.convergence_check(lambda n: models.h_resonant(g, 2 * g, SpaceSpec(n)), n_max,
                                         tol=tol)
    return Check("truncation_convergence", rep.passed, rep.summary() + f" (Omega_d = 2 g = {2 * g:g} MHz)")


def check_fit_roundtrip(k: float = models.K_FIT, g: float = models.G_QM_MEASURED) -> Check:
    data = fc.synthetic_dataset(k, 0, g, [1, 3, 5, 7, 11, 13, 15, 17])
    res = fc.fit_k(data, g, 0)
    rel = abs(res.k - k) / k
    return Check("fit_roundtrip", rel <= 1e-6, f"k = {res.k:.9g} (true {k:g}), rel err {rel:.2e}")


def check_effective_coupling() -> Check:
    p = models.SystemParams(nu_q=models.NU_CAVITY - models.DETUNING, nu_m=models.NU_CAVITY - models.DETUNING)
    g = models.g_effective(p, unchecked=True)
    ok = abs(g - models.G_QM_MEASURED) / models.G_QM_MEASURED <= 0.005
    return Check("effective_coupling", ok, f"g_q g_m / Delta = {g:.4f} MHz vs measured 20.1")


def _guarded(name: str, fn, *args) -> Check:
    # a check that raises has failed; report it rather than abort the suite
    try:
        return fn(*args)
    except Exception as exc:
        return Check(name, False, f"raised {type(exc).__name__}: {exc}")


def run_all(n_max: int = 20) -> list[Check]:
    return [
        _guarded("chiral_symmetry", check_chiral),
        _guarded("meanfield_mirror", check_meanfield_mirror),
        _guarded("jc_ladder", check_jc_ladder),
        _guarded("splitting_identities", check_splitting_identities),
        _guarded("particle_hole_operators", check_particle_hole_operators),
        _guarded("truncation_convergence", check_convergence, n_max),
        _guarded("fit_roundtrip", check_fit_roundtrip),
        _guarded("effective_coupling", check_effective_coupling),
    ]


def summary(checks: list[Check]) -> dict:
    return {"passed": all(c.passed for c in checks), "checks": [asdict(c) for c in checks]}
