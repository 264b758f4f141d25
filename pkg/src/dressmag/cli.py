"""Command-line front end.

    dressmag anticrossing --config fig2b --out run/
    dressmag powermap     --config fig3  --out run/
    dressmag fit data.csv --config fig4  --out run/ [--scan-n 0..3]
    dressmag validate     [--config ...] [--out run/]
    dressmag eigs         --config fig3  --out run/ [--model meanfield]

Exit status: 0 success, 1 a physics check failed, 2 bad input.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from . import fitcore as fc
from . import meanfield as mf
from . import models
from . import spectral
from . import spectroscopy as sp
from . import validate as vd
from .hilbert import SpaceError, SpaceSpec

log = logging.getLogger("dressmag")

EXIT_OK, EXIT_PHYSICS, EXIT_INPUT = 0, 1, 2


class InputError(ValueError):
    pass


def _f(x) -> str:
    return f"{float(x):.12g}"


def _r12(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return float(f"{x:.12g}") if math.isfinite(x) else str(x)
    if isinstance(x, dict):
        return {k: _r12(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_r12(v) for v in x]
    return x


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(_r12(doc), indent=2) + "\n")


def _write_rows(path: Path, header: list[str], rows) -> None:
    out = [",".join(header)]
    for r in rows:
        out.append(",".join(_f(v) if isinstance(v, (float, np.floating)) else str(v) for v in r))
    path.write_text("\n".join(out) + "\n")


def _prepare(args) -> tuple[cfgmod.RunConfig, Path | None]:
    cfg = cfgmod.load(args.config)
    if getattr(args, "model", None):
        cfg.model = args.model
    out = Path(args.out) if args.out else None
    if out is not None:
        cfgmod.echo(cfg, out)
    return cfg, out


# -- anticrossing -------------------------------------------------------------------------

def _sweep_builder(cfg: cfgmod.RunConfig):
    p = cfg.system.params()
    sw, nm = cfg.sweep, cfg.numerics
    ref = p.nu_c if sw.pair == "cavity_magnon" else p.nu_q
    if sw.axis == "field_mt":
        if sw.b0_mt is None:
            raise InputError("sweep.b0_mt is required for a field_mt sweep")
        to_nu = lambda x: float(sp.field_to_nu_m(x, sw.b0_mt, ref))
    else:
        to_nu = float
    if cfg.model == "threemode":
        space = SpaceSpec(nm.n_max, nm.cavity_cutoff)
        build = lambda x: models.h_three_mode(p.with_(nu_m=to_nu(x)), space)
    elif cfg.model == "exact":
        if sw.pair == "cavity_magnon":
            raise InputError("the cavity_magnon pair needs model 'threemode'")
        space = SpaceSpec(nm.n_max)
        build = lambda x: models.h_effective(p.with_(nu_m=to_nu(x)), space)
    else:
        raise InputError("anticrossing needs model 'exact' or 'threemode'")
    lo = sw.window_lo_mhz if sw.window_lo_mhz is not None else ref - 200.0
    hi = sw.window_hi_mhz if sw.window_hi_mhz is not None else ref + 200.0
    return build, to_nu, spectral.LevelWindow(lo, hi)


def cmd_anticrossing(args) -> int:
    cfg, out = _prepare(args)
    build, to_nu, window = _sweep_builder(cfg)
    axis = np.linspace(cfg.sweep.start, cfg.sweep.stop, cfg.sweep.num)
    res = spectral.anticrossing_sweep(build, axis, window)
    summary = {
        "model": cfg.model,
        "pair": cfg.sweep.pair,
        "axis": cfg.sweep.axis,
        "min_splitting_mhz": res.min_splitting,
        "min_location": res.min_location,
        "min_location_nu_m_mhz": to_nu(res.min_location),
        "sampled_min_mhz": res.sampled_min,
        "error_bound_mhz": res.error_bound,
    }
    if out is not None:
        rows = [(float(x), to_nu(x), float(l[0]), float(l[1]), float(g))
                for x, l, g in zip(res.axis, res.levels, res.gaps)]
        _write_rows(out / "anticrossing.csv",
                    [cfg.sweep.axis, "nu_m_mhz", "level_lo_mhz", "level_hi_mhz", "gap_mhz"], rows)
        _write_json(out / "summary.json", summary)
    print(f"min splitting {_f(res.min_splitting)} MHz at {cfg.sweep.axis}={_f(res.min_location)} "
          f"(sampled {_f(res.sampled_min)}, bound {_f(res.error_bound)})")
    return EXIT_OK


# -- powermap -----------------------------------------------------------------------------

def cmd_powermap(args) -> int:
    cfg, out = _prepare(args)
    if out is None:
        raise InputError("powermap needs --out")
    if args.model in ("exact", "meanfield"):
        sources = [args.model]
    elif args.model == "threemode":
        raise InputError("powermap sources are 'exact' and 'meanfield'")
    else:
        sources = list(cfg.powermap.sources)
    p = cfg.system.params()
    drive = cfg.drive.spec(p.nu_q)
    sc = cfg.spectrum
    traces = []
    for src in sources:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", spectral.TruncationWarning)
            traces += sp.power_map(p, drive, cfg.powermap.powers_dbm, source=src,
                                   A=cfg.meanfield.A, N=cfg.meanfield.n_magnons,
                                   n_max=cfg.numerics.n_max, gamma=sc.gamma_mhz, depth=sc.depth,
                                   excitation=sc.excitation, half_span=sc.half_span_mhz,
                                   step=sc.step_mhz, omega_d=cfg.drive.omega_d_mhz)
    sp.write_power_map(traces, out / "traces")

    dip_rows, split_rows = [], {s: [] for s in sources}
    for tr in traces:
        src, pw, om = tr.meta["model"], float(tr.meta["power_dbm"]), float(tr.meta["omega_d_mhz"])
        expected = 2 if om == 0 else 4
        try:
            ds = sp.extract_dips(tr, min_prominence=sc.min_prominence, expected_count=expected)
        except sp.DipExtractionError as exc:
            dip_rows.append([src, pw, om, "fail", len(exc.candidates)] + [""] * 6)
            print(f"{src} {_f(pw)} dBm: {exc}")
            continue
        pos = [float(x) for x in ds.positions] + [""] * (4 - len(ds.positions))
        dip_rows.append([src, pw, om, "ok", len(ds.positions)] + pos + [ds.outer_split, ds.inner_split])
        split_rows[src].append([pw, ds.outer_split, ds.inner_split])
        print(f"{src} {_f(pw)} dBm: {len(ds.positions)} dips, outer {_f(ds.outer_split)} MHz, "
              f"inner {_f(ds.inner_split)} MHz")
    _write_rows(out / "dips.csv",
                ["source", "power_dbm", "omega_d_mhz", "status", "n_dips",
                 "dip1_mhz", "dip2_mhz", "dip3_mhz", "dip4_mhz", "outer_mhz", "inner_mhz"], dip_rows)
    for src, rows in split_rows.items():
        _write_rows(out / f"splittings_{src}.csv", ["power_dbm", "outer_mhz", "inner_mhz"], rows)
    return EXIT_OK


# -- fit ------------------------------------------------------------------------------------

def _parse_scan(text: str) -> tuple[int, int]:
    try:
        lo, hi = text.split("..")
        lo, hi = int(lo), int(hi)
    except ValueError:
        raise InputError(f"--scan-n expects LO..HI, got {text!r}") from None
    if lo < 0 or hi < lo:
        raise InputError(f"--scan-n: need 0 <= LO <= HI, got {text!r}")
    return lo, hi


def cmd_fit(args) -> int:
    cfg, out = _prepare(args)
    data = fc.read_dataset_csv(args.data)
    g = models.resolve_g_qm(cfg.system.params())
    if args.scan_n:
        N = _parse_scan(args.scan_n)
    elif cfg.fit.n_scan is not None:
        N = (int(cfg.fit.n_scan[0]), int(cfg.fit.n_scan[1]))
    else:
        N = cfg.fit.n_magnons
    for flag in data.sanity_flags():
        print(f"warning: {flag}")
    res = fc.fit_k(data, g, N)
    rep = fc.residual_report(data, res, g)
    if out is not None:
        (out / "fit.json").write_text(res.to_json())
        _write_rows(out / "residuals.csv", ["power_mw", "outer_residual_mhz", "inner_residual_mhz"],
                    rep.rows())
    print(f"k = {_f(res.k)} +- {_f(res.k_stderr)} MHz/mW^1/2, N = {res.N}, "
          f"rms residual {_f(res.residual_rms)} MHz")
    if rep.strong_drive_signature:
        print("strong-drive residual signature: model outer below data, inner above data")
    return EXIT_OK


# -- validate -------------------------------------------------------------------------------

def cmd_validate(args) -> int:
    cfg, out = _prepare(args)
    checks = vd.run_all(cfg.numerics.n_max)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
    doc = vd.summary(checks)
    if out is not None:
        _write_json(out / "validate.json", doc)
    else:
        print(json.dumps(_r12(doc), indent=2))
    return EXIT_OK if doc["passed"] else EXIT_PHYSICS


# -- eigs -----------------------------------------------------------------------------------

def cmd_eigs(args) -> int:
    cfg, out = _prepare(args)
    p = cfg.system.params()
    n_max = cfg.numerics.n_max
    status = EXIT_OK
    rows: list[list] = []
    drive = cfg.drive.spec(p.nu_q)
    om = models.rabi_rate(drive) if cfg.drive.omega_d_mhz is None else cfg.drive.omega_d_mhz
    extra: dict = {"model": cfg.model, "n_max": n_max, "omega_d_mhz": om}
    if cfg.model == "meanfield":
        prm = mf.MeanFieldParams(models.resolve_g_qm(p), om, cfg.meanfield.A, cfg.meanfield.n_magnons)
        hp, hh = mf.h_particle_hole(prm, n_max)
        for branch, h in (("particle", hp), ("hole", hh)):
            rows += [[branch, i, float(v)] for i, v in enumerate(spectral.eigvals(h))]
        s = mf.splittings(prm)
        extra.update(lambda_plus_mhz=s.lambda_plus, lambda_minus_mhz=s.lambda_minus)
        header = ["branch", "index", "eigenvalue_mhz"]
    else:
        if cfg.model == "threemode":
            h = models.h_three_mode(p, SpaceSpec(n_max, cfg.numerics.cavity_cutoff))
            rep = None
        else:
            build = lambda n: models.h_rotating(p, drive, SpaceSpec(n), omega_d=om)
            h = build(n_max)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", spectral.TruncationWarning)
                rep = spectral.convergence_check(build, n_max, n_levels=cfg.numerics.n_levels,
                                                 tol=cfg.numerics.convergence_tol_mhz)
            extra["chiral_defect_mhz"] = spectral.chiral_defect(h)
        rows = [["all", i, float(v)] for i, v in enumerate(spectral.eigvals(h))]
        header = ["branch", "index", "eigenvalue_mhz"]
        if rep is not None:
            extra.update(convergence_passed=rep.passed, convergence_drift_mhz=rep.drift)
            print(rep.summary())
            if not rep.passed:
                status = EXIT_PHYSICS
    if out is not None:
        _write_rows(out / "eigs.csv", header, rows)
        _write_json(out / "eigs_summary.json", extra)
    else:
        for r in rows:
            print(",".join(_f(v) if isinstance(v, float) else str(v) for v in r))
    return status


# -- entry point ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dressmag", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"dressmag {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help=f"bundled name ({', '.join(cfgmod.BUNDLED)}) or YAML path")
        p.add_argument("--out", help="output directory")
        p.add_argument("--model", choices=cfgmod.MODELS, help="override the config's model")

    common(sub.add_parser("anticrossing", help="minimum splitting along a frequency or field sweep"))
    common(sub.add_parser("powermap", help="synthetic transmission traces versus drive power"))
    f = sub.add_parser("fit", help="fit k to measured splittings")
    f.add_argument("data", help="CSV with power_dbm|power_mw,outer_mhz,inner_mhz[,sigma_mhz]")
    f.add_argument("--scan-n", help="scan the magnon number N over LO..HI")
    common(f)
    common(sub.add_parser("validate", help="run the invariant suite"))
    common(sub.add_parser("eigs", help="eigenvalues of the configured Hamiltonian"))
    return ap


COMMANDS = {
    "anticrossing": cmd_anticrossing,
    "powermap": cmd_powermap,
    "fit": cmd_fit,
    "validate": cmd_validate,
    "eigs": cmd_eigs,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (cfgmod.ConfigError, fc.DatasetError, InputError, SpaceError, FileNotFoundError,
            models.DispersiveValidityError, models.SingularDetuningError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (fc.FitError, spectral.SweepWindowError, spectral.ConvergenceError,
            spectral.EigenSolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS


if __name__ == "__main__":
    sys.exit(main())
