"""Command line front end: ``specgap <experiment> --config <file> [--out DIR] [--jobs N]``.

Exit codes: 0 success, 2 invalid configuration, 3 solver or numerical failure.
Every run writes ``manifest.json`` (config hash, versions, per-job wall times
and status) next to the result files.  Result files are byte-deterministic
for a given configuration and version; only the manifest carries timings.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import platform
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import scipy

from . import __version__
from . import config as C
from .errors import ConfigError, SpecgapError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


# ----------------------------------------------------------------------------
# output helpers


def _r(x):
    """Canonical text for a float in CSV/JSON output."""
    return repr(float(x))


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_r(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, data):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(data), fh, indent=1, sort_keys=True)
        fh.write("\n")


def emit_plot_data(report, path):
    """Tidy CSV for one figure kind; returns the written path.

    ``report`` may be a list of ``(h, residual)`` pairs (residual sweep), a
    :class:`BandFunctionTable`, a list of :class:`GapReport` (gap diagram) or
    a :class:`LocalizationReport`.
    """
    from .eigensolve import BandFunctionTable
    from .gaps import GapReport, LocalizationReport

    if isinstance(report, BandFunctionTable):
        rows = [[b] + list(report.mu[:, i]) for i, b in enumerate(report.b_samples)]
        write_csv(path, ["b"] + [f"mu{j + 1}" for j in range(report.J)], rows)
    elif isinstance(report, LocalizationReport):
        rows = [[r.h, 1 / r.h, r.distance, math.log(r.distance) if r.distance > 0 else "", r.floor,
                 int(r.floor_limited)] for r in report.rows]
        write_csv(path, ["h", "inv_h", "distance", "log_distance", "floor", "floor_limited"], rows)
    elif isinstance(report, (list, tuple)) and (not report or isinstance(report[0], GapReport)):
        rows = []
        for rep in report:
            for g in rep.gaps:
                rows.append([rep.h, g.lo, g.hi, g.length, int(g.interior)])
        write_csv(path, ["h", "lo", "hi", "length", "interior"], rows)
    else:
        rows = [[h, r, math.log(h), math.log(r)] for h, r in report]
        write_csv(path, ["h", "residual", "log_h", "log_residual"], rows)
    return path


# ----------------------------------------------------------------------------
# jobs (top-level so they can run in worker processes)


def _field(sections):
    from .fields import make_field

    params = {k: v for k, v in sections["field"].items() if k != "family"}
    return make_field(sections["field"]["family"], **params)


def _job_quasimode(sections, h):
    from .experiments import quasimode_sweep
    from .gaps import certify_eigenvalue

    q = sections["quasimode"]
    fs = _field(sections)
    kw = dict(cut=(q["r1"], q["r2"]), clip_tol=q["clip_tol"], j=q["j"], per_unit=sections["grid"]["per_unit"],
              factor=sections["grid"]["spacing_factor"], exponent=sections["grid"]["spacing_exponent"])
    if q["recipe"] == "point_gaussian":
        kw["target_mu"] = q["target_mu"]
    if q["recipe"] == "cylinder":
        kw["window"] = (q["b_lo"], q["b_hi"])
    (qm,) = quasimode_sweep(q["recipe"], fs, [h], **kw)
    ci = certify_eigenvalue(qm.operator, qm)
    return dict(h=h, mu=qm.mu, residual=qm.residual, nearest=ci.nearest, certified=ci.verified,
                params={k: v for k, v in qm.params.items()})


def _job_supercell(sections, h):
    from .experiments import supercell_spectrum

    fs = _field(sections)
    g = sections["gaps"]
    b0 = 0.0 if fs.kind.name != "Constant2D" else float(fs(0.0, 0.0))
    s = supercell_spectrum(fs, h, h * (b0 + g["eps0"]), sections["grid"]["cells"], sections["grid"]["per_unit"])
    return dict(h=h, eigenvalues=s.eigenvalues, residuals=s.solver_residuals, threshold=h * (b0 + g["eps0"]))


def _reference(sections):
    from .fields import model_field
    from .models import reference_spectrum

    fs = _field(sections)
    lam, err = reference_spectrum(model_field(fs), m=sections["gaps"]["m_ref"])
    return fs, lam


def _job_gaps(sections, h):
    from .experiments import supercell_spectrum
    from .gaps import eigenvalues_in, locate_gaps, predict_gap_windows

    fs, lam = _reference(sections)
    k = fs.k
    e = (2 * k + 2) / (k + 2)
    top = 0.5 * (lam[2] + lam[3]) * h**e
    s = supercell_spectrum(fs, h, top, sections["grid"]["cells"], sections["grid"]["per_unit"],
                           richardson=bool(sections["solver"]["richardson"]))
    rep = locate_gaps(s, (0.0, top))
    windows = predict_gap_windows(lam, k, h, sections["gaps"]["safety"])
    hits = eigenvalues_in(windows, s.eigenvalues)
    return dict(h=h, report=rep.to_dict(), windows=windows, eigenvalues_in_windows=hits,
                eigenvalues=s.eigenvalues)


def _job_localization(sections, h):
    from .experiments import supercell_spectrum, well_spectrum

    fs = _field(sections)
    g = sections["gaps"]
    N = sections["grid"]["cells"]
    well = well_spectrum(fs, h, g["eps1"], h * g["eps1"], N, sections["grid"]["per_unit"])
    top = 0.5 * (well.eigenvalues[0] + well.eigenvalues[1])
    full = supercell_spectrum(fs, h, top, N, sections["grid"]["per_unit"])
    return dict(h=h, full=full.eigenvalues, well=well.eigenvalues, top=top)


def _run_jobs(fn, sections, hs, jobs):
    t0 = time.perf_counter()
    results, records = [], []
    if jobs > 1 and len(hs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futs = [ex.submit(_timed, fn, sections, h) for h in hs]
            outs = [f.result() for f in futs]
    else:
        outs = [_timed(fn, sections, h) for h in hs]
    for h, (res, wall, err) in zip(hs, outs):
        records.append(dict(job=fn.__name__.lstrip("_"), h=h, wall_time=wall, status="ok" if err is None else "failed",
                            error=err))
        results.append(res)
    return results, records, time.perf_counter() - t0


def _timed(fn, sections, h):
    t = time.perf_counter()
    try:
        return fn(sections, h), time.perf_counter() - t, None
    except SpecgapError as exc:
        return None, time.perf_counter() - t, f"{type(exc).__name__}: {exc}"


# ----------------------------------------------------------------------------
# experiments


def exp_bands(cfg, out, jobs):
    from .models import montgomery_bands

    b = cfg.sections["bands"]
    lo, hi, step = b["b_min"], b["b_max"], b["b_step"]
    t = time.perf_counter()
    for _ in range(8):
        grid = lo + step * np.arange(int(round((hi - lo) / step)) + 1)
        table = montgomery_bands(b["k"], grid, b["J"])
        i = int(np.argmin(table.band(1)))
        if i == 0:
            lo -= 1.0
        elif i == len(grid) - 1:
            hi += 1.0
        else:
            break
    table.write_csv(os.path.join(out, "bands.csv"))
    emit_plot_data(table, os.path.join(out, "plot_bands.csv"))
    summary = dict(k=b["k"], J=b["J"], b_min=lo, b_max=hi, b_step=step, argmin_b=float(grid[i]),
                   min_mu1=float(table.band(1)[i]), crossings_flagged=table.crossings_flagged)
    write_json(os.path.join(out, "bands.json"), summary)
    return [dict(job="bands", wall_time=time.perf_counter() - t, status="ok", error=None)]


def exp_model2d(cfg, out, jobs):
    from .experiments import model_scaling_sweep
    from .fields import FieldKind, model_field

    fs = _field(cfg.sections)
    model = fs if fs.kind is FieldKind.PolynomialModel else model_field(fs)
    hs = cfg.h_sweep
    m = cfg.get("solver", "m")
    t = time.perf_counter()
    specs = model_scaling_sweep(model, hs, m, cfg.get("grid", "halfwidth"), cfg.get("grid", "per_unit"),
                                bool(cfg.get("solver", "richardson")))
    e = (2 * model.k + 2) / (model.k + 2)
    rows = []
    for h, s in zip(hs, specs):
        err = s.discretization_error if s.discretization_error is not None else np.zeros(m)
        for j, (lam, er) in enumerate(zip(s.eigenvalues, err), start=1):
            rows.append([h, j, lam, lam / h**e, er])
    write_csv(os.path.join(out, "model2d.csv"), ["h", "j", "eigenvalue", "scaled", "error_estimate"], rows)
    lam1 = np.array([s.eigenvalues[0] for s in specs])
    slope = float(np.polyfit(np.log(hs), np.log(lam1), 1)[0]) if len(hs) > 1 else math.nan
    write_json(os.path.join(out, "model2d.json"), dict(k=model.k, exponent=e, slope=slope, h=hs, lambda1=lam1))
    return [dict(job="model2d", wall_time=time.perf_counter() - t, status="ok", error=None)]


def exp_supercell(cfg, out, jobs):
    res, rec, _ = _run_jobs(_job_supercell, cfg.sections, cfg.h_sweep, jobs)
    rows = []
    for r in res:
        if r is None:
            continue
        for i, (lam, rr) in enumerate(zip(r["eigenvalues"], r["residuals"]), start=1):
            rows.append([r["h"], i, lam, rr])
    write_csv(os.path.join(out, "supercell.csv"), ["h", "index", "eigenvalue", "residual"], rows)
    return rec


def exp_quasimode(cfg, out, jobs):
    from .quasimodes import fit_residual_slope

    res, rec, _ = _run_jobs(_job_quasimode, cfg.sections, cfg.h_sweep, jobs)
    ok = [r for r in res if r is not None]
    pairs = [(r["h"], r["residual"]) for r in ok]
    emit_plot_data(pairs, os.path.join(out, "residuals.csv"))
    summary = dict(recipe=cfg.get("quasimode", "recipe"), samples=ok)
    try:
        fit = fit_residual_slope(pairs)
        summary.update(slope=fit.slope, r2=fit.r2, jackknife_spread=fit.jackknife_spread,
                       jackknife_flag=fit.flagged)
    except SpecgapError as exc:
        summary.update(slope=None, fit_error=str(exc))
    write_json(os.path.join(out, "quasimode.json"), summary)
    return rec


def exp_gaps(cfg, out, jobs):
    from .gaps import Gap, GapReport

    res, rec, _ = _run_jobs(_job_gaps, cfg.sections, cfg.h_sweep, jobs)
    ok = [r for r in res if r is not None]
    reports = []
    for r in ok:
        d = r["report"]
        reports.append(GapReport(tuple(d["window"]), [Gap(g["lo"], g["hi"], g["interior"]) for g in d["gaps"]],
                                 d["h"], d["delta"]))
    emit_plot_data(reports, os.path.join(out, "gaps.csv"))
    write_json(os.path.join(out, "gaps.json"),
               [dict(h=r["h"], report=r["report"], predicted_windows=r["windows"],
                     eigenvalues_in_windows=r["eigenvalues_in_windows"]) for r in ok])
    return rec


def exp_localization(cfg, out, jobs):
    from .eigensolve import Spectrum
    from .gaps import localization_check

    res, rec, _ = _run_jobs(_job_localization, cfg.sections, cfg.h_sweep, jobs)
    ok = [r for r in res if r is not None]
    if len(ok) >= 1:
        full = {r["h"]: Spectrum(np.asarray(r["full"]), r["h"], np.zeros(len(r["full"]))) for r in ok}
        well = {r["h"]: Spectrum(np.asarray(r["well"]), r["h"], np.zeros(len(r["well"]))) for r in ok}
        tops = {r["h"]: r["top"] for r in ok}
        rep = localization_check(full, well, lambda h: (0.0, tops[h]), copies=cfg.get("grid", "cells") ** 2)
        write_json(os.path.join(out, "localization.json"), rep.to_dict())
        emit_plot_data(rep, os.path.join(out, "localization.csv"))
    return rec


def exp_identities(cfg, out, jobs):
    from .experiments import identity_table

    s = cfg.sections["identities"]
    t = time.perf_counter()
    rows = identity_table(s["k"], s["alpha"], s["h"], s["beta"])
    worst = max(dev / scale for *_, dev, scale in rows)
    write_json(os.path.join(out, "identities.json"),
               dict(rows=[dict(k=k, h=h, beta=b, alpha=a, deviation=d, scale=sc) for k, h, b, a, d, sc in rows],
                    max_relative_deviation=worst, passed=bool(worst <= 1e-12)))
    return [dict(job="verify-identities", wall_time=time.perf_counter() - t, status="ok", error=None)]


EXPERIMENT_FUNCS = {
    "bands": exp_bands,
    "model2d": exp_model2d,
    "supercell": exp_supercell,
    "quasimode": exp_quasimode,
    "gaps": exp_gaps,
    "localization": exp_localization,
    "verify-identities": exp_identities,
}


def _versions():
    return dict(specgap=__version__, numpy=np.__version__, scipy=scipy.__version__,
                python=platform.python_version())


def run(cfg: C.ExperimentConfig, out: str, jobs: int = 1) -> int:
    """Run one experiment; returns the exit code and always writes a manifest."""
    C.check_output_dir(out)
    with open(os.path.join(out, "config.normalized"), "w", encoding="utf-8") as fh:
        fh.write(cfg.normalized())
    manifest = dict(experiment=cfg.experiment, config_sha256=cfg.digest(), versions=_versions(), jobs=[],
                    status="ok", error=None)
    t = time.perf_counter()
    code = EXIT_OK
    try:
        records = EXPERIMENT_FUNCS[cfg.experiment](cfg, out, jobs)
        manifest["jobs"] = records
        failed = [r for r in records if r["status"] != "ok"]
        if failed:
            manifest["status"] = "failed"
            manifest["error"] = failed[0]["error"]
            code = EXIT_SOLVER
    except SpecgapError as exc:
        manifest["status"] = "failed"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        code = EXIT_SOLVER
    manifest["wall_time"] = time.perf_counter() - t
    manifest["outputs"] = sorted(f for f in os.listdir(out) if f != "manifest.json")
    write_json(os.path.join(out, "manifest.json"), manifest)
    return code


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="specgap", description=__doc__.splitlines()[0])
    p.add_argument("experiment", choices=C.EXPERIMENTS)
    p.add_argument("--config", required=True, help="experiment configuration file")
    p.add_argument("--out", default=None, help="output directory (default: [output] dir)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (SPECGAP_JOBS overrides)")
    args = p.parse_args(argv)
    jobs = args.jobs
    env = os.environ.get("SPECGAP_JOBS")
    try:
        if env:
            try:
                jobs = int(env)
            except ValueError:
                raise ConfigError(f"SPECGAP_JOBS must be an integer, got {env!r}") from None
        if jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg = C.load(args.config, args.experiment)
        out = args.out or cfg.get("output", "dir")
        C.check_output_dir(out)
    except (ConfigError, OSError) as exc:
        print(f"specgap: {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code = run(cfg, out, jobs)
    except Exception:  # unexpected failures still map to the solver exit code
        traceback.print_exc()
        return EXIT_SOLVER
    if code != EXIT_OK:
        with open(os.path.join(out, "manifest.json"), encoding="utf-8") as fh:
            print(f"specgap: {json.load(fh)['error']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
