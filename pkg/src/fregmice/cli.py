"""Command-line surface: impute, fit, pool, simulate, diagnose, report.

Every command reads its inputs from files, writes its artifacts into files,
and is deterministic: the same inputs and seed produce byte-identical output,
figures included.  Failures print a single ``error:<category>:<detail>`` line
on stderr; missing or unreadable input files exit with status 2, everything
else with status 1.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import re
import sys
from pathlib import Path

import numpy as np

from .basis import BSplineBasis
from .dataset import (MixedDataset, format_float, read_csv, read_sidecar,
                      write_csv, write_sidecar)
from .errors import ConfigError, FregmiceError
from .fdgrid import uniform_grid
from .frm import FrmSpec, fit_frm
from .mice import (ImputationRun, ImputationSpec, model_spec_from_dict,
                   run_fregmice, stream_diagnostics)
from .pool import pool_coefficients, pool_scalar, pooled_band
from .srm import SrmSpec, fit_srm
from . import plots
from . import simlab

THREADS_ENV = "FREGMICE_THREADS"


# ---------------------------------------------------------------------------
# Small IO helpers
# ---------------------------------------------------------------------------

def _read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc


def _write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def _write_table(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _load_dataset(data_path, sidecar_path) -> MixedDataset:
    if sidecar_path is None:
        guess = Path(data_path).with_suffix(".json")
        sidecar_path = guess if guess.exists() else None
    sidecar = read_sidecar(sidecar_path) if sidecar_path is not None else None
    return read_csv(data_path, sidecar)


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)


def _say(args, text: str) -> None:
    if getattr(args, "verbose", False):
        print(text, file=sys.stderr)


# ---------------------------------------------------------------------------
# impute
# ---------------------------------------------------------------------------

def _trace_rows(run: ImputationRun):
    rows = []
    for rec in run.traces:
        val = np.atleast_1d(np.asarray(rec.value, dtype=float))
        if rec.statistic.startswith("pointwise"):
            for g, v in enumerate(val):
                rows.append((rec.stream, rec.iteration, rec.variable,
                             rec.statistic, g, float(v)))
        else:
            rows.append((rec.stream, rec.iteration, rec.variable,
                         rec.statistic, None, float(val[0])))
    return rows


def _cmd_impute(args) -> int:
    data = _load_dataset(args.data, args.sidecar)
    spec = ImputationSpec.from_dict(_read_json(args.spec))
    overrides = {k: getattr(args, k) for k in ("m", "v", "seed")
                 if getattr(args, k) is not None}
    if overrides:
        spec = dataclasses.replace(spec, **overrides)
    run = run_fregmice(data, spec, threads=args.threads)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, ds in enumerate(run.datasets, start=1):
        write_csv(ds, out / f"imputed_{i}.csv")
        write_sidecar(ds, out / f"imputed_{i}.json")
        _say(args, f"wrote {out / f'imputed_{i}.csv'}")
    _write_table(out / "trace.csv",
                 ("stream", "iteration", "variable", "statistic",
                  "t_index", "value"),
                 _trace_rows(run))
    meta = {
        "m": run.spec.m,
        "v": run.spec.v,
        "seed": run.spec.seed,
        "visit_order": list(run.visit_order),
        "warnings": list(run.warnings),
        "missing_cells": {name: int((~mask).sum())
                          for name, mask in sorted(run.masks.items())},
    }
    _write_json(meta, out / "meta.json")
    _say(args, f"wrote {out / 'trace.csv'} and {out / 'meta.json'}")
    return 0


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def _cmd_fit(args) -> int:
    data = _load_dataset(args.data, args.sidecar)
    spec = model_spec_from_dict(_read_json(args.model))
    if isinstance(spec, FrmSpec):
        fit = fit_frm(data, spec)
    else:
        fit = fit_srm(data, spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_json(fit.to_dict(), out)
    _say(args, f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# pool
# ---------------------------------------------------------------------------

def _load_fit(path) -> dict:
    doc = _read_json(path)
    missing = [k for k in ("model", "response", "terms", "posterior_cov")
               if k not in doc]
    if missing or not isinstance(doc["terms"], list):
        raise ConfigError(f"{path}: not a fit file (missing {missing})")
    for entry in doc["terms"]:
        if "name" not in entry or "coefficients" not in entry:
            raise ConfigError(f"{path}: malformed term entry in fit file")
    return doc


def _term_slices(fit_dict: dict) -> dict[str, slice]:
    slices, start = {}, 0
    for entry in fit_dict["terms"]:
        width = len(entry["coefficients"])
        slices[entry["name"]] = slice(start, start + width)
        start += width
    return slices


def _check_same_structure(fits: list[dict]) -> None:
    first = fits[0]
    for other in fits[1:]:
        same = (other.get("model") == first.get("model")
                and other.get("response") == first.get("response")
                and [t["name"] for t in other["terms"]]
                == [t["name"] for t in first["terms"]]
                and [len(t["coefficients"]) for t in other["terms"]]
                == [len(t["coefficients"]) for t in first["terms"]])
        if not same:
            raise ConfigError("fits disagree on model structure; "
                              "pool needs the same model refit per dataset")


def _cmd_pool(args) -> int:
    fits = [_load_fit(p) for p in args.fits]
    if not fits:
        raise ConfigError("no fits given")
    _check_same_structure(fits)
    first = fits[0]
    m = len(fits)
    covs = [np.asarray(f["posterior_cov"], dtype=float) for f in fits]
    slices = _term_slices(first)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pooled_terms = []
    band_rows = []
    skipped = []
    for t_idx, entry in enumerate(first["terms"]):
        name = entry["name"]
        sl = slices[name]
        ests = np.stack([np.asarray(f["terms"][t_idx]["coefficients"],
                                    dtype=float) for f in fits])
        within = np.stack([c[sl, sl] for c in covs])
        if "basis_s" in entry:                      # surface term: no 1-D band
            skipped.append(name)
            continue
        if "basis" in entry:
            b = entry["basis"]
            basis = BSplineBasis((b["domain"][0], b["domain"][1]), b["n_basis"])
            pooled = pool_coefficients(basis, ests, within)
            if "grid" in first:
                pts = np.asarray(first["grid"], dtype=float)
            else:
                pts = uniform_grid(b["domain"][0], b["domain"][1], 101).points
            est, lo, hi, se = pooled_band(pooled, pts, level=args.level,
                                          use_t=args.use_t)
            for k in range(len(pts)):
                band_rows.append((name, pts[k], est[k], se[k], lo[k], hi[k]))
            pooled_terms.append({
                "name": name,
                "type": "functional",
                "basis": {"domain": list(b["domain"]), "n_basis": b["n_basis"]},
                "estimate": pooled.estimate.tolist(),
                "within": pooled.within.tolist(),
                "between": pooled.between.tolist(),
                "band": {"t": pts.tolist(), "estimate": est.tolist(),
                         "se": se.tolist(), "lo": lo.tolist(),
                         "hi": hi.tolist()},
            })
        else:
            point, total_var, lo, hi = pool_scalar(
                ests[:, 0], within[:, 0, 0], level=args.level, use_t=args.use_t)
            pooled_terms.append({
                "name": name,
                "type": "scalar",
                "estimate": point,
                "variance": total_var,
                "lo": lo,
                "hi": hi,
            })

    pooled_doc = {
        "model": first.get("model"),
        "response": first.get("response"),
        "m": m,
        "level": args.level,
        "use_t": bool(args.use_t),
        "terms": pooled_terms,
        "skipped_terms": skipped,
    }
    _write_json(pooled_doc, out / "pooled.json")
    _write_table(out / "bands.csv",
                 ("term", "t", "estimate", "se", "lo", "hi"), band_rows)
    _say(args, f"wrote {out / 'pooled.json'} and {out / 'bands.csv'}")
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def _cmd_report(args) -> int:
    doc = _read_json(args.pooled)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    band_rows = []
    lines = [f"pooled {doc.get('model', '?')} model for "
             f"response '{doc.get('response', '?')}'",
             f"datasets pooled: {doc.get('m', '?')}, interval level: "
             f"{doc.get('level', '?')}", ""]
    for term in doc.get("terms", []):
        name = term["name"]
        if term.get("type") == "functional":
            band = term["band"]
            t = np.asarray(band["t"], dtype=float)
            est = np.asarray(band["estimate"], dtype=float)
            se = np.asarray(band["se"], dtype=float)
            lo = np.asarray(band["lo"], dtype=float)
            hi = np.asarray(band["hi"], dtype=float)
            for k in range(len(t)):
                band_rows.append((name, t[k], est[k], se[k], lo[k], hi[k]))
            peak = int(np.argmax(np.abs(est)))
            crosses = bool(np.any((lo <= 0) & (hi >= 0)))
            lines.append(f"{name}:")
            lines.append(f"  largest effect {format_float(est[peak])} at "
                         f"t = {format_float(t[peak])}")
            lines.append(f"  mean band width {format_float(float(np.mean(hi - lo)))}")
            lines.append("  band includes zero somewhere: "
                         + ("yes" if crosses else "no"))
            plots.band_chart(out / f"band_{_safe_name(name)}.svg",
                             name, t, est, lo, hi)
        else:
            se = float(term["variance"]) ** 0.5
            lines.append(f"{name}: {format_float(term['estimate'])} "
                         f"(se {format_float(se)}, interval "
                         f"[{format_float(term['lo'])}, "
                         f"{format_float(term['hi'])}])")
    if doc.get("skipped_terms"):
        lines.append("")
        lines.append("surface terms without 1-D bands: "
                     + ", ".join(doc["skipped_terms"]))
    lines.append("")

    (out / "report.txt").write_text("\n".join(lines), encoding="utf-8")
    _write_table(out / "bands.csv",
                 ("term", "t", "estimate", "se", "lo", "hi"), band_rows)
    _say(args, f"wrote {out / 'report.txt'}")
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _scenario_from_args(args) -> simlab.ScenarioConfig:
    base = _read_json(args.config) if args.config else {}
    for key in ("study", "n", "missing_target", "parameter_set", "scenario",
                "mechanism", "seed", "replications", "m", "v"):
        val = getattr(args, key, None)
        if val is not None:
            base[key] = val
    if "study" not in base:
        raise ConfigError("simulate needs --study or a --config file")
    return simlab.ScenarioConfig.from_dict(base)


def _cmd_simulate(args) -> int:
    config = _scenario_from_args(args)
    methods = tuple(s.strip() for s in args.methods.split(",") if s.strip())
    report = simlab.run_experiment(config, methods=methods)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = config.to_dict()
    doc["methods"] = list(methods)
    _write_json(doc, out / "config.json")
    _write_table(out / "metrics.csv",
                 ("method", "coefficient", "t", "statistic", "value"),
                 simlab.metrics_rows(report))
    _write_table(out / "summary.csv",
                 ("method", "coefficient", "statistic", "value"),
                 simlab.summary_rows(report))

    coef_names = []
    for mm in report.methods.values():
        coef_names = list(mm.curves)
        break
    for stat, attr, hline in (("pwSB", "pw_sb", 0.0), ("pwCov", "pw_cov", 0.95),
                              ("pwWidth", "pw_width", None)):
        panels = []
        for coef in coef_names:
            series = {meth: getattr(report.methods[meth].curves[coef], attr)
                      for meth in methods}
            panels.append((coef, series))
        if panels:
            plots.panel_chart(out / f"{stat}.svg", stat, report.grid, panels,
                              ylabel=stat, hline=hline)
    _say(args, f"wrote {out / 'metrics.csv'} and {out / 'summary.csv'}")
    return 0


# ---------------------------------------------------------------------------
# diagnose
# ---------------------------------------------------------------------------

def _strip_rows(data: MixedDataset, run: ImputationRun):
    """Observed values (dataset 0) next to each stream's imputed values.

    Curves are reduced to their grid average so every variable fits one
    value column.
    """
    rows = []
    for name in run.visit_order:
        col = data.column(name)
        observed = run.masks[name]           # True where the cell came in filled
        if col.kind == "functional":
            def reduce(values, r):
                return float(np.mean(values[r]))
        else:
            def reduce(values, r):
                return float(values[r])
        for r in np.flatnonzero(observed):
            rows.append((0, name, int(r), reduce(col.values, r)))
        for i, ds in enumerate(run.datasets, start=1):
            filled = ds.column(name)
            for r in np.flatnonzero(~observed):
                rows.append((i, name, int(r), reduce(filled.values, r)))
    return rows


def _cmd_diagnose(args) -> int:
    data = _load_dataset(args.data, args.sidecar)
    spec = ImputationSpec.from_dict(_read_json(args.spec))
    overrides = {k: getattr(args, k) for k in ("m", "v", "seed")
                 if getattr(args, k) is not None}
    if overrides:
        spec = dataclasses.replace(spec, **overrides)
    run = run_fregmice(data, spec, threads=args.threads)
    traces, flags = stream_diagnostics(run)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_table(out / "trace.csv",
                 ("stream", "iteration", "variable", "statistic",
                  "t_index", "value"),
                 _trace_rows(run))
    strip_rows = _strip_rows(data, run)
    _write_table(out / "strip.csv",
                 ("dataset", "variable", "row", "value"), strip_rows)
    _write_json({
        "flags": [{"stream": f.stream, "variable": f.variable,
                   "slope": f.slope, "threshold": f.threshold,
                   "flagged": f.flagged} for f in flags],
        "warnings": list(run.warnings),
    }, out / "diagnostics.json")

    iters = np.arange(1, run.spec.v + 1)
    for name in run.visit_order:
        mean_by, sd_by = {}, {}
        for rec in traces:
            if rec.variable != name:
                continue
            val = float(np.mean(rec.value))
            if rec.statistic in ("mean", "pointwise-mean"):
                mean_by.setdefault(rec.stream, []).append(val)
            else:
                sd_by.setdefault(rec.stream, []).append(val)
        plots.trace_chart(out / f"trace_{_safe_name(name)}.svg", name, iters,
                          {s: np.asarray(v) for s, v in mean_by.items()},
                          {s: np.asarray(v) for s, v in sd_by.items()})
        groups = [("obs", np.asarray([v for d, nm, _, v in strip_rows
                                      if d == 0 and nm == name]))]
        for i in range(1, run.m + 1):
            groups.append((f"m{i}", np.asarray([v for d, nm, _, v in strip_rows
                                                if d == i and nm == name])))
        plots.strip_chart(out / f"strip_{_safe_name(name)}.svg", name, groups)
    _say(args, f"wrote diagnostics under {out}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}")
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fregmice",
        description="Multiple imputation and regression for mixed "
                    "scalar/functional data.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_threads=False):
        p.add_argument("--out", required=True, help="output directory or file")
        p.add_argument("--verbose", action="store_true",
                       help="progress lines on stderr")
        if with_threads:
            p.add_argument("--threads", type=int, default=None,
                           help=f"worker threads (default ${THREADS_ENV} or 1)")

    p = sub.add_parser("impute", help="draw M completed datasets")
    p.add_argument("--data", required=True, help="wide CSV with missing cells")
    p.add_argument("--sidecar", default=None,
                   help="grid sidecar JSON (default: <data>.json if present)")
    p.add_argument("--spec", required=True, help="imputation spec JSON")
    p.add_argument("--m", type=int, default=None, help="override spec m")
    p.add_argument("--v", type=int, default=None, help="override spec sweeps")
    p.add_argument("--seed", type=int, default=None, help="override spec seed")
    add_common(p, with_threads=True)
    p.set_defaults(func=_cmd_impute)

    p = sub.add_parser("fit", help="fit one model to one dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--sidecar", default=None)
    p.add_argument("--model", required=True, help="model spec JSON")
    add_common(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("pool", help="combine fits with Rubin's Rules")
    p.add_argument("--fits", nargs="+", required=True,
                   help="fit JSON files, one per imputed dataset")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--use-t", action="store_true", dest="use_t",
                   help="t-quantile intervals with Rubin degrees of freedom")
    add_common(p)
    p.set_defaults(func=_cmd_pool)

    p = sub.add_parser("simulate", help="run a Monte Carlo recovery study")
    p.add_argument("--config", default=None, help="scenario config JSON")
    p.add_argument("--study", choices=("frm-sim", "srm-sim"), default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--missing-target", dest="missing_target", type=float,
                   default=None)
    p.add_argument("--parameter-set", dest="parameter_set", type=int,
                   choices=(1, 2), default=None)
    p.add_argument("--scenario", choices=("a", "b"), default=None)
    p.add_argument("--mechanism", choices=("MCAR", "MAR"), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--replications", type=int, default=None)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--v", type=int, default=None)
    p.add_argument("--methods", default=",".join(simlab.METHODS),
                   help="comma-separated subset of " + ",".join(simlab.METHODS))
    add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("diagnose", help="convergence and imputation checks")
    p.add_argument("--data", required=True)
    p.add_argument("--sidecar", default=None)
    p.add_argument("--spec", required=True, help="imputation spec JSON")
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--v", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    add_common(p, with_threads=True)
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("report", help="summary text and figures from pooled.json")
    p.add_argument("--pooled", required=True)
    add_common(p)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "threads", None) is None and hasattr(args, "threads"):
            args.threads = _default_threads()
        return args.func(args)
    except FregmiceError as exc:
        print(f"error:{exc.category}:{exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error:io:{exc.filename or exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error:io:{exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
