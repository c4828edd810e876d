"""Command line entry point: ``vnmix run|sweep|fmt|validate``.

Exit codes: 0 success, 2 parse or validation failure, 3 analysis failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import itertools
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from . import __version__, scenario as sc
from .algebra import Element
from .dynamics import (
    check_weak_convergence_smoothing,
    classify_completely_mixing,
    classify_mixing,
    dichotomy,
    rho_bar_estimate,
    smoothing_profile,
    verify_ksn,
)
from .errors import AnalysisError, NotCertified, ParseError, SuiteInvariantViolation, ValidationError, VnmixError
from .superop import fixed_point_residual, spectrum

log = logging.getLogger("vnmix")

EXIT_OK, EXIT_INVALID, EXIT_ANALYSIS = 0, 2, 3

TRAJECTORY_COLUMNS = ("step", "l1_norm")
SMOOTHING_COLUMNS = ("n", "delta", "S")
SPECTRUM_COLUMNS = ("re", "im", "modulus", "multiplicity")
SWEEP_METRICS = ("status", "dichotomy", "alpha", "escape_step", "mixing", "completely_mixing",
                 "rho_bar", "peripheral_overlap")


def _num(x):
    if x is None:
        return None
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    return float(x)


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def element_doc(x: Optional[Element]):
    if x is None:
        return None
    return [[[sc.format_complex(z) for z in row] for row in blk] for blk in x.blocks]


def derive_seed(base: int, counter: int) -> int:
    """Per-task seed from the scenario seed and a task counter."""
    return int(np.random.SeedSequence([int(base), int(counter)]).generate_state(1, dtype=np.uint64)[0])


@dataclass
class Execution:
    report: dict
    artifacts: list = field(default_factory=list)  # (kind, columns, rows)
    metrics: dict = field(default_factory=dict)
    exit_code: int = EXIT_OK


def _element(spec, alg, params, elements):
    name = params.get("element") or next(iter(spec.initial_elements))
    return name, elements[name]


def execute(spec: sc.ScenarioSpec, seed: Optional[int] = None) -> Execution:
    """Run every analysis of a validated scenario in order, collecting records and CSV payloads."""
    if seed is not None:
        spec = sc.ScenarioSpec(spec.algebra, spec.map, spec.initial_elements, spec.analyses,
                               spec.tolerances, seed, spec.outputs)
    tol = spec.resolved_tolerances()
    alg = sc.resolve_algebra(spec)
    T = sc.build_map(spec, alg, None if spec.seed is None else derive_seed(spec.seed, 0))
    elements = {k: sc.build_element(v, alg) for k, v in spec.initial_elements.items()}
    doc = sc.to_document(spec)
    doc["tolerances"] = tol
    out = Execution({"tool": "vnmix", "version": __version__, "seed": spec.seed, "scenario": doc,
                     "analyses": []})
    m = out.metrics
    t_start = time.perf_counter()
    for idx, (name, params) in enumerate(spec.analyses, start=1):
        params = dict(params)
        aseed = 0 if spec.seed is None else derive_seed(spec.seed, idx)
        rec = {"name": name}
        t0 = time.perf_counter()
        try:
            if name == "classify_mixing":
                r = classify_mixing(T, tol["mixing"])
                rec.update(verdict=r.verdict, peripheral_overlap=_num(r.peripheral_overlap),
                           witness=element_doc(r.witness), fixed_point=element_doc(r.fixed_point),
                           fixed_point_residual=_num(None if r.fixed_point is None
                                                     else fixed_point_residual(T, r.fixed_point)))
                m.setdefault("mixing", r.mixing)
                m.setdefault("peripheral_overlap", r.peripheral_overlap)
            elif name == "classify_completely_mixing":
                r = classify_completely_mixing(T, tol["mixing"], seed=aseed)
                rec.update(verdict=r.verdict, rho_bar=_num(r.rho_bar), witness=element_doc(r.witness))
                m.setdefault("completely_mixing", r.completely_mixing)
                m.setdefault("rho_bar", r.rho_bar)
            elif name == "rho_bar":
                method = params.get("method", "spectral")
                r = rho_bar_estimate(T, method, tol=tol["mixing"], seed=aseed)
                rec.update(method=method, value=_num(r.value), witness=element_doc(r.witness))
                m.setdefault("rho_bar", r.value)
            elif name == "smoothing_profile":
                ename, x = _element(spec, alg, params, elements)
                prof = smoothing_profile(T, x, params.get("deltas"), int(params.get("n_max", 64)))
                chk = check_weak_convergence_smoothing(T, x, deltas=params.get("deltas"))
                rec.update(element=ename, n_max=int(prof.n_grid[-1]), deltas=[_num(d) for d in prof.deltas],
                           min_projection_trace=_num(prof.min_projection_trace),
                           vacuous_below=_num(prof.min_projection_trace),
                           weak_convergence_smoothing={"ok": chk.ok, "applicable": chk.applicable,
                                                       "moduli": {_num(k): [_num(a), _num(b)]
                                                                  for k, (a, b) in chk.moduli.items()}})
                out.artifacts.append(("smoothing", SMOOTHING_COLUMNS, list(prof.csv_rows())))
            elif name == "dichotomy":
                ename, y = _element(spec, alg, params, elements)
                r = dichotomy(T, y, n_max=int(params.get("n_max", 5000)), decay_tol=tol["decay"],
                              fixed_tol=tol["fixed_point"], stop_tol=tol["stop"])
                esc = r.trajectory.escape_step(tol["decay"])
                rec.update(element=ename, verdict=r.verdict, alpha_estimate=_num(r.alpha_estimate),
                           alpha_source=r.alpha_source, steps=r.trajectory.points[-1].step,
                           converged=r.trajectory.converged, escape_step=esc,
                           fixed_point=element_doc(r.fixed_point), residual=_num(r.residual),
                           positivity_margin=_num(r.positivity_margin), smoothing_holds=r.smoothing_holds)
                out.artifacts.append(("trajectory", TRAJECTORY_COLUMNS,
                                      [(p.step, p.norm) for p in r.trajectory.points]))
                m.setdefault("dichotomy", r.verdict)
                m.setdefault("alpha", r.alpha_estimate)
                m.setdefault("escape_step", esc)
            elif name == "verify_ksn":
                ename, z = _element(spec, alg, params, elements)
                r = verify_ksn(T, z, seed=aseed, n_max=int(params.get("n_max", 5000)), decay_tol=tol["decay"],
                               tol=tol["mixing"])
                rec.update(element=ename, positive_contraction=r.positive_contraction,
                           h1_domination=r.h1_domination, h2_no_fixed_point=r.h2_no_fixed_point,
                           h3_converges=r.h3_converges, applicable=r.applicable, alpha=_num(r.alpha),
                           decay_confirmed=r.decay_confirmed, mixing=r.mixing,
                           completely_mixing=r.completely_mixing, implication_holds=r.implication_holds,
                           failed=list(r.failed))
                if not r.consistent:
                    raise AnalysisError("hypotheses hold but the conclusion fails")
            elif name == "spectrum":
                s = spectrum(T, tol["mixing"])
                rec.update(spectral_radius=_num(s.spectral_radius), semisimple=s.semisimple,
                           peripheral=[sc.format_complex(z) for z in s.peripheral_values])
                out.artifacts.append(("spectrum", SPECTRUM_COLUMNS, list(s.csv_rows())))
            rec["status"] = "ok"
        except (AnalysisError, NotCertified) as e:
            rec["status"] = "failed"
            rec["error"] = {"type": type(e).__name__, "message": str(e)}
            instance = getattr(e, "instance", None)
            if instance:
                rec["error"]["instance"] = instance
            out.exit_code = EXIT_ANALYSIS
            if name == "dichotomy":
                m["dichotomy"] = "failure"
        rec["elapsed_seconds"] = round(time.perf_counter() - t0, 6)
        out.report["analyses"].append(rec)
    out.report["status"] = "ok" if out.exit_code == EXIT_OK else "failed"
    out.report["total_elapsed_seconds"] = round(time.perf_counter() - t_start, 6)
    m["status"] = out.report["status"]
    return out


@dataclass
class RunReport:
    exit_code: int
    report: dict
    files: list


class _ReportDumper(yaml.SafeDumper):
    """Mappings in block style, scalar lists inline: timing fields land on their own lines."""


def _repr_list(dumper, data):
    flat = all(not isinstance(v, (list, dict)) for v in data)
    return dumper.represent_sequence("tag:yaml.org,2002:seq", data, flow_style=flat)


def _repr_dict(dumper, data):
    return dumper.represent_mapping("tag:yaml.org,2002:map", data.items(), flow_style=False)


_ReportDumper.add_representer(list, _repr_list)
_ReportDumper.add_representer(dict, _repr_dict)


def render_report(report: dict) -> str:
    return yaml.dump(report, Dumper=_ReportDumper, sort_keys=False, width=100, allow_unicode=False)


def _prefix(spec: sc.ScenarioSpec, path, out_dir) -> str:
    prefix = spec.outputs.get("prefix") or os.path.splitext(os.path.basename(str(path)))[0]
    return os.path.join(out_dir or ".", prefix)


def write_outputs(execution: Execution, prefix: str) -> list:
    os.makedirs(os.path.dirname(prefix) or ".", exist_ok=True)
    files = []
    counts = {}
    for kind, cols, rows in execution.artifacts:
        counts[kind] = counts.get(kind, 0) + 1
        suffix = kind if counts[kind] == 1 else f"{kind}-{counts[kind]}"
        path = f"{prefix}.{suffix}.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(csv_text(cols, rows))
        files.append(path)
    path = f"{prefix}.report.txt"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_report(execution.report))
    files.append(path)
    return files


def _apply_tols(spec: sc.ScenarioSpec, tols: Optional[dict]) -> sc.ScenarioSpec:
    if not tols:
        return spec
    for k in tols:
        if k not in sc.DEFAULT_TOLERANCES:
            raise ValidationError(f"unknown tolerance {k!r}")
    merged = dict(spec.tolerances)
    merged.update(tols)
    return sc.ScenarioSpec(spec.algebra, spec.map, spec.initial_elements, spec.analyses, merged,
                           spec.seed, spec.outputs)


def run_scenario(path, out_dir=None, seed=None, tols=None) -> RunReport:
    """Validate, execute and write ``<prefix>.report.txt`` plus CSV exports.

    Validation problems raise; analysis failures are recorded in the report and
    reflected in ``exit_code``.
    """
    spec = _apply_tols(sc.load(path), tols)
    if seed is not None:
        spec = sc.from_document(dict(sc.to_document(spec), seed=seed))
    ex = execute(spec)
    files = write_outputs(ex, _prefix(spec, path, out_dir))
    return RunReport(ex.exit_code, ex.report, files)


# -- sweeps -------------------------------------------------------------------------

def _set_path(doc: dict, dotted: str, value):
    keys = dotted.split(".")
    cur = doc
    for k in keys[:-1]:
        cur = cur.setdefault(k, {})
    cur[keys[-1]] = value


def _grid_values(spec):
    if isinstance(spec, dict) and "range" in spec:
        return list(range(*spec["range"]))
    if isinstance(spec, list):
        return spec
    raise ValidationError(f"grid values must be a list or {{range: [start, stop(, step)]}}, got {spec!r}")


def load_sweep(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = yaml.safe_load(fh)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ParseError(f"malformed sweep config: {getattr(e, 'problem', e)}",
                         None if mark is None else mark.line + 1, None if mark is None else mark.column + 1)
    if not isinstance(cfg, dict) or "scenario" not in cfg or "grid" not in cfg:
        raise ValidationError("sweep config needs scenario and grid")
    base = cfg["scenario"]
    if isinstance(base, str):
        with open(os.path.join(os.path.dirname(os.path.abspath(path)), base), encoding="utf-8") as fh:
            try:
                base = yaml.safe_load(fh)
            except yaml.YAMLError as e:
                raise ParseError(f"malformed scenario: {e}")
    if not isinstance(base, dict):
        raise ValidationError("sweep scenario must be a mapping or a path")
    if not isinstance(cfg["grid"], dict) or not cfg["grid"]:
        raise ValidationError("sweep grid must be a non-empty mapping")
    return dict(cfg, scenario=base)


@dataclass
class SweepReport:
    exit_code: int
    summary: dict
    rows: list
    files: list


def _run_point(args):
    index, base, assignment, base_seed = args
    doc = copy.deepcopy(base)
    for k, v in assignment:
        _set_path(doc, k, v)
    if "seed" not in dict(assignment):
        doc["seed"] = derive_seed(base_seed, index)
    spec = sc.from_document(doc)
    ex = execute(spec)
    return index, spec.seed, ex.metrics


def sweep(config_path, out_dir=None, jobs=None, seed=None, tols=None) -> SweepReport:
    """Run a scenario over a parameter grid and check suite-level invariants."""
    cfg = load_sweep(config_path)
    base = copy.deepcopy(cfg["scenario"])
    if tols:
        base.setdefault("tolerances", {}).update(tols)
    keys = list(cfg["grid"])
    values = [_grid_values(cfg["grid"][k]) for k in keys]
    points = [tuple(zip(keys, combo)) for combo in itertools.product(*values)]
    base_seed = seed if seed is not None else int(cfg.get("seed", base.get("seed", 0)) or 0)
    n_jobs = jobs or int(cfg.get("jobs", 1))
    tasks = [(i, base, p, base_seed) for i, p in enumerate(points)]
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            results = list(pool.map(_run_point, tasks))
    else:
        results = [_run_point(t) for t in tasks]
    results.sort(key=lambda r: r[0])
    rows = []
    for (index, pseed, metrics), assignment in zip(results, points):
        rows.append((index, *[v for _, v in assignment], pseed, *[metrics.get(k) for k in SWEEP_METRICS]))
    checks = cfg.get("invariants", ["classifier_coincidence", "dichotomy_totality"])
    violations = []
    for (index, pseed, metrics), assignment in zip(results, points):
        if "classifier_coincidence" in checks and "mixing" in metrics and "completely_mixing" in metrics:
            if metrics["mixing"] != metrics["completely_mixing"]:
                violations.append({"point": index, "invariant": "classifier_coincidence"})
        if "dichotomy_totality" in checks and metrics.get("dichotomy") == "failure":
            violations.append({"point": index, "invariant": "dichotomy_totality"})
    counts = {}
    for _, _, metrics in results:
        for k in ("dichotomy", "mixing", "completely_mixing", "status"):
            if k in metrics:
                key = f"{k}={_cell(metrics[k])}"
                counts[key] = counts.get(key, 0) + 1
    summary = {"tool": "vnmix", "version": __version__, "seed": base_seed, "points": len(points),
               "grid": {k: _grid_values(cfg["grid"][k]) for k in keys}, "counts": dict(sorted(counts.items())),
               "invariants": list(checks), "violations": violations}
    prefix = os.path.join(out_dir or ".", (cfg.get("outputs") or {}).get("prefix", "sweep"))
    os.makedirs(os.path.dirname(prefix) or ".", exist_ok=True)
    columns = ("point", *keys, "seed", *SWEEP_METRICS)
    files = [f"{prefix}.sweep.csv", f"{prefix}.sweep.txt"]
    with open(files[0], "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(columns, rows))
    with open(files[1], "w", encoding="utf-8") as fh:
        fh.write(render_report(summary))
    if violations:
        pts = ", ".join(f"{v['point']} ({v['invariant']})" for v in violations)
        raise SuiteInvariantViolation(f"suite invariants violated at points {pts}", tuple(violations))
    code = EXIT_OK if all(m.get("status") == "ok" for _, _, m in results) else EXIT_ANALYSIS
    return SweepReport(code, summary, rows, files)


# -- argument handling --------------------------------------------------------------

def _parse_tols(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ValidationError(f"--tol expects name=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise ValidationError(f"--tol {k}: not a number: {v!r}") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vnmix", description="Mixing analysis of positive L1-contractions.")
    p.add_argument("--version", action="version", version=f"vnmix {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run a scenario"), ("sweep", "run a parameter sweep"),
                        ("fmt", "print a scenario in canonical form"), ("validate", "validate a scenario")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("path")
        if name in ("run", "sweep"):
            s.add_argument("--out-dir", default=".")
            s.add_argument("--seed", type=int, default=None)
            s.add_argument("--jobs", type=int, default=None)
            s.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "validate":
            sc.load(args.path)
            print("ok")
            return EXIT_OK
        if args.command == "fmt":
            sys.stdout.write(sc.dumps(sc.load(args.path)))
            return EXIT_OK
        tols = _parse_tols(args.tol)
        if args.command == "run":
            rep = run_scenario(args.path, args.out_dir, args.seed, tols)
            for f in rep.files:
                print(f)
            for rec in rep.report["analyses"]:
                if rec["status"] != "ok":
                    print(f"{rec['name']}: {rec['error']['type']}: {rec['error']['message']}", file=sys.stderr)
            return rep.exit_code
        rep = sweep(args.path, args.out_dir, args.jobs, args.seed, tols)
        for f in rep.files:
            print(f)
        return rep.exit_code
    except (ParseError, ValidationError) as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INVALID
    except VnmixError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ANALYSIS


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
