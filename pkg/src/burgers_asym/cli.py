"""``burgers-asym`` command line: constants, solve, expand, remainder, verify, fit.

Exit codes: 0 pass, 1 verification failure, 2 inconclusive (non-converged
moments), 3 usage or I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import load_config
from .field import FieldError
from .moments import MomentError, compute_moment_table
from .profiles import build_expansion
from .quadrature import QuadratureError, verify_constant_table
from .rates import (CLAIMS, FitError, decay_report, fit_rates, gamma_q, lq_norm, monotonicity, q_name,
                    remainder)
from .solver import ConfigError, SolutionRun, SolverError, solve

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_USAGE = 0, 1, 2, 3
MONOTONE_CLAIM = "monotone-3d"
MANIFEST = "manifest.json"
WORK_ARRAYS = 40        # real N^n arrays alive during an ETDRK4 step, with headroom

log = logging.getLogger("burgers_asym")


class UsageError(Exception):
    pass


def _write_atomic(path: Path, text: str):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _emit(args, human: list[str], payload: dict):
    if args.json:
        print(json.dumps(payload, indent=2, default=float))
    else:
        for line in human:
            print(line)


def _versions() -> dict:
    return {"burgers_asym": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _manifest_path(p) -> Path:
    if p is None:
        raise UsageError("--manifest is required")
    p = Path(p)
    if p.is_dir():
        p = p / MANIFEST
    if not p.exists():
        raise UsageError(f"manifest {p} not found")
    return p


def load_manifest(p) -> tuple[dict, SolutionRun]:
    path = _manifest_path(p)
    m = json.loads(path.read_text())
    run = SolutionRun.load(path.parent / m["artifacts"]["run"])
    return m, run


def _analysis_dir(args, manifest_path: Path) -> Path:
    out = Path(args.out_dir) if args.out_dir else manifest_path.parent / "analysis"
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands

def cmd_constants(args) -> int:
    report = verify_constant_table(args.tolerance)
    if args.json:
        print(report.to_json())
    else:
        for line in report.lines():
            print(line)
        print(f"{'PASS' if report.passed else 'FAIL'}: {sum(e.passed for e in report.entries)}"
              f"/{len(report.entries)} constants within {args.tolerance:g}")
    return EXIT_PASS if report.passed else EXIT_FAIL


def run_solve(cfg, out_dir: Path) -> tuple[Path, SolutionRun]:
    """Solve ``cfg`` into ``out_dir`` and write the manifest (last, atomically)."""
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    u0 = cfg.initial_field()
    run = solve(cfg.solver, u0, out_dir=out_dir)
    run_json = run.write_manifest(out_dir)
    manifest = {
        "config": cfg.to_dict(),
        "digest": cfg.digest(),
        "versions": _versions(),
        "artifacts": {"run": run_json.name, "initial": "u0.cdbf", "series": "series.npz", "norms": "norms.csv",
                      "checkpoints": [str(Path(p).relative_to(out_dir)) for p in run.checkpoint_paths.values()]},
        "timings": {"solve_s": run.wall_time, "total_s": time.perf_counter() - t0},
        "mass_drift": run.mass_drift(),
        "box_history": run.box_history,
    }
    path = out_dir / MANIFEST
    _write_atomic(path, json.dumps(manifest, indent=2))
    return path, run


def cmd_solve(args) -> int:
    if not args.config:
        raise UsageError("--config is required")
    overrides = {"N": args.grid, "t_end": args.t_end, "nonlinearity": args.nonlinearity}
    cfg = load_config(args.config, overrides)
    need = WORK_ARRAYS * 8 * cfg.solver.N ** cfg.solver.n / 2**30
    if need > args.memory_gb:
        raise UsageError(f"grid {cfg.solver.N}^{cfg.solver.n} needs about {need:.1f} GB, "
                         f"budget is {args.memory_gb:g} GB (--memory-gb)")
    out = Path(args.out_dir or f"runs/{cfg.name or 'run'}")
    try:
        path, run = run_solve(cfg, out)
    except SolverError as e:
        print(f"solver error: {e}", file=sys.stderr)
        if e.last_good is not None:
            print(f"last good state: {getattr(e.last_good, 't', e.last_good)}", file=sys.stderr)
        return EXIT_FAIL
    human = [f"run written to {path}",
             f"checkpoints: {len(run.checkpoint_paths)}, steps: {len(run.series.t)}, "
             f"wall time {run.wall_time:.1f} s",
             f"mass drift {run.mass_drift():.2e}", f"box history {run.box_history}"]
    _emit(args, human, json.loads(path.read_text()))
    return EXIT_PASS


def _expansion_for(run, order: int):
    table = compute_moment_table(run, order)
    spec = build_expansion(run.config.n, table, run.config.a, order)
    return table, spec


def cmd_expand(args) -> int:
    path = _manifest_path(args.manifest)
    _, run = load_manifest(path)
    n = run.config.n
    order = args.order if args.order is not None else (0 if n == 2 else n - 2 if n != 3 else 3)
    table, spec = _expansion_for(run, order)
    out = _analysis_dir(args, path)
    table.write_csv(out / "moments.csv")
    _write_atomic(out / "expansion.json", spec.to_json())
    human = [f"M0 = {table.M0:.12g}"]
    if table.M1 is not None:
        human.append("M1 = (" + ", ".join(f"{x:.10g}" for x in table.M1) + ")")
    for (l, b, lev), e in sorted(table.st_moments.items()):
        human.append(f"st-moment l={l} beta={b} level={lev}: {e.value:.10g} "
                     f"[{'converged' if e.converged else 'NOT converged'}{', ' + e.flag if e.flag else ''}]")
    human += [f"term {t}" for t in spec.labels()] + [f"written to {out}"]
    _emit(args, human, json.loads(spec.to_json()))
    return EXIT_PASS


def cmd_remainder(args) -> int:
    path = _manifest_path(args.manifest)
    _, run = load_manifest(path)
    table, spec = _expansion_for(run, max(args.cutoff, 0))
    out = _analysis_dir(args, path)
    rows = []
    for t in run.checkpoint_times:
        r = remainder(run, spec, t, args.cutoff, args.log)
        rows.append({"t": t, **{q_name(q): lq_norm(r.values, r.cell_volume, q) for q in (1.0, 2.0, math.inf)}})
    csv_path = out / f"remainder_c{args.cutoff}{'_log' if args.log else ''}.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["t", "1", "2", "inf"])
        w.writeheader()
        w.writerows(rows)
    human = [f"{'t':>12} {'L1':>14} {'L2':>14} {'Linf':>14}"]
    human += [f"{r['t']:12.6g} {r['1']:14.6e} {r['2']:14.6e} {r['inf']:14.6e}" for r in rows]
    human.append(f"written to {csv_path}")
    _emit(args, human, {"cutoff": args.cutoff, "include_log": args.log, "rows": rows})
    return EXIT_PASS


def cmd_verify(args) -> int:
    path = _manifest_path(args.manifest)
    _, run = load_manifest(path)
    out = _analysis_dir(args, path)
    claim = args.claim
    if claim == MONOTONE_CLAIM:
        if run.config.n != 3:
            raise UsageError(f"{MONOTONE_CLAIM} needs a 3-D run")
        _, spec = _expansion_for(run, 2)
        res = monotonicity(run, spec, (0, 1, 2), q=2.0, t_min=args.t_min,
                           final_floor=gamma_q(3, 2.0) + 1.3)
        _write_atomic(out / f"verify_{claim}.json", json.dumps(res, indent=2))
        human = [f"cutoff {c}: fitted L2 exponent {p:.3f}" for c, p in zip(res["cutoffs"], res["exponents"])]
        human.append(f"{'PASS' if res['pass'] else 'FAIL'}  gains {', '.join(f'{g:+.3f}' for g in res['gains'])} "
                     f"(each >= 0.4), final >= {gamma_q(3, 2.0) + 1.3:.2f}")
        _emit(args, human, res)
        return EXIT_PASS if res["pass"] else EXIT_FAIL
    if claim not in CLAIMS:
        raise UsageError(f"unknown claim {claim!r}; choose from {sorted(CLAIMS) + [MONOTONE_CLAIM]}")
    c = CLAIMS[claim]
    if run.config.n != c.n:
        raise UsageError(f"claim {claim} is about n = {c.n}, run has n = {run.config.n}")
    _, spec = _expansion_for(run, c.cutoff)
    rep = decay_report(run, spec, c.cutoff, c.include_log, t_min=args.t_min, claim=c)
    _write_atomic(out / f"verify_{claim}.json", rep.to_json())
    rep.write_plot_csv(out / f"verify_{claim}.csv")
    human = []
    for qn, f in rep.fits.items():
        human.append(f"q={qn:<3} p_plain={f.p_plain:.4f} (rms {f.residual_plain:.2e})  "
                     f"p_log={f.p_log:.4f} (rms {f.residual_log:.2e})  preferred={f.preferred}")
    human += [v.line() for v in rep.verdicts]
    _emit(args, human, json.loads(rep.to_json()))
    return EXIT_PASS if rep.passed else EXIT_FAIL


def cmd_fit(args) -> int:
    if not args.csv:
        raise UsageError("--csv is required")
    p = Path(args.csv)
    if not p.exists():
        raise UsageError(f"{p} not found")
    with open(p) as fh:
        rows = list(csv.reader(fh))
    body = [r for r in rows if r and not r[0].strip().lower().startswith("t")]
    try:
        t = [float(r[0]) for r in body]
        y = [float(r[args.column]) for r in body]
    except (ValueError, IndexError) as e:
        raise UsageError(f"{p}: expected numeric columns t, norm") from e
    f = fit_rates(t, y, args.t_min)
    human = [f"p_plain = {f.p_plain:.6f}  rms {f.residual_plain:.3e}",
             f"p_log   = {f.p_log:.6f}  rms {f.residual_log:.3e}",
             f"preferred: {f.preferred} ({f.npts} points)"]
    _emit(args, human, f.as_dict())
    return EXIT_PASS


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="burgers-asym", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--json", action="store_true", help="machine-readable output")
        p.add_argument("--out-dir")

    p = sub.add_parser("constants", help="verify the closed-form constants by quadrature")
    p.add_argument("--tolerance", type=float, default=1e-8)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("solve", help="run the spectral solver")
    common(p)
    p.add_argument("--config", help="bundled name (std2d, std3d, lin2d, dipole2d, std4d) or key=value file")
    p.add_argument("--grid", type=int, help="override N")
    p.add_argument("--t-end", type=float)
    p.add_argument("--nonlinearity", choices=("squared", "modulus"))
    p.add_argument("--memory-gb", type=float, default=4.0, help="refuse grids whose working set exceeds this")

    for name, hlp in (("expand", "moments and asymptotic profile terms"),
                      ("remainder", "L^q norms of u minus the profiles"),
                      ("verify", "judge a decay-rate claim")):
        p = sub.add_parser(name, help=hlp)
        common(p)
        p.add_argument("--manifest", help="run directory or its manifest.json")
        if name == "expand":
            p.add_argument("--order", type=int)
        if name == "remainder":
            p.add_argument("--cutoff", type=int, default=0)
            p.add_argument("--log", action="store_true", help="also subtract the logarithmic term")
        if name == "verify":
            p.add_argument("--claim", required=True, help=f"{', '.join(CLAIMS)} or {MONOTONE_CLAIM}")
            p.add_argument("--t-min", type=float, default=8.0)

    p = sub.add_parser("fit", help="fit decay exponents to a (t, norm) CSV")
    p.add_argument("--csv")
    p.add_argument("--column", type=int, default=1)
    p.add_argument("--t-min", type=float, default=8.0)
    p.add_argument("--json", action="store_true")
    return ap


COMMANDS = {"constants": cmd_constants, "solve": cmd_solve, "expand": cmd_expand,
            "remainder": cmd_remainder, "verify": cmd_verify, "fit": cmd_fit}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_PASS if e.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except MomentError as e:
        print(f"inconclusive: {e}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except (UsageError, ConfigError, FieldError, FitError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except QuadratureError as e:
        print(f"quadrature error: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
