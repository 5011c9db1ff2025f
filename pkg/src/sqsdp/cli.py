"""Command-line front end: solve runs, rate benchmarks, and structural probes.

Every run writes a per-iteration CSV (schema below) plus a JSON summary that
echoes the full effective configuration, so a run is reproducible from its
artifact alone.  Identical command + seed produces byte-identical CSV.

CSV schema (version 1):
    k, sigma, err, delta_norm, n_alpha, n_beta, n_gamma, sub_iters,
    sub_residual, sub_status
`err` is empty when no reference point is known.

Exit codes: 0 success / KKT reached, 1 usage or input error, 2 iteration
limit, 3 subproblem failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import diagnostics, model, problems, solver
from .model import PrimalDualPoint

CSV_SCHEMA_VERSION = 1
CSV_COLUMNS = [
    "k", "sigma", "err", "delta_norm",
    "n_alpha", "n_beta", "n_gamma",
    "sub_iters", "sub_residual", "sub_status",
]
ENV_OUT_DIR = "SQSDP_OUT"


def _default_out():
    return os.environ.get(ENV_OUT_DIR, "sqsdp-out")


def resolve_problem(ident):
    """Registry id or path to a problem file."""
    ids = problems.registry_ids()
    if ident in ids:
        return problems.get(ident)
    path = Path(ident)
    if path.exists():
        return problems.load(path)
    raise KeyError(f"unknown problem '{ident}'; known ids: {', '.join(ids)}")


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def history_csv(history):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in history:
        na, nb, ng = rec.part_sizes
        writer.writerow([
            rec.k, _fmt(rec.sigma), _fmt(rec.err), _fmt(rec.delta_norm),
            na, nb, ng,
            _fmt(rec.sub_iters), _fmt(rec.sub_residual), _fmt(rec.sub_status),
        ])
    return buf.getvalue()


def atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _config_echo(cfg, extra=None):
    echo = asdict(cfg)
    if extra:
        echo.update(extra)
    return echo


def _point_to_json(v):
    return {"x": v.x.tolist(), "y": v.y.tolist(), "Z": v.Z.tolist()}


def _rate_to_json(rate):
    if rate is None:
        return None
    return {
        "classification": rate.classification,
        "linear_ratios": rate.linear_ratios,
        "quadratic_ratios": rate.quadratic_ratios,
        "n_window": rate.n_window,
        "source": rate.source,
    }


def initial_point(spec, args):
    """Initial iterate from explicit components or a seeded perturbation of v*."""
    explicit = args.x0 is not None or args.y0 is not None or args.Z0 is not None
    if explicit:
        if args.x0 is None:
            raise ValueError("--x0 required when giving an explicit start")
        x = np.array([float(t) for t in args.x0.split(",")])
        y = np.array([float(t) for t in args.y0.split(",")]) if args.y0 else np.zeros(spec.m)
        if args.Z0:
            flat = np.array([float(t) for t in args.Z0.split(",")])
            if flat.size != spec.d * spec.d:
                raise ValueError(f"--Z0 needs {spec.d * spec.d} entries (row-major)")
            Z = flat.reshape(spec.d, spec.d)
        else:
            Z = np.zeros((spec.d, spec.d))
        if x.size != spec.n or y.size != spec.m:
            raise ValueError(f"initial point dims do not match ({spec.n}, {spec.m}, {spec.d})")
        return PrimalDualPoint(x=x, y=y, Z=Z)
    if spec.vstar is None:
        raise ValueError(f"{spec.id} has no reference point; give --x0/--y0/--Z0")
    rng = np.random.default_rng(args.seed)
    return diagnostics.perturb_point(spec.vstar, args.perturb, rng)


def parse_hessian(text):
    """'exact', 'fd', or 'perturbed:<power>[:<coeff>]' (eps = coeff * sigma^power)."""
    if text == "exact":
        return {"hessian_mode": "exact"}
    if text == "fd":
        return {"hessian_mode": "fd"}
    if text.startswith("perturbed"):
        parts = text.split(":")
        power = float(parts[1]) if len(parts) > 1 else 1.0
        coeff = float(parts[2]) if len(parts) > 2 else 1.0
        return {"hessian_mode": "perturbed", "perturb_power": power, "perturb_coeff": coeff}
    raise ValueError(f"bad --hessian value '{text}'")


def _solve_one(spec, v0, cfg):
    prob = spec.to_problem()
    return solver.run(prob, v0, cfg, vstar=spec.vstar)


def cmd_solve(args):
    try:
        spec = resolve_problem(args.problem)
        hess = parse_hessian(args.hessian)
        cfg = solver.SolverConfig(
            tol_sigma=args.tol, max_iters=args.max_iters,
            nu=args.nu, seed=args.seed, **hess,
        )
        v0 = initial_point(spec, args)
    except (KeyError, ValueError, problems.ProblemFormatError,
            problems.ReferenceVerificationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    report = _solve_one(spec, v0, cfg)
    outdir = Path(args.out)
    atomic_write(outdir / "run.csv", history_csv(report.history))
    summary = {
        "csv_schema": CSV_SCHEMA_VERSION,
        "problem": spec.id,
        "config": _config_echo(cfg, {
            "perturb": args.perturb, "seed": args.seed,
            "hessian": args.hessian, "out": str(outdir),
        }),
        "status": report.status,
        "iterations": report.iterations,
        "sigma_final": report.sigma_final,
        "v_final": _point_to_json(report.v),
        "rate": _rate_to_json(report.rate),
    }
    atomic_write(outdir / "report.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"{spec.id}: {report.status} after {report.iterations} iterations, "
          f"sigma = {report.sigma_final:.3e} "
          f"(rate: {report.rate.classification if report.rate else 'n/a'})")
    print(f"artifacts in {outdir}")
    return {"kkt_reached": 0, "max_iters": 2, "subproblem_failure": 3}[report.status]


def _bench_single(spec, radius, trial, cfg, base_seed):
    seed = base_seed + 1000 * trial
    rng = np.random.default_rng(seed)
    v0 = diagnostics.perturb_point(spec.vstar, radius, rng)
    report = _solve_one(spec, v0, cfg)
    return {
        "problem": spec.id,
        "radius": radius,
        "trial": trial,
        "seed": seed,
        "status": report.status,
        "iterations": report.iterations,
        "sigma_final": report.sigma_final,
        "classification": report.rate.classification if report.rate else "n/a",
        "max_quadratic_ratio": max(report.rate.quadratic_ratios, default=None)
        if report.rate else None,
        "errors": [rec.err for rec in report.history],
        "history": report.history,
    }


def cmd_bench(args):
    try:
        specs = problems.registry()
        if args.suite != "all":
            specs = [s for s in specs if args.suite in s.tags]
        if not specs:
            raise ValueError(f"suite '{args.suite}' selects no problems")
        hess = parse_hessian(args.hessian)
        radii = [float(r) for r in args.radii.split(",")]
        cfg = solver.SolverConfig(
            tol_sigma=args.tol, max_iters=args.max_iters, seed=args.seed, **hess,
        )
    except (ValueError, problems.ReferenceVerificationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    jobs = []
    for spec in specs:
        if spec.vstar is None:
            continue
        for radius in radii:
            for trial in range(args.trials):
                jobs.append((spec, radius, trial))
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = list(pool.map(
            lambda job: _bench_single(job[0], job[1], job[2], cfg, args.seed), jobs
        ))

    outdir = Path(args.out)
    rows = []
    gate_failures = []
    by_key = {}
    for res in results:
        by_key.setdefault((res["problem"], res["radius"]), []).append(res)
        name = f"runs/{res['problem']}_r{res['radius']:g}_t{res['trial']}.csv"
        atomic_write(outdir / name, history_csv(res.pop("history")))
        res["csv"] = name

    spec_by_id = {s.id: s for s in specs}
    for (pid, radius), group in sorted(by_key.items()):
        converged = [r for r in group if r["status"] == "kkt_reached"]
        classes = [r["classification"] for r in group]
        informative = [c for c in classes if c not in ("insufficient_data", "n/a")]
        rate_class = informative[0] if informative else "insufficient_data"
        for c in informative:
            if c != rate_class:
                rate_class = "mixed:" + ",".join(sorted(set(informative)))
                break
        qmax = max((r["max_quadratic_ratio"] for r in group
                    if r["max_quadratic_ratio"] is not None), default=None)
        rows.append({
            "problem": pid,
            "radius": radius,
            "trials": len(group),
            "converged": len(converged),
            "median_iterations": float(np.median([r["iterations"] for r in group])),
            "rate_class": rate_class,
            "max_quadratic_ratio": qmax,
        })

    # Rate gate, per problem over its in-basin runs: every run must converge,
    # no per-run classification may contradict quadratic ("superlinear" on a
    # short window does not; "linear"/"none" do), and the pooled windowed
    # ratio evidence across runs must pass the quadratic checks.
    if cfg.hessian_mode == "exact" and cfg.perturb_coeff == 0.0:
        for spec in specs:
            if not ({"srcq", "sosc"} <= spec.tags) or spec.vstar is None:
                continue
            in_basin = [r for r in results
                        if r["problem"] == spec.id and r["radius"] <= spec.basin_radius]
            if not in_basin:
                continue
            informative = [r["classification"] for r in in_basin
                           if r["classification"] not in ("insufficient_data", "n/a")]
            not_conv = [r for r in in_basin if r["status"] != "kkt_reached"]
            contradictions = [c for c in informative if c in ("linear", "none")]
            pooled = solver.pooled_rate_check(r["errors"] for r in in_basin)
            if not_conv or contradictions or not pooled.ok:
                gate_failures.append(
                    f"{spec.id}: converged {len(in_basin) - len(not_conv)}/{len(in_basin)}, "
                    f"classes={sorted(set(informative)) or ['insufficient_data']}, "
                    f"quad_spread={pooled.spread}, tail_ok={pooled.tail_ok}"
                )

    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(v) if isinstance(v, float) or v is None else v
                         for k, v in row.items()})
    atomic_write(outdir / "bench_summary.csv", buf.getvalue())
    summary = {
        "csv_schema": CSV_SCHEMA_VERSION,
        "config": _config_echo(cfg, {
            "suite": args.suite, "radii": radii, "trials": args.trials,
            "seed": args.seed, "hessian": args.hessian, "jobs": args.jobs,
            "out": str(outdir),
        }),
        "table": rows,
        "runs": results,
        "gate_failures": gate_failures,
    }
    atomic_write(outdir / "bench_summary.json",
                 json.dumps(summary, indent=2, sort_keys=True) + "\n")

    for row in rows:
        print(f"{row['problem']:>18} r={row['radius']:<8g} "
              f"converged {row['converged']}/{row['trials']} "
              f"median_iters {row['median_iterations']:g} rate {row['rate_class']}")
    if gate_failures:
        print("rate gate failures:", file=sys.stderr)
        for line in gate_failures:
            print(f"  {line}", file=sys.stderr)
        return 4
    print(f"artifacts in {outdir}")
    return 0


def cmd_probe(args):
    try:
        spec = resolve_problem(args.problem)
        report = diagnostics.probe_report(spec, what=args.what, seed=args.seed)
    except (KeyError, ValueError, problems.ProblemFormatError,
            problems.ReferenceVerificationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    payload = {
        "problem": report.problem_id,
        "what": args.what,
        "seed": args.seed,
        "radii": report.radii,
        "error_bound": [asdict(s) for s in report.error_bound],
        "part_sizes": report.part_sizes,
        "strict_complementarity": report.strict_complementarity,
        "sosc_min_curvature": report.sosc_min_curvature,
        "sosc_accepted": report.sosc_accepted,
        "notes": report.notes,
    }
    outdir = Path(args.out)
    atomic_write(outdir / f"probe_{args.what}.json",
                 json.dumps(payload, indent=2, sort_keys=True) + "\n")
    if report.part_sizes is not None:
        na, nb, ng = report.part_sizes
        strict = "strict" if report.strict_complementarity else "non-strict"
        print(f"{spec.id}: spectrum |alpha|={na} |beta|={nb} |gamma|={ng} ({strict})")
    if report.sosc_min_curvature is not None or args.what in ("sosc", "all"):
        print(f"{spec.id}: sosc min curvature = {report.sosc_min_curvature} "
              f"over {report.sosc_accepted} accepted directions")
    for stats in report.error_bound:
        print(f"{spec.id}: r={stats.radius:g} sigma/err in "
              f"[{stats.min_sigma_over_err:.3g}, {stats.max_sigma_over_err:.3g}]")
    print(f"artifacts in {outdir}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sqsdp",
        description="Stabilized sequential quadratic SDP solver and diagnostics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="run the solver on one problem")
    ps.add_argument("problem", help="registry id or path to a problem file")
    ps.add_argument("--x0", help="comma-separated initial x")
    ps.add_argument("--y0", help="comma-separated initial y")
    ps.add_argument("--Z0", help="comma-separated initial Z, row-major")
    ps.add_argument("--perturb", type=float, default=1e-2,
                    help="start at v* plus a random unit direction scaled by this radius")
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--hessian", default="exact",
                    help="exact | fd | perturbed:<power>[:<coeff>]")
    ps.add_argument("--tol", type=float, default=1e-10, help="termination threshold on sigma")
    ps.add_argument("--max-iters", type=int, default=50)
    ps.add_argument("--nu", type=float, default=None, help="trust ball radius on xi (default off)")
    ps.add_argument("--out", default=_default_out())
    ps.set_defaults(func=cmd_solve)

    pb = sub.add_parser("bench", help="convergence-rate benchmark over the registry")
    pb.add_argument("--suite", default="all", help="'all' or a tag filter")
    pb.add_argument("--radii", default="5e-2,1e-2", help="comma-separated start radii")
    pb.add_argument("--trials", type=int, default=10)
    pb.add_argument("--seed", type=int, default=0)
    pb.add_argument("--hessian", default="exact")
    pb.add_argument("--tol", type=float, default=1e-12)
    pb.add_argument("--max-iters", type=int, default=50)
    pb.add_argument("--jobs", type=int, default=4)
    pb.add_argument("--out", default=_default_out())
    pb.set_defaults(func=cmd_bench)

    pp = sub.add_parser("probe", help="structural probes at the stored solution")
    pp.add_argument("problem")
    pp.add_argument("--what", choices=["error-bound", "spectrum", "sosc", "all"], default="all")
    pp.add_argument("--seed", type=int, default=0)
    pp.add_argument("--out", default=_default_out())
    pp.set_defaults(func=cmd_probe)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
