"""Command-line front end: estimate on user tables, simulation studies,
intercept functionals, the expansion lab, and table generation.

Exit codes: 0 success, 2 usage error, 3 data/model error, 4 when a requested
estimate has failure status (results are still emitted).  All diagnostics go
to stderr as single lines.  The default seed is fixed so bare invocations
are reproducible; the MSEKIT_SEED environment variable overrides it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .adjust import Estimator, estimator_supported, z_vector
from .approx import compare_expansions
from .estimators import estimate
from .harness import SimSummary, run_study
from .patterns import CountTable, ModelSpec, canonical_patterns, parse_model
from .scenarios import ScenarioSolveError, ScenarioSpec, load_scenarios, replication_rng, sample_table, solve_cell_probabilities

DEFAULT_SEED = 12345

_DSE_DEFAULT = (Estimator.LP, Estimator.BAILEY, Estimator.EB, Estimator.CHAPMAN_DSE)
_MSE_DEFAULT = (Estimator.ML, Estimator.EB, Estimator.CFK, Estimator.RL, Estimator.CHAP_MSE)


def _num(x: float) -> str:
    """Shortest float form that parses back to the same value."""
    return repr(float(x))


def _seed_default() -> int:
    env = os.environ.get("MSEKIT_SEED")
    return int(env) if env else DEFAULT_SEED


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _parse_estimators(text: str | None, k: int) -> list[Estimator]:
    if text is None:
        return list(_DSE_DEFAULT if k == 2 else _MSE_DEFAULT)
    names = [t.strip().lower() for t in text.split(",") if t.strip()]
    return [Estimator(name) for name in names]


def cmd_estimate(args) -> int:
    table = CountTable.from_text(Path(args.input).read_text())
    if args.model:
        model = parse_model(args.model, table.k)
    else:
        model = ModelSpec.saturated(table.k)
    if model.k != table.k:
        raise ValueError(f"model is for k={model.k} but the table has k={table.k}")
    if args.all_estimators:
        estimators = [e for e in Estimator if estimator_supported(e, table.k)]
    else:
        estimators = _parse_estimators(args.estimator or "ml", table.k)
    results = [estimate(table, model, est) for est in estimators]

    lines = []
    if args.format == "csv":
        lines.append("estimator,model,m000,n_observed,n_hat,ci_low,ci_high,status")
        for r in results:
            ci_l = _num(r.ci_low) if r.ci_low is not None else ""
            ci_h = _num(r.ci_high) if r.ci_high is not None else ""
            lines.append(
                f"{r.estimator},{model.label()},{_num(r.m000)},{_num(r.n_observed)},"
                f"{_num(r.n_hat)},{ci_l},{ci_h},{r.status}"
            )
    else:
        lines.append(f"model {model.label()} on {args.input} (n = {table.observed_total():g})")
        for r in results:
            ci = ""
            if r.ci_low is not None and r.ci_high is not None:
                ci = f"  m000 95% CI [{r.ci_low:.4f}, {r.ci_high:.4f}]"
            lines.append(
                f"  {r.estimator.value:12s} m000 = {r.m000:.4f}  N_hat = {r.n_hat:.4f}{ci}  [{r.status}]"
            )
    _write("\n".join(lines) + "\n", args.out)
    return 4 if any(not r.ok for r in results) else 0


def cmd_zvector(args) -> int:
    model = parse_model(args.pairs if "=" in args.pairs else f"pairs={args.pairs}", args.k)
    zv = z_vector(model)
    lines = ["pattern,z,z_neg"]
    for pattern, z, z_neg in zip(canonical_patterns(args.k), zv.z, zv.z_neg):
        lines.append(f"{pattern},{_num(z)},{_num(z_neg)}")
    _write("\n".join(lines) + "\n", args.out)
    return 0


def _fit_model_for(spec: ScenarioSpec, fit: str) -> ModelSpec:
    if fit == "true":
        return spec.generating_model
    if fit in ("saturated", "sat"):
        return ModelSpec.saturated(spec.k)
    return parse_model(fit, spec.k)


def _stars_mark(s: SimSummary) -> str:
    return "*" * s.stars + ("†" if s.dagger else "")


def _simulate_csv(rows: list[SimSummary]) -> str:
    lines = ["scenario,estimator,mean,sd,rmse,t,p,stars,dagger,n_bar,failures"]
    for s in rows:
        lines.append(
            f"{s.scenario_id},{s.estimator},{_num(s.mean_nhat)},{_num(s.sd)},{_num(s.rmse)},"
            f"{_num(s.t_stat)},{_num(s.p_value)},{s.stars},{int(s.dagger)},"
            f"{_num(s.mean_n)},{s.failure_count}"
        )
    return "\n".join(lines) + "\n"


def _simulate_md(specs, estimators, by_scenario) -> str:
    """Pivot tables: scenarios as rows, one column per estimator."""
    names = [e.value for e in estimators]
    blocks = []
    for title, field in (("Mean", "mean_nhat"), ("SD", "sd"), ("RMSE", "rmse")):
        lines = [f"### {title}", ""]
        lines.append("| S | N | n_bar | " + " | ".join(names) + " |")
        lines.append("|---" * (3 + len(names)) + "|")
        for spec in specs:
            rows = by_scenario[spec.id]
            cells = []
            n_bar = ""
            for est in estimators:
                s = rows.get(est)
                if s is None:
                    cells.append("n/a")
                    continue
                n_bar = f"{s.mean_n:.1f}"
                value = getattr(s, field)
                mark = _stars_mark(s) if field == "mean_nhat" else ("†" if s.dagger else "")
                cells.append(f"{value:.1f}{mark}")
            lines.append(f"| {spec.id} | {spec.N} | {n_bar} | " + " | ".join(cells) + " |")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def cmd_simulate(args) -> int:
    specs = load_scenarios(args.scenarios)
    if args.only:
        wanted = {s.strip() for s in args.only.split(",")}
        unknown = wanted - {s.id for s in specs}
        if unknown:
            raise ValueError(f"unknown scenario ids: {sorted(unknown)}")
        specs = tuple(s for s in specs if s.id in wanted)
    if not specs:
        raise ValueError("no scenarios selected")

    requested: list[Estimator] | None = None
    if args.estimators:
        requested = _parse_estimators(args.estimators, specs[0].k)

    all_rows: list[SimSummary] = []
    by_scenario: dict[str, dict[Estimator, SimSummary]] = {}
    display_order: list[Estimator] = []
    for spec in specs:
        estimators = requested if requested is not None else _parse_estimators(None, spec.k)
        for est in estimators:
            if est not in display_order:
                display_order.append(est)
        supported = [e for e in estimators if estimator_supported(e, spec.k)]
        fitted = _fit_model_for(spec, args.fit)
        rows = run_study(spec, fitted, supported, args.reps, args.seed, threads=args.threads)
        all_rows.extend(rows)
        by_scenario[spec.id] = {r.estimator: r for r in rows}

    if args.format == "md":
        _write(_simulate_md(specs, display_order, by_scenario), args.out)
    else:
        _write(_simulate_csv(all_rows), args.out)
    return 0


def cmd_approx(args) -> int:
    report = compare_expansions(args.m, args.draws, args.seed)
    lines = ["series,terms,value,delta"]
    lines.append(f"empirical,0,{_num(report.empirical_target)},0.0")
    for i in range(5):
        lines.append(f"taylor,{i + 1},{_num(report.taylor[i])},{_num(report.taylor_delta[i])}")
    for i in range(5):
        lines.append(
            f"inverse_factorial,{i + 1},{_num(report.inverse_factorial[i])},"
            f"{_num(report.inverse_factorial_delta[i])}"
        )
    _write("\n".join(lines) + "\n", args.out)
    return 0


def cmd_gen(args) -> int:
    specs = load_scenarios(args.scenarios)
    matches = [s for s in specs if s.id == args.id] if args.id else list(specs)
    if len(matches) != 1:
        raise ValueError("select exactly one scenario with --id")
    spec = matches[0]
    q = solve_cell_probabilities(spec)
    table = sample_table(q, spec.N, replication_rng(args.seed, spec.id, args.rep))
    _write(table.to_text(), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mse-kit",
        description="Dual- and multiple-systems population-size estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate population size from a count table")
    p.add_argument("--input", required=True, help="count table file (k=<int> header, pattern,count lines)")
    p.add_argument("--model", help='model string, e.g. "k=3;pairs=AB,BC", "sat", "ind" (default: sat)')
    p.add_argument("--estimator", help="comma-separated estimator names (default: ml)")
    p.add_argument("--all-estimators", action="store_true", help="run every estimator defined for the table")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="Monte Carlo study over scenarios")
    p.add_argument("--scenarios", required=True, help="builtin:dse, builtin:mse, or a JSON file")
    p.add_argument("--only", help="comma-separated scenario ids to keep")
    p.add_argument("--fit", default="true", help='fitted model: "true", "saturated", or a model string')
    p.add_argument("--estimators", help="comma-separated estimator names (default depends on k)")
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=_seed_default())
    p.add_argument("--threads", type=int, default=None, help="worker processes (default: all cores)")
    p.add_argument("--format", choices=("csv", "md"), default="csv")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("zvector", help="print the intercept functional of a model design")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--pairs", default="none", help='"none", "all", "sat", or pairs like "AB,BC"')
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_zvector)

    p = sub.add_parser("approx", help="Taylor vs inverse-factorial expansion comparison")
    p.add_argument("--m", type=float, default=20.0)
    p.add_argument("--draws", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=_seed_default())
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_approx)

    p = sub.add_parser("gen", help="sample one contingency table from a scenario")
    p.add_argument("--scenarios", required=True, help="builtin:dse, builtin:mse, or a JSON file")
    p.add_argument("--id", help="scenario id (required when the source has several)")
    p.add_argument("--rep", type=int, default=0, help="replication index of the stream")
    p.add_argument("--seed", type=int, default=_seed_default())
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_gen)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError, ScenarioSolveError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
