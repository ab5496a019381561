"""Command line: ``nise replicate | estimate | simulate``.

Exit status 0 on success, 2 for configuration errors, 3 for data errors and
4 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from nise import __version__
from nise.bootstrap import DEFAULT_B
from nise.dataset import (
    CRIME_SCHEMA,
    PERIOD_EFFECTS,
    ModelSpec,
    crime_spec,
    dump_panel,
    load_crime,
    load_panel,
    transform_panel,
)
from nise.errors import ConfigError, DataError, NiseError
from nise.estimators import DOF_CONVENTIONS, METHODS
from nise.montecarlo import SyntheticDGP, experiment, nise_plim, ols_plim
from nise.replication import DEFAULT_SEED, Report, replicate_crime, run_estimation
from nise.robust_scale import SCALES

FORMATS = ("text", "csv", "json")


def _csv_list(text: str | None) -> list[str]:
    if not text:
        return []
    return [t.strip() for t in text.split(",") if t.strip()]


def _parse_schema(value) -> dict[str, str]:
    """A schema is a dict, a JSON file path, or ``logical=physical`` pairs."""
    if value is None:
        return dict(CRIME_SCHEMA)
    if isinstance(value, dict):
        return {str(k): str(v) for k, v in value.items()}
    path = Path(value)
    if path.is_file():
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"schema file {value}: {exc}") from None
        return _parse_schema(data)
    schema = {}
    for pair in _csv_list(value):
        if "=" not in pair:
            raise ConfigError(f"schema entry {pair!r} is not logical=physical")
        k, v = pair.split("=", 1)
        schema[k.strip()] = v.strip()
    return schema


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of option defaults (keys as flag names)")
    p.add_argument("--format", choices=FORMATS, default="text")
    p.add_argument("--out", help="output file (default: standard output)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="master seed")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_estimation(p: argparse.ArgumentParser, period_choices, period_default) -> None:
    p.add_argument("--data", help="delimited text file with a header row")
    p.add_argument("--schema", help="JSON file or logical=physical,... column map")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--estimators", default=",".join(METHODS),
                   help="comma-separated subset of ols,tsls,nise")
    p.add_argument("--period-effects", choices=period_choices, default=period_default)
    p.add_argument("--period-dummies", dest="period_effects", action="store_const",
                   const="dummies", help="same as --period-effects dummies")
    p.add_argument("--bootstrap-reps", type=int, default=DEFAULT_B, help="0 disables")
    p.add_argument("--scale", choices=SCALES, default="qn")
    p.add_argument("--qn-correction", action="store_true",
                   help="apply the small-sample Qn correction factor")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--redemean", action="store_true",
                   help="experimental: redo the within transform on each resample")
    p.add_argument("--dump", help="write the transformed panel to this file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nise",
        description="OLS, TSLS and NISE estimation of a simultaneous equation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    rep = sub.add_parser("replicate", help="reproduce the crime-model table")
    _add_common(rep)
    _add_estimation(rep, ("auto", *PERIOD_EFFECTS), "auto")
    rep.add_argument("--dof-convention", choices=("auto", *DOF_CONVENTIONS), default="auto")

    est = sub.add_parser("estimate", help="estimate a user-specified equation")
    _add_common(est)
    _add_estimation(est, PERIOD_EFFECTS, "none")
    est.add_argument("--dof-convention", choices=DOF_CONVENTIONS, default="plain")
    est.add_argument("--dependent")
    est.add_argument("--endogenous", default="")
    est.add_argument("--exogenous", default="")
    est.add_argument("--instruments", default="")
    est.add_argument("--group", default="county", help="logical name of the group key")
    est.add_argument("--period", default="year", help="logical name of the period key")
    est.add_argument("--no-log", dest="log_transform", action="store_false")
    est.add_argument("--no-demean", dest="within_demean", action="store_false")

    sim = sub.add_parser("simulate", help="Monte Carlo bias/RMSE experiment")
    _add_common(sim)
    d = SyntheticDGP()
    sim.add_argument("--gamma", type=float, default=d.gamma_true)
    sim.add_argument("--beta", type=float, default=d.beta_true)
    sim.add_argument("--feedback", type=float, default=d.feedback)
    sim.add_argument("--strength", type=float, default=d.instrument_strength)
    sim.add_argument("--noise-sd", default=",".join(str(s) for s in d.noise_sd))
    sim.add_argument("--error-corr", type=float, default=d.error_corr)
    sim.add_argument("--n-grid", default="500,5000")
    sim.add_argument("--reps", type=int, default=200)
    sim.add_argument("--estimators", default=",".join(METHODS))
    return parser


def parse_args(argv: list[str] | None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            defaults = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        sub = parser._subparsers._group_actions[0].choices[args.command]  # noqa: SLF001
        known = {a.dest for a in sub._actions}  # noqa: SLF001
        unknown = sorted(set(k.replace("-", "_") for k in defaults) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in defaults.items()})
        args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------------------
# formatting


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.3f}"


def format_text(report: Report) -> str:
    methods = report.methods
    names = [report.name(lab) for lab in report.labels]
    w = max(len(n) for n in names) + 2
    lines = ["Estimates (coefficient over standard error)", ""]
    lines.append(" " * w + "".join(f"{m.upper():>11}" for m in methods))
    for lab, name in zip(report.labels, names):
        lines.append(f"{name:<{w}}" + "".join(
            f"{_fmt(report.coefficients[m].get(lab)):>11}" for m in methods))
        lines.append(" " * w + "".join(
            f"{_fmt(report.standard_errors.get(m, {}).get(lab)):>11}" for m in methods))
    if report.differences:
        pairs = list(dict.fromkeys(d.estimators for d in report.differences))
        dlabels = list(dict.fromkeys(d.label for d in report.differences))
        table = {(d.estimators, d.label): d for d in report.differences}
        lines += ["", " " * w + "".join(f"{a + '-' + b:>11}" for a, b in pairs)]
        for lab in dlabels:
            name = report.name(lab)
            lines.append(f"{name:<{w}}" + "".join(
                f"{_fmt(table[(p, lab)].point_diff):>11}" for p in pairs))
            lines.append(" " * w + "".join(
                f"{_fmt(table[(p, lab)].robust_se):>11}" for p in pairs))
    lines += ["", "Standard errors:"]
    lines += [f"  {m.upper()}: {kind}" for m, kind in report.se_kind.items()]
    lines += ["", "Configuration:"]
    lines += [f"  {k} = {json.dumps(v)}" for k, v in report.config.items()]
    lines += ["", "Diagnostics:"]
    lines += [f"  {k} = {json.dumps(v)}" for k, v in report.diagnostics.items()]
    return "\n".join(lines) + "\n"


def _rows_to_csv(config: dict, rows: list[dict], diagnostics: dict | None = None) -> str:
    buf = io.StringIO()
    fields = list(rows[0]) if rows else ["section", "variable", "method", "statistic", "value"]
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    blank = dict.fromkeys(fields, "")
    for k, v in config.items():
        writer.writerow({**blank, "section": "config", "variable": k, "value": json.dumps(v)})
    if diagnostics is not None:
        writer.writerow({**blank, "section": "diagnostics", "value": json.dumps(diagnostics)})
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def render(report: Report, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2) + "\n"
    if fmt == "csv":
        return _rows_to_csv(report.config, report.rows(), report.diagnostics)
    return format_text(report)


def render_simulation(config: dict, cells, plims: dict, fmt: str) -> str:
    rows = [asdict(c) for c in cells]
    if fmt == "json":
        return json.dumps({"config": config, "plim": plims, "rows": rows}, indent=2) + "\n"
    if fmt == "csv":
        return _rows_to_csv({**config, "plim": plims}, rows)
    head = f"{'n':>8} {'estimator':>9} {'mean bias':>10} {'median bias':>12} " \
           f"{'rmse':>8} {'median |err|':>13} {'qn':>8}"
    lines = ["Monte Carlo: coefficient on y2", "", head]
    for c in cells:
        lines.append(
            f"{c.n:>8} {c.estimator:>9} {c.mean_bias:>10.4f} {c.median_bias:>12.4f} "
            f"{c.rmse:>8.4f} {c.median_abs_error:>13.4f} {c.qn_dispersion:>8.4f}"
        )
    lines += ["", "Probability limits:"]
    lines += [f"  {k} = {v:.6f}" for k, v in plims.items()]
    lines += ["", "Configuration:"]
    lines += [f"  {k} = {json.dumps(v)}" for k, v in config.items()]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# commands


def _load(args, schema, group="county", period="year"):
    try:
        return load_panel(args.data, schema, group=group, period=period, delimiter=args.delimiter)
    except OSError as exc:
        raise DataError(f"cannot read {args.data}: {exc}") from None


def _dump(args, panel, spec) -> None:
    if args.dump:
        with open(args.dump, "w", newline="") as fh:
            dump_panel(transform_panel(panel, spec), fh, delimiter=args.delimiter)


def cmd_replicate(args) -> str:
    panel = None
    source = None
    schema = _parse_schema(args.schema)
    if args.data:
        panel = _load(args, schema)
        source = str(args.data)
    report = replicate_crime(
        panel,
        methods=_csv_list(args.estimators),
        period_effects=args.period_effects,
        dof_convention=args.dof_convention,
        B=args.bootstrap_reps,
        master_seed=args.seed,
        scale=args.scale,
        workers=args.workers,
        redemean=args.redemean,
        qn_correction=args.qn_correction,
        data_source=source,
    )
    if args.dump:
        spec = crime_spec(report.config["period_effects"])
        _dump(args, panel if panel is not None else load_crime(), spec)
    return render(report, args.format)


def cmd_estimate(args) -> str:
    if not args.data:
        raise ConfigError("estimate requires --data")
    if not args.dependent:
        raise ConfigError("estimate requires --dependent")
    spec = ModelSpec(
        dependent=args.dependent,
        endogenous=tuple(_csv_list(args.endogenous)),
        exogenous=tuple(_csv_list(args.exogenous)),
        instruments=tuple(_csv_list(args.instruments)),
        log_transform=args.log_transform,
        within_demean=args.within_demean,
        period_effects=args.period_effects,
    )
    methods = _csv_list(args.estimators)
    if "tsls" in methods and not spec.instruments:
        raise ConfigError("TSLS requested but no --instruments given")
    schema = _parse_schema(args.schema)
    if args.schema is None:
        # without a schema, logical names are the file's own headers
        schema = {c: c for c in (args.group, args.period, *spec.columns)}
    panel = _load(args, schema, args.group, args.period)
    _dump(args, panel, spec)
    report = run_estimation(
        panel, spec,
        methods=methods,
        B=args.bootstrap_reps,
        master_seed=args.seed,
        scale=args.scale,
        dof_convention=args.dof_convention,
        workers=args.workers,
        redemean=args.redemean,
        qn_correction=args.qn_correction,
        data_source=str(args.data),
        schema=schema,
    )
    report.config["command"] = "estimate"
    return render(report, args.format)


def cmd_simulate(args) -> str:
    try:
        noise = tuple(float(s) for s in _csv_list(args.noise_sd))
        n_grid = [int(s) for s in _csv_list(args.n_grid)]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    dgp = SyntheticDGP(
        gamma_true=args.gamma,
        beta_true=args.beta,
        feedback=args.feedback,
        instrument_strength=args.strength,
        noise_sd=noise,
        error_corr=args.error_corr,
    )
    methods = [m for m in METHODS if m in {e.lower() for e in _csv_list(args.estimators)}]
    if not methods:
        raise ConfigError("no valid estimators selected")
    cells = experiment(dgp, n_grid, args.reps, seed=args.seed, methods=methods)
    config = {
        "command": "simulate",
        "dgp": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(dgp).items()},
        "n_grid": n_grid,
        "reps": args.reps,
        "seed": args.seed,
        "estimators": methods,
    }
    plims = {"gamma_true": dgp.gamma_true, "OLS": ols_plim(dgp), "NISE": nise_plim(dgp)}
    return render_simulation(config, cells, plims, args.format)


COMMANDS = {"replicate": cmd_replicate, "estimate": cmd_estimate, "simulate": cmd_simulate}


def main(argv: list[str] | None = None) -> int:
    try:
        args = parse_args(argv)
    except NiseError as exc:
        print(f"nise: error: {exc}", file=sys.stderr)
        return exc.exit_code
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        text = COMMANDS[args.command](args)
    except NiseError as exc:
        print(f"nise: error: {exc}", file=sys.stderr)
        return exc.exit_code
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
