"""Command-line front end.

Subcommands: generate, estimate, adjust, evaluate, demo, plotdata.
Exit codes are 0 on success, 1 on a runtime failure and 2 on a usage
error. Settings can also come from a JSON file given with ``--config``;
command-line flags take precedence over it.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from xml.sax.saxutils import escape

import numpy as np

from . import __version__
from ._validation import check_fraction
from .adjuster import VARIANTS, adjust, constraint_residuals
from .demo import LinearDemandModel, margins_to_price_box, optimize_two_products
from .domain import MarginGrid, group_by_bin, load_operations, split_by_product, write_operations
from .estimators import ESTIMATORS
from .evaluation import DEFAULT_GRID, HYPERPARAMS, run_ablation
from .exceptions import InvalidInputError, PriceBoundsError
from .profile_io import read_profile, write_profile
from .synthgen import SCENARIOS, generate, load_scenarios


class UsageError(Exception):
    pass


def _unit_scale(args) -> float:
    return 0.01 if getattr(args, "unit", "fraction") == "percent" else 1.0


def _grid(args) -> MarginGrid:
    s = _unit_scale(args)
    try:
        return MarginGrid(args.r_min * s, args.r_max * s, args.delta * s)
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from None


def _add_grid(p, delta=0.001):
    p.add_argument("--r-min", type=float, default=0.003, help="lower end of the margin domain")
    p.add_argument("--r-max", type=float, default=0.011, help="upper end of the margin domain")
    p.add_argument("--delta", type=float, default=delta, help="bin width (step size)")
    p.add_argument("--unit", choices=("fraction", "percent"), default="fraction",
                   help="unit of margins in input files and grid flags")


def _add_estimator(p):
    p.add_argument("--estimator", choices=sorted(ESTIMATORS), default="nr")
    p.add_argument("--q", type=float, default=0.05, help="NR quantile fraction")
    p.add_argument("--min-support", type=float, default=0.9, help="DM minimum support")
    p.add_argument("--nu", type=float, default=0.05, help="ML regularization")
    p.add_argument("--gamma", default="auto", help="ML RBF width or 'auto'")
    p.add_argument("--max-samples", type=int, default=1000, help="ML training subsample cap")
    p.add_argument("--seed", type=int, default=0, help="ML subsampling seed")


def _make_estimator(args, grid):
    try:
        if args.estimator == "nr":
            check_fraction(args.q, "q", 0.0, 0.5)
            kw = {"q": args.q}
        elif args.estimator == "dm":
            check_fraction(args.min_support, "min_support", 0.0, 1.0, low_open=True)
            kw = {"min_support": args.min_support}
        else:
            check_fraction(args.nu, "nu", 0.0, 1.0, low_open=True)
            gamma = args.gamma if args.gamma == "auto" else float(args.gamma)
            kw = {"nu": args.nu, "gamma": gamma, "max_samples": args.max_samples,
                  "random_state": args.seed}
    except (InvalidInputError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    return ESTIMATORS[args.estimator](r_min=grid.r_min, r_max=grid.r_max,
                                      delta=grid.delta, **kw)


def _safe_name(text: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in text) or "product"


def _records_for(args):
    records = load_operations(args.input, percent=args.unit == "percent")
    by_product = split_by_product(records)
    if getattr(args, "product", None):
        missing = [p for p in args.product if p not in by_product]
        if missing:
            raise PriceBoundsError(f"no records for product(s): {', '.join(missing)}")
        by_product = {p: by_product[p] for p in args.product}
    return records, by_product


# --- subcommands -----------------------------------------------------------

def cmd_generate(args):
    grid = _grid(args)
    specs = load_scenarios(args.scenario_config) if args.scenario_config else \
        [SCENARIOS[name] for name in args.scenario]
    records = []
    for k, spec in enumerate(specs):
        spec = spec.with_seed(args.seed + k)
        recs, truth, _ = generate(spec, args.n, grid)
        records.extend(recs)
        if args.truth_dir:
            os.makedirs(args.truth_dir, exist_ok=True)
            write_profile(truth, os.path.join(args.truth_dir, f"{_safe_name(spec.name)}.truth.csv"))
    records.sort(key=lambda r: (r.timestamp, r.product_id))
    if args.output == "-":
        write_operations(records, sys.stdout)
    else:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            write_operations(records, fh)
        print(f"wrote {len(records)} records to {args.output}")
    return 0


def cmd_estimate(args):
    grid = _grid(args)
    est = _make_estimator(args, grid)
    _, by_product = _records_for(args)
    if not by_product:
        raise PriceBoundsError("input holds no records")
    os.makedirs(args.out_dir, exist_ok=True)
    for product in sorted(by_product):
        binned = group_by_bin(by_product[product], grid)
        est.fit_binned(binned)
        path = os.path.join(args.out_dir, f"{_safe_name(product)}.{args.estimator}.{args.format}")
        write_profile(est.profile_, path, args.format)
        print(f"{product}: {int(binned.counts.sum())} records in domain, "
              f"{binned.n_excluded} excluded -> {path}")
    return 0


def cmd_adjust(args):
    prof = read_profile(args.input)
    adjusted = adjust(prof, VARIANTS[args.variant])
    fmt = args.format or ("json" if args.output.endswith(".json") else "csv")
    write_profile(adjusted, args.output, fmt)
    res = constraint_residuals(adjusted, VARIANTS[args.variant])
    report = args.residuals or os.path.splitext(args.output)[0] + ".residuals.csv"
    with open(report, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["constraint", "max_violation"])
        for name, v in res.items():
            w.writerow([name, f"{v:.3e}"])
    print(f"{args.variant}: wrote {args.output}")
    for name, v in res.items():
        print(f"  {name:<16} max violation {v:.3e}")
    return 0


def _parse_values(text, name):
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"--{name} expects comma-separated numbers, got {text!r}") from None
    if not vals:
        raise UsageError(f"--{name} is empty")
    return vals


def cmd_evaluate(args):
    grids = {"nr": args.q_grid, "dm": args.support_grid, "ml": args.nu_grid}
    grid = {}
    for est in args.estimators:
        vals = _parse_values(grids[est], f"{est}-grid")
        for v in vals:
            try:
                if est == "nr":
                    check_fraction(v, "q", 0.0, 0.5)
                else:
                    check_fraction(v, HYPERPARAMS[est], 0.0, 1.0, low_open=True)
            except InvalidInputError as exc:
                raise UsageError(str(exc)) from None
        grid[est] = vals
    s = _unit_scale(args)
    steps = tuple(v * s for v in _parse_values(args.steps, "steps"))
    if args.k < 2:
        raise UsageError("--k must be at least 2")
    records, by_product = _records_for(args)
    report = run_ablation(records, products=sorted(by_product), grid=grid, step_sizes=steps,
                          k=args.k, r_min=args.r_min * s, r_max=args.r_max * s,
                          ocsvm_options={"max_samples": args.max_samples,
                                         "random_state": args.seed})
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        fh.write(report.to_csv())
    print(report.to_table())
    print(f"\nwrote {len(report.rows)} rows to {args.output}")
    return 1 if report.failures and args.strict else 0


def cmd_demo(args):
    try:
        model = LinearDemandModel(*args.model)
    except TypeError:
        raise UsageError("--model needs six numbers a11 a12 a21 a22 b1 b2") from None
    if args.profiles:
        if not (args.margins and args.costs):
            raise UsageError("--profiles needs --margins and --costs")
        s = _unit_scale(args)
        boxes = [margins_to_price_box(read_profile(path), m * s, c)
                 for path, m, c in zip(args.profiles, args.margins, args.costs)]
        lower = [b[0] for b in boxes]
        upper = [b[1] for b in boxes]
    else:
        lower, upper = args.box[0::2], args.box[1::2]
    try:
        result = optimize_two_products(model, lower, upper)
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from None
    print(f"price box: p1 in [{lower[0]:.6g}, {upper[0]:.6g}], "
          f"p2 in [{lower[1]:.6g}, {upper[1]:.6g}]")
    print(result.summary())
    return 0


def _svg(points, profile, title):
    W, H, pad = 640, 480, 50
    g = profile.grid
    lo = min(g.r_min, float(profile.lower.min()))
    hi = max(g.r_max, float(profile.upper.max()))
    if len(points):
        lo, hi = min(lo, points[:, 1].min()), max(hi, points[:, 1].max())

    def sx(v):
        return pad + (v - g.r_min) / (g.r_max - g.r_min) * (W - 2 * pad)

    def sy(v):
        return H - pad - (v - lo) / (hi - lo) * (H - 2 * pad)

    def steps(values):
        pts = []
        for a, b, v in zip(g.lower_edges, g.upper_edges, values):
            pts += [f"{sx(a):.2f},{sy(v):.2f}", f"{sx(b):.2f},{sy(v):.2f}"]
        return " ".join(pts)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<line x1="{pad}" y1="{H - pad}" x2="{W - pad}" y2="{H - pad}" stroke="black"/>',
           f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{H - pad}" stroke="black"/>',
           f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle" font-size="12">current margin</text>',
           f'<text x="15" y="{H / 2}" font-size="12" transform="rotate(-90 15 {H / 2})" '
           f'text-anchor="middle">next margin</text>']
    for c, n in points:
        out.append(f'<circle cx="{sx(c):.2f}" cy="{sy(n):.2f}" r="1.5" fill="gray" '
                   f'fill-opacity="0.4"/>')
    out.append(f'<polyline points="{steps(profile.lower)}" fill="none" stroke="blue" '
               f'stroke-width="2"/>')
    out.append(f'<polyline points="{steps(profile.upper)}" fill="none" stroke="red" '
               f'stroke-width="2"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cmd_plotdata(args):
    prof = read_profile(args.profile)
    g = prof.grid
    points = np.empty((0, 2))
    if args.input:
        _, by_product = _records_for(args)
        recs = [r for p in sorted(by_product) for r in by_product[p]]
        points = group_by_bin(recs, g).points()
    prefix = args.output_prefix
    with open(prefix + "_scatter.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["current_margin", "next_margin"])
        for c, n in points:
            w.writerow([repr(float(c)), repr(float(n))])
    with open(prefix + "_bounds.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_index", "x_left", "x_right", "lower", "upper"])
        for i in range(prof.n_bins):
            w.writerow([i + 1, repr(float(g.lower_edges[i])), repr(float(g.upper_edges[i])),
                        repr(float(prof.lower[i])), repr(float(prof.upper[i]))])
    written = [prefix + "_scatter.csv", prefix + "_bounds.csv"]
    if args.svg:
        path = prefix + ".svg"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(_svg(points, prof, args.title or str(prof.provenance)))
        written.append(path)
    print(f"{len(points)} points, {prof.n_bins} bins -> {', '.join(written)}")
    return 0


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pricebounds",
        description="Estimate, shape-adjust and evaluate profit-margin bounds.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="JSON file with default values for the subcommand flags")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("generate", help="write synthetic operations")
    p.add_argument("-o", "--output", default="-", help="output CSV ('-' for stdout)")
    p.add_argument("-n", type=int, default=5000, help="records per scenario")
    p.add_argument("--scenario", nargs="+", choices=sorted(SCENARIOS), default=sorted(SCENARIOS))
    p.add_argument("--scenario-config", help="JSON file with scenario definitions")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--truth-dir", help="also write the true profile of each scenario here")
    _add_grid(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("estimate", help="estimate bounds per product")
    p.add_argument("input", help="operations CSV")
    p.add_argument("--out-dir", default=".", help="directory for the profile files")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--product", nargs="+", help="restrict to these products")
    _add_estimator(p)
    _add_grid(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("adjust", help="apply a shape-constraint variant to a profile")
    p.add_argument("input", help="estimated profile (CSV or JSON)")
    p.add_argument("-o", "--output", required=True, help="adjusted profile path")
    p.add_argument("--variant", choices=list(VARIANTS), default="MN-CC")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--residuals", help="constraint residual report path")
    p.set_defaults(func=cmd_adjust)

    p = sub.add_parser("evaluate", help="chronological cross-validation of all variants")
    p.add_argument("input", help="operations CSV")
    p.add_argument("-o", "--output", default="report.csv")
    p.add_argument("--estimators", nargs="+", choices=sorted(HYPERPARAMS),
                   default=sorted(HYPERPARAMS))
    p.add_argument("--q-grid", default=",".join(map(str, DEFAULT_GRID["nr"])))
    p.add_argument("--support-grid", default=",".join(map(str, DEFAULT_GRID["dm"])))
    p.add_argument("--nu-grid", default=",".join(map(str, DEFAULT_GRID["ml"])))
    p.add_argument("--steps", default="0.001,0.0001", help="comma-separated step sizes")
    p.add_argument("--k", type=int, default=5, help="number of folds")
    p.add_argument("--product", nargs="+", help="restrict to these products")
    p.add_argument("--max-samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strict", action="store_true", help="exit 1 if any cell failed")
    _add_grid(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("demo", help="two-product revenue maximization")
    p.add_argument("--model", nargs=6, type=float, default=[-1, 0, 0, -1, 10, 10],
                   metavar=("A11", "A12", "A21", "A22", "B1", "B2"))
    p.add_argument("--box", nargs=4, type=float, default=[0, 10, 0, 10],
                   metavar=("LO1", "HI1", "LO2", "HI2"))
    p.add_argument("--profiles", nargs=2, help="bound profiles of the two products")
    p.add_argument("--margins", nargs=2, type=float, help="current margins of the two products")
    p.add_argument("--costs", nargs=2, type=float, help="unit costs of the two products")
    p.add_argument("--unit", choices=("fraction", "percent"), default="fraction")
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("plotdata", help="figure-ready series (and optional SVG)")
    p.add_argument("profile", help="bounds profile (CSV or JSON)")
    p.add_argument("--input", help="operations CSV for the scatter series")
    p.add_argument("--product", nargs="+", help="products to include in the scatter")
    p.add_argument("-o", "--output-prefix", default="plot")
    p.add_argument("--svg", action="store_true", help="also render a static SVG")
    p.add_argument("--title")
    p.add_argument("--unit", choices=("fraction", "percent"), default="fraction")
    p.set_defaults(func=cmd_plotdata)
    return parser


def _apply_config(parser, argv):
    """Re-parse with defaults taken from ``--config`` (flags still win)."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return parser.parse_args(argv)
    try:
        with open(known.config, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config {known.config}: {exc}")
    if not isinstance(cfg, dict):
        parser.error("config file must hold a JSON object")
    args = parser.parse_args(argv)
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    dests = {a.dest for a in subparser._actions}
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    unknown = sorted(set(cfg) - dests)
    if unknown:
        parser.error(f"unknown config key(s) for {args.command}: {', '.join(unknown)}")
    subparser.set_defaults(**cfg)
    args = parser.parse_args(argv)
    # argparse does not check defaults against choices.
    for action in subparser._actions:
        value = getattr(args, action.dest, None)
        if action.choices is None or value is None:
            continue
        values = value if isinstance(value, list) else [value]
        bad = [v for v in values if v not in action.choices]
        if bad:
            parser.error(f"config value {bad[0]!r} for {action.dest} not in {list(action.choices)}")
    return args


def main(argv=None) -> int:
    parser = build_parser()
    args = _apply_config(parser, argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"pricebounds {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (PriceBoundsError, OSError) as exc:
        print(f"pricebounds {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
