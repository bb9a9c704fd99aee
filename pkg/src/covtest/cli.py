"""Command-line interface: ``covtest test | simulate | ci``."""

import argparse
import csv
import json
import os
import sys

import numpy as np
import yaml

from . import hypothesis as hyp
from .engine import KINDS, ResamplingPlan, method_from_name, run_test, trace_confidence_interval
from .errors import CovTestError, DimensionMismatch, GroupTooSmall, ParseError
from .estimate import GroupSample, empirical_cov
from .report import format_tests, scenario_csv, scenario_text, timing_csv, timing_text
from .simulate import SimConfig, power_study, timing_study, type1_study

EXIT_DATA = 3
EXIT_DIMENSION = 4
EXIT_OTHER = 1


def ingest(path, group_column="group"):
    """Read a header CSV into one :class:`GroupSample` per group label.

    Groups keep the order of their first appearance. Every column other
    than ``group_column`` is a numeric component.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file", row=1) from None
        header = [h.strip() for h in header]
        if group_column not in header:
            raise ParseError(f"{path}: no column named {group_column!r}", row=1)
        gcol = header.index(group_column)
        value_cols = [j for j in range(len(header)) if j != gcol]
        if not value_cols:
            raise ParseError(f"{path}: no numeric columns", row=1)
        groups = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DimensionMismatch(
                    f"{path}: row {lineno} has {len(row)} cells, header has {len(header)}")
            values = []
            for j in value_cols:
                cell = row[j].strip()
                try:
                    x = float(cell)
                except ValueError:
                    raise ParseError(f"{path}: row {lineno}, column {header[j]!r}: "
                                     f"cannot parse {cell!r} as a number",
                                     row=lineno, col=header[j]) from None
                if not np.isfinite(x):
                    raise ParseError(f"{path}: row {lineno}, column {header[j]!r}: "
                                     f"non-finite value {cell!r}", row=lineno, col=header[j])
                values.append(x)
            groups.setdefault(row[gcol].strip(), []).append(values)
    out = []
    for label, rows in groups.items():
        if len(rows) < 2:
            raise GroupTooSmall(f"{path}: group {label!r} has {len(rows)} row(s); need >= 2")
        out.append(GroupSample(label, np.array(rows)))
    if not out:
        raise ParseError(f"{path}: no data rows", row=2)
    return out


def write_groups(path, groups, group_column="group", labels=None):
    """Write groups to a CSV that :func:`ingest` reads back exactly."""
    labels = labels or [f"g{i + 1}" for i in range(len(groups))]
    d = np.asarray(groups[0]).shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([group_column] + [f"x{j + 1}" for j in range(d)])
        for label, X in zip(labels, groups):
            for row in np.asarray(X, dtype=float):
                w.writerow([label] + [repr(float(x)) for x in row])


def _hypothesis(args, a, d):
    name = args.hypothesis
    if os.path.isfile(name):
        with open(name) as fh:
            spec = hyp.HypothesisSpec.from_dict(yaml.safe_load(fh))
        hyp.validate(spec, a, d)
        if spec.a != a or spec.d != d:
            raise DimensionMismatch(
                f"hypothesis is for a={spec.a}, d={spec.d}; data have a={a}, d={d}")
        return spec
    params = {}
    if args.gamma is not None:
        params["gamma"] = args.gamma
    if args.levels_b is not None:
        params["b"] = args.levels_b
        params["effect"] = args.effect
    if args.sigma0 is not None:
        params["Sigma0"] = np.loadtxt(args.sigma0, delimiter=",", ndmin=2)
    form = args.form or ("reduced" if name in ("given_trace", "D") else "quadratic")
    try:
        return hyp.build(name, a, d, form, **params)
    except KeyError as exc:
        raise CovTestError(f"missing or unknown hypothesis parameter: {exc}") from None


def _kinds(text):
    kinds = [k.strip().upper() for k in text.split(",") if k.strip()]
    for k in kinds:
        if k not in KINDS:
            raise argparse.ArgumentTypeError(f"unknown statistic {k!r}")
    return kinds


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_test(args):
    samples = ingest(args.data, args.group_col)
    spec = _hypothesis(args, len(samples), samples[0].d)
    method = method_from_name(args.method, B=args.B, M=args.M, weights=args.weights)
    plan = ResamplingPlan(master_seed=args.seed, workers=args.workers)
    results = [run_test(samples, spec, kind, method, plan, alpha=args.alpha)
               for kind in args.statistic]
    _emit(format_tests(results, args.format), args.out)
    return 0


def cmd_ci(args):
    samples = ingest(args.data, args.group_col)
    if len(samples) != 1:
        raise DimensionMismatch(f"ci needs a single group, got {len(samples)}")
    g = samples[0]
    method = method_from_name(args.method, B=args.B, M=args.M, weights=args.weights)
    plan = ResamplingPlan(master_seed=args.seed, workers=args.workers)
    kind = args.statistic[0]
    lo, hi = trace_confidence_interval(g, kind, method, args.alpha, plan)
    point = float(np.trace(empirical_cov(g)[0]))
    record = {"estimate": point, "lower": lo, "upper": hi, "level": 1 - args.alpha,
              "statistic": kind, "method": args.method, "seed": args.seed}
    if args.format == "jsonl":
        text = json.dumps(record) + "\n"
    elif args.format == "csv":
        text = ",".join(record) + "\n" + ",".join(str(v) for v in record.values()) + "\n"
    else:
        text = (f"trace estimate {point:.6g}\n"
                f"{100 * (1 - args.alpha):g}% interval ({lo:.6g}, {hi:.6g})\n")
    _emit(text, args.out)
    return 0


def load_config(path):
    with open(path) as fh:
        payload = yaml.safe_load(fh) or {}
    study = payload.pop("study", None)
    return study, payload


TIMING_KEYS = ("dims", "reps")


def cmd_simulate(args):
    study, payload = load_config(args.config)
    if args.seed is not None:
        payload["seed"] = args.seed
    if args.workers is not None:
        payload["workers"] = args.workers
    if args.full_scale:
        payload["full_scale"] = True
    timing = {k: payload.pop(k) for k in TIMING_KEYS if k in payload}
    cfg = SimConfig.from_dict(payload)
    study = study or ("type1" if cfg.alternative == "none" else "power")
    name = os.path.splitext(os.path.basename(args.config))[0]
    if study == "timing":
        res = timing_study(cfg, dims=tuple(timing.get("dims", (2, 5, 10, 20))),
                           reps=int(timing.get("reps", 5)))
        csv_text, text = timing_csv(res), timing_text(res)
    elif study == "type1":
        res = type1_study(cfg)
        csv_text, text = scenario_csv(res), scenario_text(res)
    elif study == "power":
        res = power_study(cfg)
        csv_text, text = scenario_csv(res), scenario_text(res)
    else:
        raise CovTestError(f"unknown study {study!r}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, f"{name}.csv"), "w") as fh:
            fh.write(csv_text)
        with open(os.path.join(args.out, f"{name}.txt"), "w") as fh:
            fh.write(text)
    sys.stdout.write(csv_text if args.format == "csv" else text)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="covtest", description="Tests of linear hypotheses about covariance matrices.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--data", required=True, help="CSV file with a header row")
        p.add_argument("--group-col", default="group")
        p.add_argument("--statistic", type=_kinds, default=["ATS"],
                       help="comma separated: ats,wts,mats")
        p.add_argument("--method", default="param", choices=["param", "wild", "mc", "chisq"])
        p.add_argument("--weights", default="rademacher", choices=["rademacher", "gaussian"])
        p.add_argument("--B", type=int, default=1000)
        p.add_argument("--M", type=int, default=10000)
        p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out")
        p.add_argument("--format", default="text", choices=["text", "csv", "jsonl"])

    p_test = sub.add_parser("test", help="test a hypothesis on grouped CSV data")
    common(p_test)
    p_test.add_argument("--hypothesis", default="equal_covariances",
                        help="catalog name, scenario letter, or a JSON/YAML file with C and zeta")
    p_test.add_argument("--form", choices=["quadratic", "reduced", "embedded"])
    p_test.add_argument("--gamma", type=float, help="target trace for given_trace")
    p_test.add_argument("--sigma0", help="CSV matrix for given_covariance")
    p_test.add_argument("--levels-b", type=int, help="levels of factor B (two-way layouts)")
    p_test.add_argument("--effect", default="main_A",
                        choices=["main_A", "main_B", "interaction"])
    p_test.set_defaults(func=cmd_test)

    p_ci = sub.add_parser("ci", help="confidence interval for the trace of one group")
    common(p_ci)
    p_ci.set_defaults(func=cmd_ci)

    p_sim = sub.add_parser("simulate", help="run a simulation study from a config file")
    p_sim.add_argument("config")
    p_sim.add_argument("--out", help="directory for <config>.csv and <config>.txt")
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--workers", type=int)
    p_sim.add_argument("--full-scale", action="store_true")
    p_sim.add_argument("--format", default="text", choices=["text", "csv"])
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, GroupTooSmall) as exc:
        print(f"covtest: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DimensionMismatch as exc:
        print(f"covtest: error: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except (CovTestError, OSError, ValueError) as exc:
        print(f"covtest: error: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
