"""Delimited and aligned-text renderings of test and study results."""

import csv
import io
import json

__all__ = ["format_tests", "scenario_csv", "scenario_text", "timing_csv", "timing_text"]

TEST_FIELDS = ("statistic", "value", "p", "method", "B", "seed", "warnings")


def _test_record(res):
    return {"statistic": res.kind, "value": res.statistic, "p": res.p_value,
            "method": res.method, "B": res.replicates, "seed": res.seed,
            "warnings": list(res.warnings)}


def format_tests(results, fmt="text"):
    """Render a list of :class:`~covtest.engine.TestResult` as text, csv or jsonl."""
    records = [_test_record(r) for r in results]
    if fmt == "jsonl":
        return "".join(json.dumps(r) + "\n" for r in records)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=TEST_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow({**r, "warnings": "; ".join(r["warnings"])})
        return buf.getvalue()
    lines = [f"{'test':<12} {'statistic':>14} {'p-value':>10} {'B':>7} {'seed':>6}"]
    for res, r in zip(results, records):
        lines.append(f"{r['method']:<12} {r['value']:>14.6g} {r['p']:>10.4f} "
                     f"{r['B']:>7d} {r['seed']:>6}")
        for note in res.warnings:
            lines.append(f"  warning: {note}")
    return "\n".join(lines) + "\n"


SCENARIO_FIELDS = ("test", "kind", "method", "cell", "sizes", "rate", "se", "n_sim", "elapsed")


def scenario_csv(result):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SCENARIO_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in result.rows:
        w.writerow(row)
    return buf.getvalue()


def _rate(x):
    # rates below one drop the leading zero, e.g. .0518
    return f"{x:.4f}".lstrip("0") if x < 1 else f"{x:.4f}"


def scenario_text(result):
    """Tests as rows, sample sizes (or deltas) as columns."""
    cells = result.cells()
    head = "N" if result.study == "type1" else "delta"
    width = max([len(t) for t in result.tests()] + [len(head)]) + 2
    lines = [f"{head:<{width}}" + "".join(f"{str(c):>9}" for c in cells)]
    lines.append("-" * len(lines[0]))
    for test in result.tests():
        vals = {r["cell"]: r["rate"] for r in result.rows if r["test"] == test}
        lines.append(f"{test:<{width}}" + "".join(f"{_rate(vals[c]):>9}" for c in cells))
    return "\n".join(lines) + "\n"


def timing_csv(result):
    if not result.rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(result.rows[0]), lineterminator="\n")
    w.writeheader()
    for row in result.rows:
        w.writerow(row)
    return buf.getvalue()


def timing_text(result):
    dims = sorted({r["d"] for r in result.rows})
    tests = []
    for r in result.rows:
        if r["test"] not in tests:
            tests.append(r["test"])
    lines = [f"{'d':>4}" + "".join(f"{t:>12}" for t in tests)]
    for d in dims:
        lines.append(f"{d:>4}" + "".join(f"{result.ratio(t, d):>12.4f}" for t in tests))
    return "\n".join(lines) + "\n"
