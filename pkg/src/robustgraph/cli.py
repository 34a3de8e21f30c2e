"""Command-line front end.

Subcommands: ``graph``, ``test2``, ``cpd``, ``simulate``, ``lambda-scan``.
All randomness comes from ``--seed`` (default :data:`DEFAULT_SEED`); the
same invocation writes byte-identical JSON, CSV and SVG. Failures print a
JSON object ``{"schema_version", "error": {"code", "message"}}`` to stderr
and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import numpy as np

from .changepoint import ScanConfig, ScanError, scan
from .data import METRICS, DataError, load_dataset
from .edgecount import STATISTICS
from .graphs import KINDS, GraphError, stats_json, write_edge_list
from .inference import SCHEMA_VERSION, TestConfig, build_graph, two_sample_test
from .simulate import (
    CHANGE_PRESETS,
    PRESETS,
    Arm,
    ChangeSpec,
    Perturbation,
    ScenarioSpec,
    cp_power_accuracy,
    lambda_scan,
    power_estimates,
    preset,
    rejection_table,
)
from .svgplot import write_line_chart

DEFAULT_SEED = 20240601
THREADS_ENV = "ROBUSTGRAPH_THREADS"

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DATA = 4
EXIT_DOMAIN = 5


class CliError(Exception):
    def __init__(self, code: str, message: str, status: int):
        super().__init__(message)
        self.code = code
        self.status = status


def _error_json(code: str, message: str) -> str:
    return json.dumps({"schema_version": SCHEMA_VERSION, "error": {"code": code, "message": message}}, sort_keys=True)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(_error_json("usage", message) + "\n")
        sys.exit(EXIT_USAGE)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _dump_json(payload: dict, path: str | None) -> None:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)


def _write_csv(rows: list[dict], columns: list[str], path: str | None) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_csv_cell(row.get(c)) for c in columns])
    if path in (None, "-"):
        sys.stdout.write(buf.getvalue())
    else:
        with open(path, "w", newline="") as fh:
            fh.write(buf.getvalue())


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def parse_grid(text: str) -> list[float]:
    """Comma list of numbers; ``a,b,...,c`` expands the arithmetic progression."""
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty grid")
    if "..." not in parts:
        return [float(p) for p in parts]
    if len(parts) != 4 or parts[2] != "...":
        raise ValueError("progression grids look like 'a,b,...,c'")
    a, b, c = float(parts[0]), float(parts[1]), float(parts[3])
    step = b - a
    if step <= 0 or c < a:
        raise ValueError("progression must increase")
    n = int(math.floor((c - a) / step + 1e-9))
    return [round(a + k * step, 12) for k in range(n + 1)]


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise CliError("bad_env", f"{THREADS_ENV} must be an integer, got {env!r}", EXIT_USAGE) from exc
    return 1


def _load(path: str, args, label_column=None):
    try:
        return load_dataset(path, header=args.header, label_column=label_column)
    except OSError as exc:
        raise CliError("io_error", f"cannot read {path}: {exc.strerror or exc}", EXIT_IO) from exc


def _test_config(args, **extra) -> TestConfig:
    return TestConfig(
        graph=args.graph,
        K=args.k,
        lam=args.lam,
        statistic=getattr(args, "statistic", "get"),
        pvalue=getattr(args, "pvalue", "asymptotic"),
        B=getattr(args, "B", 1000),
        seed=args.seed,
        alpha=getattr(args, "alpha", 0.05),
        metric=args.metric,
        max_passes=args.max_passes,
        **extra,
    )


def _add_graph_flags(p, default_graph="krnng"):
    p.add_argument("--graph", choices=KINDS, default=default_graph)
    p.add_argument("--k", type=int, default=5, help="neighbors per node / number of spanning trees")
    p.add_argument("--lambda", dest="lam", type=float, default=0.3, help="degree penalty for krnng")
    p.add_argument("--metric", choices=sorted(METRICS), default="euclidean")
    p.add_argument("--max-passes", type=int, default=100)


def _add_common(p):
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--header", action="store_true", help="input CSVs have a header row")


def cmd_graph(args) -> None:
    ds = _load(args.input, args)
    g = build_graph(ds, _test_config(args))
    write_edge_list(g, args.edges)
    text = stats_json(g)
    if args.stats in (None, "-"):
        sys.stdout.write(text + "\n")
    else:
        with open(args.stats, "w", newline="\n") as fh:
            fh.write(text + "\n")


def cmd_test2(args) -> None:
    if args.input:
        if args.x or args.y:
            raise CliError("usage", "give either --input with --label-column or --x and --y", EXIT_USAGE)
        if args.label_column is None:
            raise CliError("usage", "--input needs --label-column", EXIT_USAGE)
        x, y = _load(args.input, args, args.label_column).split()
    else:
        if not (args.x and args.y):
            raise CliError("usage", "need --x and --y (or --input with --label-column)", EXIT_USAGE)
        x, y = _load(args.x, args), _load(args.y, args)
    res = two_sample_test(x, y, _test_config(args))
    _dump_json(res.to_dict(), args.out)
    if res.failed:
        raise CliError("degenerate", res.explanation, EXIT_DOMAIN)


def cmd_cpd(args) -> None:
    seq = _load(args.input, args)
    cfg = ScanConfig(
        graph=args.graph, K=args.k, lam=args.lam, statistic=args.statistic, B=args.B,
        seed=args.seed, alpha=args.alpha, metric=args.metric, max_passes=args.max_passes, w=args.w,
    )
    res = scan(seq, cfg)
    _dump_json(res.to_dict(), args.out)
    if args.curve:
        res.write_curve(args.curve)
    if args.svg:
        write_line_chart(args.svg, {cfg.statistic: (res.ts.tolist(), res.curve.tolist())},
                         title="scan statistic", xlabel="t", ylabel=cfg.statistic)


def _parse_params(items: list[str]) -> dict:
    out = {}
    for item in items:
        key, sep, val = item.partition("=")
        if not sep:
            raise CliError("usage", f"--param expects key=value, got {item!r}", EXIT_USAGE)
        out[key.strip()] = float(val) if key.strip() == "delta" else int(val)
    return out


def _scenario(args, delta=None):
    if args.spec:
        with open(args.spec) as fh:
            obj = json.load(fh)
        return ChangeSpec.from_dict(obj) if "tau" in obj else ScenarioSpec.from_dict(obj)
    if not args.preset:
        raise CliError("usage", "need --preset or --spec", EXIT_USAGE)
    params = _parse_params(args.param)
    if delta is not None:
        params["delta"] = delta
    try:
        return preset(args.preset, **params)
    except KeyError as exc:
        raise CliError("unknown_preset", str(exc.args[0]), EXIT_USAGE) from exc


def cmd_simulate(args) -> None:
    n_jobs = _threads(args)
    deltas = parse_grid(args.deltas) if args.deltas else [None]
    if args.spec and args.deltas:
        raise CliError("usage", "--deltas applies to presets only", EXIT_USAGE)
    graphs = [g.strip() for g in args.graphs.split(",") if g.strip()]
    for g in graphs:
        if g not in KINDS:
            raise CliError("usage", f"unknown graph kind {g!r}", EXIT_USAGE)
    rows = []
    for delta in deltas:
        spec = _scenario(args, delta)
        for g in graphs:
            if isinstance(spec, ChangeSpec):
                cfg = ScanConfig(graph=g, K=args.k, lam=args.lam, statistic=args.statistic, B=args.B,
                                 seed=args.seed, alpha=args.alpha, metric=args.metric, max_passes=args.max_passes)
                est = cp_power_accuracy(spec, cfg, args.reps, seed=args.seed, n_jobs=n_jobs)
                rows.append({"delta": delta, "graph": g, "power": est.power,
                             "power_se": math.sqrt(est.power * (1 - est.power) / est.reps),
                             "accuracy": est.accuracy, "reps": est.reps})
                continue
            cfg = TestConfig(graph=g, K=args.k, lam=args.lam, statistic=args.statistic, pvalue=args.pvalue,
                             B=args.B, seed=args.seed, alpha=args.alpha, metric=args.metric,
                             max_passes=args.max_passes)
            pk = Perturbation(args.perturb, args.perturb_count) if args.perturb else None
            if args.reps < 50:
                raise CliError("usage", "use at least 50 replicates", EXIT_USAGE)
            est = power_estimates(rejection_table(spec, {"arm": Arm(cfg, pk)}, args.reps, args.seed, n_jobs))["arm"]
            rows.append({"delta": delta, "graph": g, "power": est.power, "power_se": est.se, "reps": est.reps})
    cols = ["delta", "graph", "power", "power_se"] + (["accuracy"] if "accuracy" in rows[0] else []) + ["reps"]
    _write_csv(rows, cols, args.out)
    if args.svg:
        series = {}
        for g in graphs:
            sel = [r for r in rows if r["graph"] == g and r["delta"] is not None]
            series[g] = ([r["delta"] for r in sel], [r["power"] for r in sel])
        write_line_chart(args.svg, series, title="estimated power", xlabel="delta", ylabel="power")


def cmd_lambda_scan(args) -> None:
    grid = parse_grid(args.grid)
    if args.input:
        source = _load(args.input, args)
    else:
        source = _scenario(args)
        if isinstance(source, ChangeSpec):
            raise CliError("usage", "lambda-scan needs a two-sample preset", EXIT_USAGE)
    reps = args.reps if args.reps else None
    base = TestConfig(K=args.k, seed=args.seed, alpha=args.alpha, max_passes=args.max_passes)
    rows = lambda_scan(source, grid, args.k, args.seed, reps=reps, cfg=base, n_jobs=_threads(args))
    cols = ["lambda", "max_degree"] + (["power", "power_se"] if reps and "power" in rows[0] else [])
    _write_csv(rows, cols, args.out)
    if args.svg:
        series = {"max degree": ([r["lambda"] for r in rows], [r["max_degree"] for r in rows])}
        write_line_chart(args.svg, series, title="K-RNNG max degree", xlabel="lambda", ylabel="max degree")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="robustgraph", description="Graph-based two-sample tests and change-point scans.")
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker processes for simulations (default ${THREADS_ENV} or 1)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("graph", help="build a similarity graph; write edge list and stats")
    g.add_argument("--input", required=True)
    g.add_argument("--edges", required=True, help="edge-list CSV (1-based ids)")
    g.add_argument("--stats", default=None, help="stats JSON (default stdout)")
    _add_graph_flags(g)
    _add_common(g)
    g.set_defaults(func=cmd_graph)

    t = sub.add_parser("test2", help="two-sample test")
    t.add_argument("--x")
    t.add_argument("--y")
    t.add_argument("--input", help="pooled CSV with a label column")
    t.add_argument("--label-column", default=None)
    t.add_argument("--statistic", choices=STATISTICS, default="get")
    t.add_argument("--pvalue", choices=("asymptotic", "permutation"), default="asymptotic")
    t.add_argument("--B", type=int, default=1000, help="permutations")
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--out", default=None, help="result JSON (default stdout)")
    _add_graph_flags(t)
    _add_common(t)
    t.set_defaults(func=cmd_test2)

    c = sub.add_parser("cpd", help="single change-point scan")
    c.add_argument("--input", required=True)
    c.add_argument("--statistic", choices=STATISTICS, default="get")
    c.add_argument("--B", type=int, default=1000)
    c.add_argument("--alpha", type=float, default=0.05)
    c.add_argument("--w", type=float, default=0.05, help="boundary fraction excluded at each end")
    c.add_argument("--out", default=None)
    c.add_argument("--curve", default=None, help="CSV of the scan curve")
    c.add_argument("--svg", default=None)
    _add_graph_flags(c)
    _add_common(c)
    c.set_defaults(func=cmd_cpd)

    s = sub.add_parser("simulate", help="Monte-Carlo power table")
    s.add_argument("--preset", choices=sorted(PRESETS) + sorted(CHANGE_PRESETS))
    s.add_argument("--spec", help="scenario JSON")
    s.add_argument("--param", action="append", default=[], help="preset override key=value")
    s.add_argument("--deltas", help="delta grid, e.g. 0,0.5,...,2")
    s.add_argument("--graphs", default="krnng,knng")
    s.add_argument("--reps", type=int, default=200)
    s.add_argument("--statistic", choices=STATISTICS, default="get")
    s.add_argument("--pvalue", choices=("asymptotic", "permutation"), default="asymptotic")
    s.add_argument("--B", type=int, default=1000)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--perturb", choices=("random", "outlier", "hub"))
    s.add_argument("--perturb-count", type=int, default=5)
    s.add_argument("--out", default=None, help="power CSV (default stdout)")
    s.add_argument("--svg", default=None)
    _add_graph_flags(s)
    _add_common(s)
    s.set_defaults(func=cmd_simulate)

    ls = sub.add_parser("lambda-scan", help="K-RNNG max degree over a lambda grid")
    ls.add_argument("--input")
    ls.add_argument("--preset", choices=sorted(PRESETS))
    ls.add_argument("--spec")
    ls.add_argument("--param", action="append", default=[])
    ls.add_argument("--grid", required=True)
    ls.add_argument("--k", type=int, default=5)
    ls.add_argument("--reps", type=int, default=0, help="also estimate power (presets only)")
    ls.add_argument("--alpha", type=float, default=0.05)
    ls.add_argument("--max-passes", type=int, default=100)
    ls.add_argument("--out", default=None)
    ls.add_argument("--svg", default=None)
    _add_common(ls)
    ls.set_defaults(func=cmd_lambda_scan)
    return p


def _fail(code: str, exc: Exception) -> int:
    sys.stderr.write(_error_json(code, str(exc)) + "\n")
    return EXIT_DOMAIN


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        args.func(args)
    except CliError as exc:
        sys.stderr.write(_error_json(exc.code, str(exc)) + "\n")
        return exc.status
    except OSError as exc:
        sys.stderr.write(_error_json("io_error", str(exc)) + "\n")
        return EXIT_IO
    except DataError as exc:
        sys.stderr.write(_error_json("data_error", str(exc)) + "\n")
        return EXIT_DATA
    except GraphError as exc:
        return _fail("graph_error", exc)
    except ScanError as exc:
        return _fail("scan_error", exc)
    except ArithmeticError as exc:
        return _fail("degenerate", exc)
    except (ValueError, KeyError) as exc:
        return _fail("invalid_value", exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
