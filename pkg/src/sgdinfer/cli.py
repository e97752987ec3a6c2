"""Command-line entry point: ``simulate``, ``critvals`` and ``infer``.

Machine-readable CSV goes to standard output (or ``--out``); human-readable
summaries go to standard error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import bench
from .core import DimensionError, Observation, SeedSpec, StepSchedule
from .inference import UntabulatedLevelError, confidence_interval, critical_value, simulate_critical_values
from .models import get_model
from .rscale import RandomScaling, ScalarRandomScaling
from .sgd import DivergenceError, sgd_init, sgd_step


class InputError(Exception):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def _int_list(text: str) -> list:
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


def _str_list(text: str) -> list:
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sgdinfer", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="Monte Carlo coverage / length / time study")
    s.add_argument("--model", choices=["linear", "logistic"], default="linear")
    s.add_argument("--d", type=int, default=5)
    s.add_argument("--gamma0", type=float, default=0.5)
    s.add_argument("--a", type=float, default=0.505)
    s.add_argument("--n", type=int, default=100_000)
    s.add_argument("--reps", type=int, default=1000)
    s.add_argument("--methods", type=_str_list, default=["random_scaling", "plugin", "batch_means"])
    s.add_argument("--checkpoints", type=_int_list, default=None, help="comma list; default n")
    s.add_argument("--level", type=float, default=0.95)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--burn-in", type=int, default=None)
    s.add_argument("--threads", type=int, default=1, help="worker processes")
    s.add_argument("--batch-size", type=int, default=500, help="replications advanced together")
    s.add_argument("--batch-anchors", choices=["power", "odd"], default="power")
    s.add_argument("--critical-value", type=float, default=None)
    s.add_argument("--coordinate", type=int, default=1)
    s.add_argument("--preset", choices=["full"], default=None, help="every full-scale design")
    s.add_argument("--jsonl", default=None, help="per-replication dump")
    s.add_argument("--out", default=None)

    c = sub.add_parser("critvals", help="simulate critical values of the pivotal limit")
    c.add_argument("--ell", type=int, default=1)
    c.add_argument("--statistic", choices=["t", "wald"], default="t")
    c.add_argument("--quantiles", type=_float_list, default=[0.9, 0.95, 0.975, 0.99])
    c.add_argument("--paths", type=int, default=200_000)
    c.add_argument("--grid", type=int, default=2000)
    c.add_argument("--seed", type=int, required=True)
    c.add_argument("--threads", type=int, default=1)
    c.add_argument("--out", default=None)

    i = sub.add_parser("infer", help="online inference on a stream of observations")
    i.add_argument("--model", choices=["linear", "logistic"], default="linear")
    i.add_argument("--d", type=int, required=True)
    i.add_argument("--gamma0", type=float, default=0.5)
    i.add_argument("--a", type=float, default=0.505)
    i.add_argument("--level", type=float, default=0.95)
    i.add_argument("--critical-value", type=float, default=None)
    i.add_argument("--report-every", type=int, default=10_000)
    i.add_argument("--coordinate", default="all", help="1-based index or 'all'")
    i.add_argument("--burn-in", type=int, default=0)
    i.add_argument("--format", choices=["csv", "json"], default="csv")
    i.add_argument("--input", default="-", help="path or '-' for standard input")
    return p


def _open_out(path):
    return sys.stdout if path in (None, "-") else open(path, "w", newline="")


def cmd_simulate(args, parser) -> int:
    try:
        if args.preset == "full":
            configs = bench.study_designs(args.reps, args.seed)
        else:
            configs = [
                bench.ExperimentConfig(
                    model=args.model, d=args.d, gamma0=args.gamma0, a=args.a, n=args.n,
                    burn_in=args.burn_in, checkpoints=tuple(args.checkpoints or ()),
                    methods=tuple(args.methods), replications=args.reps, level=args.level,
                    seed=args.seed, target_coordinate=args.coordinate,
                    critical_value=args.critical_value, batch_anchors=args.batch_anchors,
                )  # fmt: skip
            ]
    except (ValueError, UntabulatedLevelError) as exc:
        parser.error(str(exc))
    if args.threads < 1 or args.batch_size < 1:
        parser.error("--threads and --batch-size must be >= 1")

    status = 0
    out = _open_out(args.out)
    dump = open(args.jsonl, "w") if args.jsonl else None
    try:
        for k, cfg in enumerate(configs):
            res = bench.run_experiment(cfg, workers=args.threads, batch_size=args.batch_size)
            if dump:
                bench.write_jsonl(res.records, dump)
            n_div = len(res.diverged)
            if n_div:
                print(f"{cfg.model} d={cfg.d}: {n_div}/{cfg.replications} replications diverged", file=sys.stderr)
            if n_div > 0.01 * cfg.replications:
                status = 1
            if res.records:
                bench.results_csv(cfg, bench.aggregate(res.records), out, header=(k == 0))
            out.flush()
    finally:
        if out is not sys.stdout:
            out.close()
        if dump:
            dump.close()
    if args.out not in (None, "-"):
        with open(args.out + ".meta.json", "w") as fh:
            json.dump({"timing": bench.TIMING_NOTE, "seed": args.seed}, fh, indent=2)
    print(bench.TIMING_NOTE, file=sys.stderr)
    return status


def cmd_critvals(args, parser) -> int:
    try:
        res = simulate_critical_values(
            args.ell, args.quantiles, paths=args.paths, grid=args.grid,
            seed=SeedSpec(args.seed), statistic=args.statistic, threads=args.threads,
        )  # fmt: skip
    except ValueError as exc:
        parser.error(str(exc))
    out = _open_out(args.out)
    try:
        res.to_csv(out)
    finally:
        if out is not sys.stdout:
            out.close()
    for q in sorted(res.values):
        print(f"q={q}: {res.values[q]:.4f} (mc se {res.stderr[q]:.4f})", file=sys.stderr)
    return 0


def _parse_line(line: str, lineno: int, fmt: str):
    try:
        if fmt == "json":
            obj = json.loads(line)
            y, x = obj["y"], obj["x"]
        else:
            vals = [v for v in line.split(",")]
            y, x = vals[0], vals[1:]
        y = float(y)
        x = np.array([float(v) for v in x], dtype=np.float64)
    except (ValueError, KeyError, TypeError, IndexError) as exc:
        raise InputError(lineno, f"malformed observation ({exc})") from None
    if not np.isfinite(y) or not np.all(np.isfinite(x)):
        raise InputError(lineno, "non-finite value")
    return x, y


def run_infer(lines, args, out, err=None) -> int:
    """Stream observations from ``lines`` and write report rows to ``out``."""
    err = sys.stderr if err is None else err
    model = get_model(args.model)
    sched = StepSchedule(args.gamma0, args.a)
    d = args.d
    if args.coordinate == "all":
        coords = list(range(d))
        acc = RandomScaling(d, shift="first")
    else:
        j = int(args.coordinate) - 1
        if not 0 <= j < d:
            raise DimensionError(f"coordinate must be in 1..{d}")
        coords = [j]
        acc = ScalarRandomScaling(j, shift="first")
    cv = args.critical_value if args.critical_value is not None else critical_value(args.level)
    state = sgd_init(np.zeros(d), args.burn_in)
    out.write("t,coordinate,estimate,v_jj,lower,upper\n")

    def report():
        V = acc.finalize()
        for jj in coords:
            v = float(V) if np.ndim(V) == 0 else float(V[jj, jj])
            est = float(state.beta_bar[jj])
            ci = confidence_interval(est, max(v, 0.0), state.avg_count, args.level, cv)
            out.write(f"{state.t},{jj + 1},{est:.10g},{v:.10g},{ci.lower:.10g},{ci.upper:.10g}\n")

    last = -1
    lineno = 0
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        x, y = _parse_line(line, lineno, args.format)
        if x.shape[0] != d:
            raise DimensionError(f"line {lineno}: expected {d} covariates, got {x.shape[0]}")
        try:
            y = float(model.validate_response(y))
        except ValueError as exc:
            raise InputError(lineno, str(exc)) from None
        sgd_step(state, model, Observation(x, y), sched)
        if state.avg_count:
            if isinstance(acc, ScalarRandomScaling):
                acc.update(float(state.beta_bar[coords[0]]))
            else:
                acc.update(state.beta_bar)
            if state.t % args.report_every == 0:
                report()
                last = state.t
    if state.t == 0:
        print("no data", file=err)
        return 0
    if state.avg_count == 0:
        print(f"no estimate: all {state.t} observations fell in the burn-in", file=err)
        return 0
    if last != state.t:
        report()
    print(f"processed {state.t} observations ({state.avg_count} averaged)", file=err)
    return 0


def cmd_infer(args, parser) -> int:
    if args.report_every < 1 or args.d < 1 or args.burn_in < 0:
        parser.error("--report-every and --d must be >= 1, --burn-in >= 0")
    try:
        StepSchedule(args.gamma0, args.a)
        if args.critical_value is None:
            critical_value(args.level)
    except ValueError as exc:
        parser.error(str(exc))
    fh = sys.stdin if args.input == "-" else open(args.input)
    try:
        return run_infer(fh, args, sys.stdout)
    except DimensionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InputError, DivergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        if fh is not sys.stdin:
            fh.close()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"simulate": cmd_simulate, "critvals": cmd_critvals, "infer": cmd_infer}[args.command]
    return handler(args, parser)


if __name__ == "__main__":
    sys.exit(main())
